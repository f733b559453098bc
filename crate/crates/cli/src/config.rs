//! Experiment configuration: one TOML file per reproducible experiment.
//!
//! ```toml
//! [plant]
//! kind = "double-integrator"
//!
//! [design]            # or [gain] with k = [[k1, k2]] and an optional t
//! lambda2 = 0.3       # band defaults to the topology's band when omitted
//! lambda_n = 6.0
//!
//! [topology.random]   # or [[topology.graphs]] / topology.files
//! agents = 5
//! lambda_lo = 0.3
//! lambda_hi = 6.0
//! pool_size = 5
//!
//! [sampling]
//! hbar = 3.0
//!
//! [schedule]
//! steps = 1000
//! switch_period = 50
//!
//! [batch]
//! runs = 100
//! seed = 2024
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sdcons_core::certify::{GridSpec, PlantModel};
use sdcons_core::graph::{self, RandomGraphRecipe, WeightedDigraph, BALANCE_TOL};
use sdcons_core::sim::{self, Controller, SimulationConfig, TopologySource};
use sdcons_core::synthesis::{self, DesignSpec};
use sdcons_core::Matrix;

use crate::graph_file;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub plant: PlantSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<GainSection>,
    pub topology: TopologySection,
    pub sampling: SamplingSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub batch: BatchSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSection>,
    #[serde(default)]
    pub certify: CertifySection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantKindConfig {
    #[default]
    DoubleIntegrator,
    General,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(default)]
    pub kind: PlantKindConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSection {
    pub k: Vec<Vec<f64>>,
    /// Certifying transform; identity when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub graphs: Vec<GraphSection>,
    /// Graph files, relative to the config file.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSection {
    pub agents: usize,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    #[serde(default = "one")]
    pub pool_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_attempts: Option<usize>,
}

/// Inline graph: `edges` are 1-based `[i, j, w]` with `w` the weight of `j -> i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub agents: usize,
    /// Each listed pair also gets the reverse edge.
    #[serde(default)]
    pub symmetric: bool,
    pub edges: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    pub hbar: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Absent: the first drawn topology is kept for the whole run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_period: Option<usize>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { steps: default_steps(), switch_period: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSection {
    #[serde(default = "one")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for BatchSection {
    fn default() -> Self {
        Self { runs: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// `[lo, hi]` per state component.
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertifyMode {
    /// Every topology with eigenvalues in the pool's band, switching arbitrarily.
    #[default]
    Switching,
    /// Each pool graph on its own, using its exact reduced spectrum.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySection {
    #[serde(default)]
    pub mode: CertifyMode,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_guard")]
    pub guard: f64,
}

impl Default for CertifySection {
    fn default() -> Self {
        Self { mode: CertifyMode::default(), grid: default_grid(), guard: default_guard() }
    }
}

impl CertifySection {
    pub fn grid_spec(&self) -> GridSpec {
        GridSpec { h_points: self.grid, lambda_points: self.grid, guard: self.guard }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub full_state: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir(), full_state: false }
    }
}

fn one() -> usize {
    1
}

fn default_steps() -> usize {
    1000
}

fn default_grid() -> usize {
    GridSpec::DEFAULT_POINTS
}

fn default_guard() -> f64 {
    GridSpec::DEFAULT_GUARD
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("invalid config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::config(format!("cannot serialize config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Fill every default, inline graph files (relative to `base`) and fix the
    /// design band, so the result fully determines an experiment.
    pub fn resolve(&self, base: &Path) -> Result<Self, CliError> {
        let mut r = self.clone();
        for f in std::mem::take(&mut r.topology.files) {
            let path = if f.is_absolute() { f } else { base.join(f) };
            r.topology.graphs.push(graph_file::read(&path)?);
        }
        if r.topology.random.is_some() == !r.topology.graphs.is_empty() {
            return Err(CliError::config("topology needs exactly one of `random` or `graphs`/`files`"));
        }
        if r.sampling.h_min.is_none() {
            r.sampling.h_min = Some(r.sampling.hbar * SimulationConfig::DEFAULT_H_MIN_FRACTION);
        }
        let plant = r.plant_model()?;
        if r.initial.is_none() {
            r.initial = Some(InitialSection { bounds: SimulationConfig::default_initial_bounds(&plant) });
        }
        match (&r.design, &r.gain) {
            (Some(_), Some(_)) => return Err(CliError::config("give either [design] or [gain], not both")),
            (None, None) => r.design = Some(DesignSection::default()),
            _ => {}
        }
        if let Some(d) = r.design.as_mut() {
            if plant.kind() != sdcons_core::PlantKind::DoubleIntegrator {
                return Err(CliError::config("[design] needs the double-integrator plant; use [gain] otherwise"));
            }
            if d.lambda2.is_none() || d.lambda_n.is_none() {
                let (lo, hi) = match &r.topology.random {
                    Some(rs) => (rs.lambda_lo, rs.lambda_hi),
                    None => spectral_envelope(&build_graphs(&r.topology.graphs)?)?,
                };
                d.lambda2.get_or_insert(lo);
                d.lambda_n.get_or_insert(hi);
            }
            if d.mu1.is_some() != d.mu2.is_some() {
                return Err(CliError::config("give both mu1 and mu2 or neither"));
            }
        }
        Ok(r)
    }

    /// SHA-256 over the canonical JSON of the resolved config.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn plant_model(&self) -> Result<PlantModel, CliError> {
        match self.plant.kind {
            PlantKindConfig::DoubleIntegrator => {
                if self.plant.a.is_some() || self.plant.b.is_some() {
                    return Err(CliError::config("the double-integrator plant takes no matrices"));
                }
                Ok(PlantModel::double_integrator())
            }
            PlantKindConfig::General => {
                let (Some(a), Some(b)) = (&self.plant.a, &self.plant.b) else {
                    return Err(CliError::config("a general plant needs matrices `a` and `b`"));
                };
                PlantModel::general(matrix(a, "plant.a")?, matrix(b, "plant.b")?)
                    .map_err(|e| CliError::config(e.to_string()))
            }
        }
    }

    /// Design spec from a resolved config's `[design]` section.
    pub fn design_spec(&self) -> Result<Option<DesignSpec>, CliError> {
        let Some(d) = &self.design else { return Ok(None) };
        let (Some(l2), Some(ln)) = (d.lambda2, d.lambda_n) else {
            return Err(CliError::config("design band unresolved"));
        };
        DesignSpec::new(self.sampling.hbar, l2, ln)
            .map(Some)
            .map_err(|e| CliError::config(e.to_string()))
    }

    pub fn controller(&self) -> Result<Controller, CliError> {
        if let Some(g) = &self.gain {
            let k = matrix(&g.k, "gain.k")?;
            let t = match &g.t {
                Some(t) => matrix(t, "gain.t")?,
                None => Matrix::identity(k.cols()),
            };
            return Ok(Controller { k, t, design: None });
        }
        let spec = self.design_spec()?.expect("resolved config has a design or a gain");
        let d = self.design.as_ref().expect("checked above");
        let dsn = match (d.mu1, d.mu2) {
            (Some(m1), Some(m2)) => {
                synthesis::design_with_mu(&spec, m1, m2).map_err(|e| CliError::config(e.to_string()))?
            }
            _ => synthesis::design(&spec),
        };
        Ok(Controller::from_design(&dsn))
    }

    pub fn topology_source(&self) -> Result<TopologySource, CliError> {
        match &self.topology.random {
            Some(rs) => {
                let mut recipe = RandomGraphRecipe::new(rs.agents, rs.lambda_lo, rs.lambda_hi);
                if let Some(p) = rs.edge_prob {
                    recipe = recipe.with_edge_prob(p);
                }
                if let Some(m) = rs.max_attempts {
                    recipe.max_attempts = m;
                }
                Ok(TopologySource::Random { recipe, pool_size: rs.pool_size })
            }
            None => Ok(TopologySource::Graphs(build_graphs(&self.topology.graphs)?)),
        }
    }

    pub fn simulation(&self) -> Result<SimulationConfig, CliError> {
        let mut cfg = SimulationConfig::new(
            self.plant_model()?,
            self.controller()?,
            self.sampling.hbar,
            self.topology_source()?,
        );
        if let Some(h) = self.sampling.h_min {
            cfg.h_min = h;
        }
        cfg.switch_period = self.schedule.switch_period;
        cfg.steps = self.schedule.steps;
        cfg.runs = self.batch.runs;
        cfg.seed = self.batch.seed;
        if let Some(i) = &self.initial {
            cfg.initial_bounds = i.bounds.clone();
        }
        cfg.record_states = self.output.full_state;
        cfg.grid = self.certify.grid_spec();
        Ok(cfg)
    }

    /// The topology pool as used by a run (random pools come from the master seed).
    pub fn pool(&self) -> Result<Vec<WeightedDigraph>, CliError> {
        sim::resolve_pool(&self.topology_source()?, self.batch.seed).map_err(CliError::from_sim)
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix, CliError> {
    Matrix::from_rows(rows).map_err(|e| CliError::config(format!("{what}: {e}")))
}

pub fn build_graph(g: &GraphSection) -> Result<WeightedDigraph, CliError> {
    let mut edges = Vec::with_capacity(g.edges.len());
    for &(i, j, w) in &g.edges {
        if i == 0 || j == 0 || i > g.agents || j > g.agents {
            return Err(CliError::config(format!("edge ({i}, {j}) outside agents 1..={}", g.agents)));
        }
        edges.push((i - 1, j - 1, w));
        if g.symmetric {
            edges.push((j - 1, i - 1, w));
        }
    }
    WeightedDigraph::from_edges(g.agents, &edges).map_err(|e| CliError::config(e.to_string()))
}

pub fn build_graphs(gs: &[GraphSection]) -> Result<Vec<WeightedDigraph>, CliError> {
    gs.iter().map(build_graph).collect()
}

/// `(min lambda2, max lambdaN)` over balanced graphs with spanning trees.
pub fn spectral_envelope(pool: &[WeightedDigraph]) -> Result<(f64, f64), CliError> {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (i, g) in pool.iter().enumerate() {
        if !g.is_balanced(BALANCE_TOL) {
            return Err(CliError::config(format!(
                "graph {} is not balanced; switching certification needs w_ij = w_ji",
                i + 1
            )));
        }
        if !g.has_spanning_tree() {
            return Err(CliError::config(format!("graph {} has no spanning tree", i + 1)));
        }
        let s = graph::spectrum(g).map_err(|e| CliError::config(e.to_string()))?;
        lo = lo.min(s.lambda2);
        hi = hi.max(s.lambda_n);
    }
    Ok((lo, hi))
}
