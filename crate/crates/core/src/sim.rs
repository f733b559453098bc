//! Exact sampled-data simulation of the agent network.
//!
//! Between sampling instants each agent holds `u_i = K sum_j w_ij (x_j - x_i)`,
//! so the state at the instants evolves exactly as
//! `x_{k+1} = (I ⊗ F(h_k) - L_k ⊗ G(h_k) K) x_k`.

use std::io::{self, Write};

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{self, CertifyError, ContractionCertificate, GridSpec, LambdaSet, PlantKind, PlantModel};
use crate::graph::{self, GraphError, RandomGraphRecipe, ReductionBasis, WeightedDigraph, BALANCE_TOL};
use crate::numerics::{Matrix, NumericsError};
use crate::synthesis::{DesignSpec, GainDesign};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("gain is not certified for this configuration ({}); pass force to run anyway", .0.verdict.as_str())]
    Uncertified(Box<ContractionCertificate>),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Stacked states of all agents, agent-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    agents: usize,
    dim: usize,
    x: Vec<f64>,
}

impl NetworkState {
    pub fn new(agents: usize, dim: usize, x: Vec<f64>) -> Result<Self> {
        if agents == 0 || dim == 0 || x.len() != agents * dim {
            return Err(SimError::Shape(format!(
                "{} values for {agents} agents of dimension {dim}",
                x.len()
            )));
        }
        Ok(Self { agents, dim, x })
    }

    /// Every agent in the same state `s`.
    pub fn consensus(agents: usize, s: &[f64]) -> Self {
        let x = (0..agents).flat_map(|_| s.iter().copied()).collect();
        Self { agents, dim: s.len(), x }
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn max_abs(&self) -> f64 {
        self.x.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Agent `i` of the result is agent `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let x = perm.iter().flat_map(|&p| self.agent(p).iter().copied()).collect();
        Self { agents: self.agents, dim: self.dim, x }
    }
}

fn check_step_shapes(state: &NetworkState, g: &WeightedDigraph, k: &Matrix, plant: &PlantModel) -> Result<()> {
    if g.agents() != state.agents {
        return Err(SimError::Shape(format!("graph has {} agents, state {}", g.agents(), state.agents)));
    }
    if state.dim != plant.states() {
        return Err(SimError::Shape("state dimension does not match the plant".into()));
    }
    if k.shape() != (plant.inputs(), plant.states()) {
        return Err(SimError::Shape("gain shape does not match the plant".into()));
    }
    Ok(())
}

fn step_with(state: &NetworkState, g: &WeightedDigraph, f: &Matrix, gk: &Matrix) -> NetworkState {
    let (agents, n) = (state.agents, state.dim);
    let w = g.weights();
    let mut next = vec![0.0; agents * n];
    let mut diff = vec![0.0; n];
    for i in 0..agents {
        let xi = state.agent(i);
        diff.iter_mut().for_each(|d| *d = 0.0);
        for (j, &wij) in w.row(i).iter().enumerate() {
            if wij == 0.0 {
                continue;
            }
            let xj = state.agent(j);
            for s in 0..n {
                diff[s] += wij * (xj[s] - xi[s]);
            }
        }
        let out = &mut next[i * n..(i + 1) * n];
        for r in 0..n {
            let mut v = 0.0;
            for c in 0..n {
                v += f[(r, c)] * xi[c] + gk[(r, c)] * diff[c];
            }
            out[r] = v;
        }
    }
    NetworkState { agents, dim: n, x: next }
}

/// One sampling interval, agent-wise:
/// `x_i+ = F(h) x_i + G(h) K sum_j w_ij (x_j - x_i)`.
pub fn step(state: &NetworkState, g: &WeightedDigraph, k: &Matrix, h: f64, plant: &PlantModel) -> Result<NetworkState> {
    check_step_shapes(state, g, k, plant)?;
    let (f, gm) = plant.discretize(h)?;
    let gk = gm.matmul(k)?;
    Ok(step_with(state, g, &f, &gk))
}

fn kronecker_step_with(state: &NetworkState, g: &WeightedDigraph, f: &Matrix, gk: &Matrix) -> Result<NetworkState> {
    let phi = Matrix::identity(state.agents).kron(f).sub(&graph::laplacian(g).kron(gk))?;
    let x = phi.matvec(&state.x)?;
    Ok(NetworkState { agents: state.agents, dim: state.dim, x })
}

/// Same step via the assembled `(I_N ⊗ F(h) - L ⊗ G(h) K)`.
pub fn step_kronecker(
    state: &NetworkState,
    g: &WeightedDigraph,
    k: &Matrix,
    h: f64,
    plant: &PlantModel,
) -> Result<NetworkState> {
    check_step_shapes(state, g, k, plant)?;
    let (f, gm) = plant.discretize(h)?;
    kronecker_step_with(state, g, &f, &gm.matmul(k)?)
}

/// Uniform draw from `[h_min, hbar)`.
pub fn sample_interval<R: Rng + ?Sized>(rng: &mut R, h_min: f64, hbar: f64) -> f64 {
    rng.random_range(h_min..hbar)
}

/// Largest absolute difference between any two agents in any component.
pub fn disagreement(state: &NetworkState) -> Result<f64> {
    if state.agents < 2 {
        return Err(SimError::Shape("disagreement needs at least 2 agents".into()));
    }
    let mut worst: f64 = 0.0;
    for s in 0..state.dim {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..state.agents {
            let v = state.x[i * state.dim + s];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        worst = worst.max(hi - lo);
    }
    Ok(worst)
}

fn reduced_norm_with(state: &NetworkState, basis: &ReductionBasis, t_inv: &Matrix) -> f64 {
    let n = state.dim;
    let xi = basis.project(&state.x, n);
    let mut sq = 0.0;
    for block in xi.chunks(n) {
        for r in 0..n {
            let v: f64 = (0..n).map(|c| t_inv[(r, c)] * block[c]).sum();
            sq += v * v;
        }
    }
    sq.sqrt()
}

/// `|(I ⊗ T^{-1}) (Mbar^T ⊗ I) x|`: zero exactly when all agents agree.
pub fn reduced_norm(state: &NetworkState, basis: &ReductionBasis, t: &Matrix) -> Result<f64> {
    if basis.agents() != state.agents {
        return Err(SimError::Shape("basis does not match agent count".into()));
    }
    if t.shape() != (state.dim, state.dim) {
        return Err(SimError::Shape("transform does not match state dimension".into()));
    }
    Ok(reduced_norm_with(state, basis, &t.inverse()?))
}

/// Where the switching topologies come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TopologySource {
    Graphs(Vec<WeightedDigraph>),
    /// `pool_size` graphs drawn once per batch from the master seed.
    Random { recipe: RandomGraphRecipe, pool_size: usize },
}

/// Gain, its certifying transform, and the design it came from (if any).
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub k: Matrix,
    pub t: Matrix,
    pub design: Option<GainDesign>,
}

impl Controller {
    pub fn from_design(d: &GainDesign) -> Self {
        Self { k: d.k.clone(), t: d.t.clone(), design: Some(d.clone()) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub plant: PlantModel,
    pub controller: Controller,
    pub hbar: f64,
    pub h_min: f64,
    pub topology: TopologySource,
    /// Steps between topology switches; `None` keeps the first draw.
    pub switch_period: Option<usize>,
    pub steps: usize,
    pub runs: usize,
    pub seed: u64,
    /// Uniform bounds per state component for the initial draw.
    pub initial_bounds: Vec<(f64, f64)>,
    /// Run even when the gain is not certified.
    pub force: bool,
    pub record_states: bool,
    /// Also advance with the assembled Kronecker form and track the gap.
    pub verify_kronecker: bool,
    /// Grid behind the pre-run certificate.
    pub grid: GridSpec,
}

impl SimulationConfig {
    pub const DEFAULT_H_MIN_FRACTION: f64 = 1e-3;

    pub fn default_initial_bounds(plant: &PlantModel) -> Vec<(f64, f64)> {
        match plant.kind() {
            PlantKind::DoubleIntegrator => vec![(-10.0, 10.0), (-1.0, 1.0)],
            PlantKind::General => vec![(-10.0, 10.0); plant.states()],
        }
    }

    pub fn new(plant: PlantModel, controller: Controller, hbar: f64, topology: TopologySource) -> Self {
        let initial_bounds = Self::default_initial_bounds(&plant);
        Self {
            plant,
            controller,
            hbar,
            h_min: hbar * Self::DEFAULT_H_MIN_FRACTION,
            topology,
            switch_period: None,
            steps: 1000,
            runs: 1,
            seed: 0,
            initial_bounds,
            force: false,
            record_states: false,
            verify_kronecker: false,
            grid: GridSpec::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.h_min > 0.0 && self.h_min < self.hbar && self.hbar.is_finite()) {
            return Err(SimError::Config(format!("need 0 < h_min < hbar, got {} and {}", self.h_min, self.hbar)));
        }
        if self.steps == 0 || self.runs == 0 {
            return Err(SimError::Config("steps and runs must be at least 1".into()));
        }
        if self.switch_period == Some(0) {
            return Err(SimError::Config("switch period must be at least 1".into()));
        }
        if self.initial_bounds.len() != self.plant.states() {
            return Err(SimError::Config("one initial bound per state component".into()));
        }
        if self.initial_bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
            return Err(SimError::Config("initial bounds must be finite with lo <= hi".into()));
        }
        let c = &self.controller;
        if c.k.shape() != (self.plant.inputs(), self.plant.states()) {
            return Err(SimError::Shape("gain shape does not match the plant".into()));
        }
        if c.t.shape() != (self.plant.states(), self.plant.states()) {
            return Err(SimError::Shape("transform shape does not match the plant".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    /// Interval from `t_k` to `t_{k+1}`; 0 on the final row.
    pub h: f64,
    pub topology: usize,
    pub delta: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: usize,
    pub steps: Vec<StepRecord>,
    pub states: Option<Vec<Vec<f64>>>,
    /// Largest absolute agent-wise vs Kronecker discrepancy over all steps.
    pub max_form_gap: Option<f64>,
}

impl RunRecord {
    /// True when `nu` decreases strictly at every step until it drops below `floor`.
    pub fn nu_strictly_decreasing(&self, floor: f64) -> bool {
        self.steps.windows(2).all(|w| w[0].nu < floor || w[1].nu < w[0].nu)
    }
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub certificate: ContractionCertificate,
    pub pool: Vec<WeightedDigraph>,
    /// `(lambda2, lambdaN)` of each pool graph.
    pub pool_spectra: Vec<(f64, f64)>,
    pub runs: Vec<RunRecord>,
    /// Max over runs of `delta_k`, per step.
    pub aggregate: Vec<f64>,
}

impl BatchResult {
    pub fn convergence_ratio(&self) -> f64 {
        let first = self.aggregate.first().copied().unwrap_or(0.0);
        let last = self.aggregate.last().copied().unwrap_or(0.0);
        if first == 0.0 {
            0.0
        } else {
            last / first
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Resolve the topology pool; random pools use stream 0 of the master seed.
pub fn resolve_pool(source: &TopologySource, seed: u64) -> Result<Vec<WeightedDigraph>> {
    match source {
        TopologySource::Graphs(gs) => Ok(gs.clone()),
        TopologySource::Random { recipe, pool_size } => {
            if *pool_size == 0 {
                return Err(SimError::Config("pool size must be at least 1".into()));
            }
            let mut rng = stream_rng(seed, 0);
            (0..*pool_size)
                .map(|_| graph::random_balanced_graph_with(recipe, &mut rng).map_err(SimError::from))
                .collect()
        }
    }
}

/// Certify the controller over `(0, hbar] x [lambda2, lambda_n]`: exactly for
/// an unmodified double-integrator design, on `grid` otherwise.
pub fn certify_controller(
    plant: &PlantModel,
    controller: &Controller,
    hbar: f64,
    lambda2: f64,
    lambda_n: f64,
    grid: &GridSpec,
) -> Result<ContractionCertificate> {
    match (&controller.design, plant.kind()) {
        (Some(d), PlantKind::DoubleIntegrator) if d.k == controller.k && d.t == controller.t => {
            let spec = DesignSpec::new(hbar, lambda2, lambda_n)
                .map_err(|e| SimError::Config(e.to_string()))?;
            Ok(certify::certify_double_integrator_with(&spec, d, grid))
        }
        _ => Ok(certify::certify_grid(
            plant,
            &controller.k,
            &controller.t,
            hbar,
            &LambdaSet::Interval { lo: lambda2, hi: lambda_n },
            grid,
        )?),
    }
}

/// Run the batch. Every pool graph must be balanced with a spanning tree.
pub fn run(config: &SimulationConfig) -> Result<BatchResult> {
    config.validate()?;
    let pool = resolve_pool(&config.topology, config.seed)?;
    if pool.is_empty() {
        return Err(SimError::Config("topology pool is empty".into()));
    }
    let agents = pool[0].agents();
    let mut pool_spectra = Vec::with_capacity(pool.len());
    for (i, g) in pool.iter().enumerate() {
        if g.agents() != agents {
            return Err(SimError::Config(format!("pool graph {i} has {} agents, expected {agents}", g.agents())));
        }
        if !g.is_balanced(BALANCE_TOL) {
            return Err(SimError::Config(format!("pool graph {i} is not balanced")));
        }
        if !g.has_spanning_tree() {
            return Err(SimError::Config(format!("pool graph {i} has no spanning tree")));
        }
        let s = graph::spectrum(g)?;
        pool_spectra.push((s.lambda2, s.lambda_n));
    }
    let lambda2 = pool_spectra.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let lambda_n = pool_spectra.iter().map(|s| s.1).fold(0.0, f64::max);
    let certificate = certify_controller(&config.plant, &config.controller, config.hbar, lambda2, lambda_n, &config.grid)?;
    if !certificate.is_certified() && !config.force {
        return Err(SimError::Uncertified(Box::new(certificate)));
    }

    let basis = graph::reduction_basis(agents)?;
    let t_inv = config.controller.t.inverse()?;
    let runs: Vec<RunRecord> = (0..config.runs)
        .into_par_iter()
        .map(|run_id| simulate_one(config, &pool, &basis, &t_inv, run_id))
        .collect::<Result<_>>()?;

    let aggregate = (0..=config.steps)
        .map(|k| runs.iter().map(|r| r.steps[k].delta).fold(0.0, f64::max))
        .collect();
    Ok(BatchResult { certificate, pool, pool_spectra, runs, aggregate })
}

fn simulate_one(
    config: &SimulationConfig,
    pool: &[WeightedDigraph],
    basis: &ReductionBasis,
    t_inv: &Matrix,
    run_id: usize,
) -> Result<RunRecord> {
    let mut rng = stream_rng(config.seed, run_id as u64 + 1);
    let agents = pool[0].agents();
    let n = config.plant.states();
    let x0: Vec<f64> = (0..agents)
        .flat_map(|_| config.initial_bounds.clone())
        .map(|(lo, hi)| if lo == hi { lo } else { rng.random_range(lo..hi) })
        .collect();
    let mut state = NetworkState::new(agents, n, x0)?;
    let mut steps = Vec::with_capacity(config.steps + 1);
    let mut states = config.record_states.then(Vec::new);
    let mut gap: Option<f64> = config.verify_kronecker.then_some(0.0);
    let mut topology = 0;
    let mut t = 0.0;
    for k in 0..config.steps {
        let switch = match config.switch_period {
            Some(p) => k % p == 0,
            None => k == 0,
        };
        if switch {
            topology = rng.random_range(0..pool.len());
        }
        let h = sample_interval(&mut rng, config.h_min, config.hbar);
        steps.push(StepRecord {
            k,
            t,
            h,
            topology,
            delta: disagreement(&state)?,
            nu: reduced_norm_with(&state, basis, t_inv),
        });
        if let Some(s) = states.as_mut() {
            s.push(state.x.clone());
        }
        let g = &pool[topology];
        let (f, gm) = config.plant.discretize(h)?;
        let gk = gm.matmul(&config.controller.k)?;
        let next = step_with(&state, g, &f, &gk);
        if let Some(worst) = gap.as_mut() {
            let kron = kronecker_step_with(&state, g, &f, &gk)?;
            let d = next.x.iter().zip(&kron.x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            *worst = worst.max(d);
        }
        state = next;
        t += h;
    }
    steps.push(StepRecord {
        k: config.steps,
        t,
        h: 0.0,
        topology,
        delta: disagreement(&state)?,
        nu: reduced_norm_with(&state, basis, t_inv),
    });
    if let Some(s) = states.as_mut() {
        s.push(state.x.clone());
    }
    Ok(RunRecord { run_id, steps, states, max_form_gap: gap })
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}

/// One row per step per run:
/// `run_id,k,t_k,h_k,topology_id,delta_k,nu_k[,x<agent>_<component>...]`.
pub fn write_trajectories_csv<W: Write>(mut w: W, runs: &[RunRecord], full_state: bool) -> Result<()> {
    let mut header = String::from("run_id,k,t_k,h_k,topology_id,delta_k,nu_k");
    let width = runs
        .iter()
        .find_map(|r| r.states.as_ref().and_then(|s| s.first().map(Vec::len)))
        .unwrap_or(0);
    if full_state && width == 0 {
        return Err(SimError::Config("full-state output requested but states were not recorded".into()));
    }
    if full_state {
        for c in 0..width {
            header.push_str(&format!(",x{c}"));
        }
    }
    writeln!(w, "{header}")?;
    for r in runs {
        for (i, s) in r.steps.iter().enumerate() {
            write!(
                w,
                "{},{},{},{},{},{},{}",
                r.run_id,
                s.k,
                fmt_float(s.t),
                fmt_float(s.h),
                s.topology,
                fmt_float(s.delta),
                fmt_float(s.nu)
            )?;
            if full_state {
                let xs = &r.states.as_ref().expect("recorded")[i];
                for v in xs {
                    write!(w, ",{}", fmt_float(*v))?;
                }
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// `k,max_delta_k`.
pub fn write_aggregate_csv<W: Write>(mut w: W, aggregate: &[f64]) -> Result<()> {
    writeln!(w, "k,max_delta_k")?;
    for (k, d) in aggregate.iter().enumerate() {
        writeln!(w, "{k},{}", fmt_float(*d))?;
    }
    Ok(())
}
