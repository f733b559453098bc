use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use sdcons_core::certify::{self, ContractionCertificate, GridSpec, Verdict};
use sdcons_core::sim::{self, Controller};
use sdcons_core::synthesis::{self, DesignSpec, GainDesign};
use sdcons_core::{Matrix, PlantModel};

use crate::config::{spectral_envelope, CertifyMode, ExperimentConfig};
use crate::{exit, CertifyArgs, CliError, DesignArgs, MuArgs, SimulateArgs, SweepArgs};

type Result<T> = std::result::Result<T, CliError>;

fn spec_from(hbar: f64, lambda2: f64, lambda_n: f64) -> Result<DesignSpec> {
    DesignSpec::new(hbar, lambda2, lambda_n).map_err(|e| CliError::config(e.to_string()))
}

fn design_from(spec: &DesignSpec, mu: &MuArgs) -> Result<GainDesign> {
    match (mu.mu1, mu.mu2) {
        (Some(m1), Some(m2)) => synthesis::design_with_mu(spec, m1, m2).map_err(|e| CliError::config(e.to_string())),
        _ => Ok(synthesis::design(spec)),
    }
}

#[derive(Serialize)]
struct DesignReport<'a> {
    hbar: f64,
    lambda2: f64,
    lambda_n: f64,
    #[serde(flatten)]
    design: &'a GainDesign,
    gain: [f64; 2],
    gain_rounded: [f64; 2],
}

pub fn design(args: &DesignArgs) -> Result<i32> {
    let spec = spec_from(args.spec.hbar, args.spec.lambda2, args.spec.lambda_n)?;
    let d = design_from(&spec, &args.mu)?;
    let gain = d.gain();
    let rounded = d.rounded_gain(4);
    if args.json {
        let report = DesignReport {
            hbar: spec.hbar,
            lambda2: spec.lambda2,
            lambda_n: spec.lambda_n,
            design: &d,
            gain,
            gain_rounded: rounded,
        };
        println!("{}", serde_json::to_string_pretty(&report).expect("design serializes"));
        return Ok(exit::OK);
    }
    let t = &d.t;
    println!("mu1 = {}", d.mu1);
    println!("mu2 = {}", d.mu2);
    println!("k1 = {}", d.k1);
    println!("k2 = {}", d.k2);
    println!("T = [[{}, {}], [{}, {}]]", t[(0, 0)], t[(0, 1)], t[(1, 0)], t[(1, 1)]);
    println!("K = [{}, {}]", gain[0], gain[1]);
    println!("K (4 dp) = [{}, {}]", rounded[0], rounded[1]);
    println!("recipe = {}", match d.recipe {
        synthesis::GainRecipe::Midpoint => "midpoint",
        synthesis::GainRecipe::Witness => "witness",
    });
    Ok(exit::OK)
}

#[derive(Serialize)]
struct CertifyReport {
    mode: CertifyMode,
    verdict: Verdict,
    hbar: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    band: Option<[f64; 2]>,
    gain: Vec<f64>,
    transform: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
    certificates: Vec<ContractionCertificate>,
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn verdict_code(v: Verdict) -> i32 {
    match v {
        Verdict::Certified => exit::OK,
        Verdict::Refuted => exit::REFUTED,
        Verdict::Inconclusive => exit::INCONCLUSIVE,
    }
}

/// Refuted dominates inconclusive, which dominates certified.
fn combine(vs: impl IntoIterator<Item = Verdict>) -> Verdict {
    vs.into_iter().fold(Verdict::Certified, |acc, v| match (acc, v) {
        (Verdict::Refuted, _) | (_, Verdict::Refuted) => Verdict::Refuted,
        (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
        _ => Verdict::Certified,
    })
}

fn sim_err(e: sim::SimError) -> CliError {
    CliError::from_sim(e)
}

fn certify_err(e: certify::CertifyError) -> CliError {
    CliError::config(e.to_string())
}

pub fn certify(args: &CertifyArgs) -> Result<i32> {
    let plant;
    let controller;
    let hbar;
    let mut digest = None;
    let mut default_report = None;
    let (mode, band, certificates) = if let Some(path) = &args.config {
        let cfg = load_resolved(path)?;
        plant = cfg.plant_model()?;
        controller = cfg.controller()?;
        hbar = cfg.sampling.hbar;
        digest = Some(cfg.digest());
        default_report = Some(cfg.output.dir.join("certificate.json"));
        let mut grid = cfg.certify.grid_spec();
        if let Some(n) = args.grid {
            grid.h_points = n;
            grid.lambda_points = n;
        }
        let pool = cfg.pool()?;
        match cfg.certify.mode {
            CertifyMode::Switching => {
                let (lo, hi) = spectral_envelope(&pool)?;
                let c = sim::certify_controller(&plant, &controller, hbar, lo, hi, &grid).map_err(sim_err)?;
                (CertifyMode::Switching, Some([lo, hi]), vec![c])
            }
            CertifyMode::Fixed => {
                let certs = pool
                    .iter()
                    .map(|g| certify::certify_fixed_graph(&plant, &controller.k, &controller.t, hbar, g, &grid))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(certify_err)?;
                (CertifyMode::Fixed, None, certs)
            }
        }
    } else {
        let (Some(h), Some(l2), Some(ln)) = (args.hbar, args.lambda2, args.lambda_n) else {
            return Err(CliError::config("give --config or all of --hbar, --lambda2, --lambdaN"));
        };
        let spec = spec_from(h, l2, ln)?;
        plant = PlantModel::double_integrator();
        hbar = h;
        controller = match &args.gain {
            None => Controller::from_design(&design_from(&spec, &args.mu)?),
            Some(k) => {
                if k.len() != 2 {
                    return Err(CliError::config("--gain takes exactly two values, `k1,k2`"));
                }
                let (m1, m2) = match (args.mu.mu1, args.mu.mu2) {
                    (Some(a), Some(b)) => (a, b),
                    _ => synthesis::default_mu(&spec),
                };
                if !(0.0 < m1 && m1 < m2) {
                    return Err(CliError::config("need 0 < mu1 < mu2"));
                }
                Controller {
                    k: Matrix::from_rows(&[[k[0], k[1]]]).map_err(|e| CliError::config(e.to_string()))?,
                    t: synthesis::transform_matrix(m1, m2),
                    design: None,
                }
            }
        };
        let grid = GridSpec::square(args.grid.unwrap_or(GridSpec::DEFAULT_POINTS));
        let c = sim::certify_controller(&plant, &controller, hbar, l2, ln, &grid).map_err(sim_err)?;
        (CertifyMode::Switching, Some([l2, ln]), vec![c])
    };

    let verdict = combine(certificates.iter().map(|c| c.verdict));
    let report = CertifyReport {
        mode,
        verdict,
        hbar,
        band,
        gain: controller.k.as_slice().to_vec(),
        transform: rows(&controller.t),
        config_digest: digest,
        certificates,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    let worst = report
        .certificates
        .iter()
        .max_by(|a, b| a.worst_sigma.total_cmp(&b.worst_sigma))
        .expect("at least one certificate");
    let summary = format!(
        "{}: worst sigma {} at h = {}, lambda = {} (margin {})",
        verdict.as_str(),
        worst.worst_sigma,
        worst.worst_h,
        worst.worst_lambda,
        worst.margin
    );
    // stdout carries either the summary or the JSON report, never both
    match args.report.clone().or(default_report) {
        Some(path) => {
            write_file(&path, json.as_bytes())?;
            println!("{summary}");
            eprintln!("report written to {}", path.display());
        }
        None => {
            println!("{json}");
            eprintln!("{summary}");
        }
    }
    Ok(verdict_code(verdict))
}

fn load_resolved(path: &Path) -> Result<ExperimentConfig> {
    let base = path.parent().unwrap_or(Path::new("."));
    ExperimentConfig::load(path)?.resolve(base)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    config: PathBuf,
    config_digest: String,
    seed: u64,
    runs: usize,
    steps: usize,
    forced: bool,
    verdict: Verdict,
    convergence_ratio: f64,
    outputs: Vec<PathBuf>,
    started_unix_ms: u128,
    elapsed_ms: u128,
}

pub fn simulate(args: &SimulateArgs) -> Result<i32> {
    let started = Instant::now();
    let started_unix_ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
    let cfg = load_resolved(&args.config)?;
    if let Some(r) = args.assert_convergence {
        if !(r.is_finite() && r >= 0.0) {
            return Err(CliError::config("--assert-convergence needs a non-negative ratio"));
        }
    }
    let mut sim_cfg = cfg.simulation()?;
    sim_cfg.force = args.force;
    let out = sim::run(&sim_cfg).map_err(sim_err)?;
    if !out.certificate.is_certified() {
        eprintln!("warning: running an uncertified gain ({})", out.certificate.verdict.as_str());
    }

    let dir = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let traj = dir.join("trajectories.csv");
    let agg = dir.join("aggregate.csv");
    let resolved = dir.join("config.resolved.toml");
    let manifest_path = dir.join("manifest.json");

    let mut w = BufWriter::new(fs::File::create(&traj).map_err(|e| CliError::io(&traj, e))?);
    sim::write_trajectories_csv(&mut w, &out.runs, cfg.output.full_state).map_err(sim_err)?;
    w.flush().map_err(|e| CliError::io(&traj, e))?;
    let mut w = BufWriter::new(fs::File::create(&agg).map_err(|e| CliError::io(&agg, e))?);
    sim::write_aggregate_csv(&mut w, &out.aggregate).map_err(sim_err)?;
    w.flush().map_err(|e| CliError::io(&agg, e))?;
    write_file(&resolved, cfg.to_toml()?.as_bytes())?;

    let ratio = out.convergence_ratio();
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: args.config.clone(),
        config_digest: cfg.digest(),
        seed: cfg.batch.seed,
        runs: cfg.batch.runs,
        steps: cfg.schedule.steps,
        forced: args.force,
        verdict: out.certificate.verdict,
        convergence_ratio: ratio,
        outputs: vec![traj, agg, resolved],
        started_unix_ms,
        elapsed_ms: started.elapsed().as_millis(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&manifest_path, json.as_bytes())?;
    println!(
        "{} runs x {} steps: final/initial aggregate disagreement {} (outputs in {})",
        cfg.batch.runs,
        cfg.schedule.steps,
        ratio,
        dir.display()
    );
    if let Some(r) = args.assert_convergence {
        let first = out.aggregate.first().copied().unwrap_or(0.0);
        let last = out.aggregate.last().copied().unwrap_or(0.0);
        if !(last <= r * first) {
            return Err(CliError::new(
                exit::REFUTED,
                format!("convergence assertion failed: final {last} > {r} x initial {first}"),
            ));
        }
    }
    Ok(exit::OK)
}

/// `lo:hi:count` (evenly spaced, endpoints included) or a single value.
pub fn parse_axis(spec: &str) -> Result<Vec<f64>> {
    let bad = || CliError::config(format!("invalid axis `{spec}`; expected lo:hi:count or a value"));
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let values = match parts[..] {
        [v] => vec![num(v)?],
        [lo, hi, n] => {
            let (lo, hi) = (num(lo)?, num(hi)?);
            let n: usize = n.trim().parse().map_err(|_| bad())?;
            if n == 0 || lo > hi {
                Vec::new()
            } else if lo == hi || n == 1 {
                vec![lo]
            } else {
                (0..n).map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect()
            }
        }
        _ => return Err(bad()),
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    if values.is_empty() {
        return Err(CliError::config(format!("axis `{spec}` is empty")));
    }
    Ok(values)
}

pub const SWEEP_HEADER: &str =
    "hbar,lambda2,lambda_n,ratio,mu1,mu2,feasible,recipe,k1,k2,gain_1,gain_2,verdict,worst_sigma,margin";

pub fn sweep(args: &SweepArgs) -> Result<i32> {
    let hbars = parse_axis(&args.hbar)?;
    let ratios = parse_axis(&args.ratio)?;
    let mut grid = GridSpec::default();
    let mut lambda2 = 1.0;
    if let Some(path) = &args.config {
        let cfg = load_resolved(path)?;
        grid = cfg.certify.grid_spec();
        if let Some(spec) = cfg.design_spec()? {
            lambda2 = spec.lambda2;
        }
    }
    if let Some(n) = args.grid {
        grid.h_points = n;
        grid.lambda_points = n;
    }
    if let Some(l) = args.lambda2 {
        lambda2 = l;
    }
    if hbars.iter().any(|h| *h <= 0.0) || ratios.iter().any(|r| *r < 1.0) || lambda2 <= 0.0 {
        return Err(CliError::config("need hbar > 0, ratio >= 1 and lambda2 > 0"));
    }

    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            Box::new(BufWriter::new(fs::File::create(p).map_err(|e| CliError::io(p, e))?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let write_err = |e: io::Error| CliError::config(format!("cannot write sweep output: {e}"));
    writeln!(out, "{SWEEP_HEADER}").map_err(write_err)?;
    for &h in &hbars {
        for &r in &ratios {
            let spec = spec_from(h, lambda2, lambda2 * r)?;
            let (m1, m2) = match (args.mu.mu1, args.mu.mu2) {
                (Some(a), Some(b)) => (a, b),
                _ => synthesis::default_mu(&spec),
            };
            let f = sim::fmt_float;
            let head = format!("{},{},{},{},{},{}", f(h), f(lambda2), f(spec.lambda_n), f(r), f(m1), f(m2));
            let row = match synthesis::design_with_mu(&spec, m1, m2) {
                Ok(d) => {
                    let c = certify::certify_double_integrator_with(&spec, &d, &grid);
                    let [g1, g2] = d.gain();
                    let recipe = match d.recipe {
                        synthesis::GainRecipe::Midpoint => "midpoint",
                        synthesis::GainRecipe::Witness => "witness",
                    };
                    format!(
                        "{head},true,{recipe},{},{},{},{},{},{},{}",
                        f(d.k1),
                        f(d.k2),
                        f(g1),
                        f(g2),
                        c.verdict.as_str(),
                        f(c.worst_sigma),
                        f(c.margin)
                    )
                }
                Err(_) => format!("{head},false,,,,,,infeasible,,"),
            };
            writeln!(out, "{row}").map_err(write_err)?;
        }
    }
    out.flush().map_err(write_err)?;
    Ok(exit::OK)
}
