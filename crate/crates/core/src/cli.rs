//! Subcommands of the `rescap` binary. Each writes its files under the
//! output directory and returns the JSON report it wrote.

use crate::config::RunConfig;
use crate::dynamics::{classify, particular_solution, ParticularSolution, Regime, RegimeReport};
use crate::error::{Error, Result};
use crate::stochastic::{
    capture_probability, integrate_sde, t_epsilon, CaptureOptions, CaptureStats, NoiseStream,
    SdeOptions, StabilityHorizon,
};
use crate::systems::PerturbedSystem;
use crate::trigpoly::{build_averaged, AveragedSystem, CoefficientTable};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Resonance,
    Averaged,
    Classify,
    Simulate,
    Capture,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Resonance => "resonance",
            Command::Averaged => "averaged",
            Command::Classify => "classify",
            Command::Simulate => "simulate",
            Command::Capture => "capture",
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub order: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: RunConfig) -> Result<RunConfig> {
        if let Some(out) = &self.out {
            cfg.output.directory = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.monte_carlo.seed = seed;
        }
        if let Some(n) = self.paths {
            cfg.monte_carlo.n_paths = n;
            cfg.integration.n_paths = n;
        }
        if let Some(order) = self.order {
            cfg.averaging.order = order;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    config: &'a RunConfig,
    result: T,
}

#[derive(Serialize)]
struct ResonanceReport<'a> {
    system: &'a str,
    r0: f64,
    eta: f64,
    kappa: u32,
    varkappa: u32,
    n: u32,
    p: u32,
    s0: f64,
    r_max: f64,
    nu_at_r0: f64,
}

#[derive(Serialize)]
struct AveragedReport<'a> {
    system: &'a str,
    order: usize,
    resonance: crate::systems::Resonance,
    s0: f64,
    tables: Vec<CoefficientTable>,
}

#[derive(Serialize)]
struct PathSummary {
    path_id: usize,
    escape: Option<f64>,
    t_final: f64,
    r_final: f64,
    psi_final: f64,
}

#[derive(Serialize)]
struct SimulateReport {
    regime: Option<Regime>,
    psi0: Option<f64>,
    paths: Vec<PathSummary>,
}

/// Runs `cmd` on an already validated configuration.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Value> {
    let cfg = cfg.resolved()?;
    let dir = cfg.output.directory.clone();
    fs::create_dir_all(&dir)?;
    match cmd {
        Command::Resonance => resonance(&cfg, &dir),
        Command::Averaged => averaged(&cfg, &dir),
        Command::Classify => classify_cmd(&cfg, &dir),
        Command::Simulate => simulate(&cfg, &dir),
        Command::Capture => capture(&cfg, &dir),
    }
}

fn write_report<T: Serialize>(
    dir: &Path,
    cmd: Command,
    cfg: &RunConfig,
    result: T,
) -> Result<Value> {
    let report = Report {
        command: cmd.name(),
        config: cfg,
        result,
    };
    let value = serde_json::to_value(&report).map_err(|e| Error::Numerical(e.to_string()))?;
    let text = serde_json::to_string_pretty(&value).map_err(|e| Error::Numerical(e.to_string()))?;
    fs::write(dir.join(format!("{}.json", cmd.name())), text + "\n")?;
    Ok(value)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn resonance(cfg: &RunConfig, dir: &Path) -> Result<Value> {
    let sys = cfg.build_system()?;
    let res = *sys.resonance();
    if cfg.output.nu_table {
        let mut w = csv_writer(&dir.join("nu.csv"))?;
        w.write_record(["r", "nu"]).map_err(csv_err)?;
        let points = 200;
        for i in 0..points {
            let r = res.r_max * i as f64 / points as f64;
            let nu = sys.nu_derivatives(r, 0)?[0];
            w.write_record([r.to_string(), nu.to_string()])
                .map_err(csv_err)?;
        }
        w.flush()?;
    }
    let result = ResonanceReport {
        system: sys.name(),
        r0: res.r0,
        eta: res.eta,
        kappa: res.kappa,
        varkappa: res.varkappa,
        n: res.n,
        p: res.p,
        s0: sys.phase().s0,
        r_max: res.r_max,
        nu_at_r0: sys.nu_derivatives(res.r0, 0)?[0],
    };
    write_report(dir, Command::Resonance, cfg, result)
}

fn build(cfg: &RunConfig) -> Result<(Box<dyn PerturbedSystem>, AveragedSystem)> {
    let sys = cfg.build_system()?;
    let avg = build_averaged(sys.as_ref(), cfg.averaging.order)?;
    Ok((sys, avg))
}

fn averaged(cfg: &RunConfig, dir: &Path) -> Result<Value> {
    let (_, avg) = build(cfg)?;
    let mut w = csv_writer(&dir.join("lambda.csv"))?;
    w.write_record(["psi", "lambda"]).map_err(csv_err)?;
    let points = cfg.averaging.table_points;
    for i in 0..points {
        let psi = TAU * i as f64 / (points - 1) as f64;
        w.write_record([psi.to_string(), avg.lambda_at(psi).to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    let result = AveragedReport {
        system: &avg.system,
        order: avg.order,
        resonance: avg.resonance,
        s0: avg.s0,
        tables: avg.tables(),
    };
    write_report(dir, Command::Averaged, cfg, result)
}

fn classify_cmd(cfg: &RunConfig, dir: &Path) -> Result<Value> {
    let (_, avg) = build(cfg)?;
    match classify(&avg) {
        Ok(rep) => write_report(dir, Command::Classify, cfg, rep),
        Err(Error::Degenerate { psi0 }) => {
            write_report(
                dir,
                Command::Classify,
                cfg,
                RegimeReport::degenerate(&avg, psi0),
            )?;
            Err(Error::Degenerate { psi0 })
        }
        Err(e) => Err(e),
    }
}

/// Reference solution for the metric: the particular solution when the
/// averaged system locks, otherwise the constant angle of the report.
fn reference(avg: &AveragedSystem, rep: &RegimeReport) -> Result<ParticularSolution> {
    match (rep.regime, rep.psi0, rep.h) {
        (Regime::PhaseLocking, Some(psi0), Some(h)) => particular_solution(avg, psi0, h),
        _ => {
            log::warn!("no locking equilibrium; distances are measured from a constant angle");
            Ok(ParticularSolution {
                order: 1,
                psi0: rep.psi0.unwrap_or(0.0),
                n: avg.resonance.n,
                rho: vec![],
                phi: vec![],
            })
        }
    }
}

fn simulate(cfg: &RunConfig, dir: &Path) -> Result<Value> {
    let (sys, avg) = build(cfg)?;
    let rep = match classify(&avg) {
        Ok(rep) => Some(rep),
        Err(Error::Degenerate { .. }) | Err(Error::AssumptionViolated(_)) => None,
        Err(e) => return Err(e),
    };
    let ps = match &rep {
        Some(r) if r.regime == Regime::PhaseLocking => Some(reference(&avg, r)?),
        _ => None,
    };
    let ig = &cfg.integration;
    let (t0, dt, r) = (
        ig.t0.unwrap_or_default(),
        ig.dt.unwrap_or_default(),
        ig.r.unwrap_or_default(),
    );
    let phi = match ig.psi {
        Some(psi) => {
            let res = sys.resonance();
            psi + res.kappa as f64 * sys.phase().phase(t0)? / res.varkappa as f64
        }
        None => ig.phi,
    };
    let init = sys.from_polar(r, phi.rem_euclid(TAU))?;
    let opts = SdeOptions {
        dt,
        record_stride: ig.record_stride,
        scheme: ig.scheme,
    };
    let seed = cfg.monte_carlo.seed;
    let paths = (0..ig.n_paths)
        .into_par_iter()
        .map(|i| {
            integrate_sde(
                sys.as_ref(),
                init,
                t0,
                ig.t_end,
                &opts,
                &mut NoiseStream::new(seed, i as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let r0 = avg.resonance.r0;
    let mut w = csv_writer(&dir.join("paths.csv"))?;
    w.write_record(["path_id", "t", "x1", "x2", "r", "phi", "psi", "M"])
        .map_err(csv_err)?;
    let mut summaries = Vec::with_capacity(paths.len());
    for (id, path) in paths.iter().enumerate() {
        for i in 0..path.t.len() {
            let t = path.t[i];
            let x = sys.cartesian(path.state[i]);
            let m = match &ps {
                Some(ps) if path.r[i].is_finite() => {
                    let mu = avg.envelope.mu(t)?;
                    ps.metric((path.r[i] - r0) / mu.sqrt(), path.psi[i], mu)
                }
                _ => f64::NAN,
            };
            let row = [
                id as f64,
                t,
                x[0],
                x[1],
                path.r[i],
                path.phi[i],
                path.psi[i],
                m,
            ];
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(csv_err)?;
        }
        let last = path.t.len() - 1;
        summaries.push(PathSummary {
            path_id: id,
            escape: path.escape,
            t_final: path.t[last],
            r_final: path.r[last],
            psi_final: path.psi[last],
        });
    }
    w.flush()?;
    let result = SimulateReport {
        regime: rep.as_ref().map(|r| r.regime),
        psi0: rep.and_then(|r| r.psi0),
        paths: summaries,
    };
    write_report(dir, Command::Simulate, cfg, result)
}

fn capture(cfg: &RunConfig, dir: &Path) -> Result<Value> {
    let stats = capture_stats(cfg)?;
    write_report(dir, Command::Capture, cfg, stats)
}

/// Capture statistics for `cfg` without writing any files.
pub fn capture_stats(cfg: &RunConfig) -> Result<CaptureStats> {
    let cfg = cfg.resolved()?;
    let (sys, avg) = build(&cfg)?;
    let rep = classify(&avg)?;
    let ps = reference(&avg, &rep)?;
    let mc = &cfg.monte_carlo;
    let t_star = mc.t_star.unwrap_or_default();
    let res = sys.resonance();
    let horizon = match mc.horizon {
        Some(h) => StabilityHorizon::Finite(h),
        None if sys.epsilon() == 0.0 => StabilityHorizon::Infinite,
        None => t_epsilon(sys.envelope(), res.p, res.n, sys.epsilon(), mc.l, t_star)?,
    };
    let opts = CaptureOptions {
        n_paths: mc.n_paths,
        delta1: mc.delta1,
        eps2: mc.eps2,
        t_star,
        horizon,
        t_max: mc.t_max,
        dt: cfg.integration.dt.unwrap_or_default(),
        seed: mc.seed,
        sampling: mc.sampling,
        near_identity: mc.near_identity,
        scheme: cfg.integration.scheme,
        workers: mc.workers,
    };
    capture_probability(sys.as_ref(), &avg, &ps, &opts)
}
