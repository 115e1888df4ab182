//! Itô path simulation with reproducible noise, the resonance metric, the
//! stability horizon and Monte Carlo capture statistics.

use crate::dynamics::ParticularSolution;
use crate::envelope::DecayEnvelope;
use crate::error::{Error, Result};
use crate::systems::PerturbedSystem;
use crate::trigpoly::AveragedSystem;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Two-sided 97.5% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Stream ids at or above this offset carry initial-condition draws.
const INIT_STREAMS: u64 = 1 << 63;

/// Counter-based Gaussian increments for one path. Step `i` always consumes
/// the same four 32-bit words, so any step can be reached by seeking.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    index: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        Self { seed, index, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// Positions the stream at the start of step `step`.
    pub fn seek(&mut self, step: u64) {
        self.rng.set_word_pos(4 * step as u128);
    }

    /// Uniform on `(0, 1]`.
    fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Pair of independent standard normals (Box-Muller).
    pub fn normals(&mut self) -> [f64; 2] {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let rad = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        [rad * c, rad * s]
    }

    /// Wiener increments over a step of length `dt`.
    pub fn increments(&mut self, dt: f64) -> [f64; 2] {
        let z = self.normals();
        let s = dt.sqrt();
        [s * z[0], s * z[1]]
    }

    /// A pair of uniforms on `(0, 1]`.
    pub fn uniforms(&mut self) -> [f64; 2] {
        [self.uniform(), self.uniform()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub t: Vec<f64>,
    pub state: Vec<[f64; 2]>,
    pub r: Vec<f64>,
    pub phi: Vec<f64>,
    /// Continuous phase shift `phi - kappa S / varkappa`.
    pub psi: Vec<f64>,
    /// Time at which the path left the simulation guard.
    pub escape: Option<f64>,
}

/// Time-stepping rule of the path integrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdeScheme {
    #[default]
    EulerMaruyama,
    /// Heun predictor-corrector on the drift, diffusion at the left point.
    /// Itô-consistent; second order on the noise-free part.
    DriftHeun,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeOptions {
    pub dt: f64,
    /// Record every `stride` steps; the endpoints are always kept.
    pub record_stride: usize,
    pub scheme: SdeScheme,
}

/// Default step `1e-3 (2 pi / s0)`.
pub fn default_dt(sys: &dyn PerturbedSystem) -> f64 {
    1e-3 * TAU / sys.phase().s0
}

fn unwrap_near(x: f64, reference: f64) -> f64 {
    x - TAU * ((x - reference) / TAU).round()
}

/// `psi = phi - kappa S(t) / varkappa`, continued from `prev` when given.
fn phase_shift(sys: &dyn PerturbedSystem, phi: f64, t: f64, prev: Option<f64>) -> Result<f64> {
    let res = sys.resonance();
    let raw = phi - res.kappa as f64 * sys.phase().phase(t)? / res.varkappa as f64;
    Ok(match prev {
        Some(p) => unwrap_near(raw, p),
        None => (raw + PI).rem_euclid(TAU) - PI,
    })
}

struct Recorder {
    path: SamplePath,
}

impl Recorder {
    fn push(&mut self, sys: &dyn PerturbedSystem, t: f64, state: [f64; 2]) -> Result<()> {
        let (r, phi) = sys.to_polar(state)?;
        let psi = phase_shift(sys, phi, t, self.path.psi.last().copied())?;
        let p = &mut self.path;
        p.t.push(t);
        p.state.push(state);
        p.r.push(r);
        p.phi.push(phi);
        p.psi.push(psi);
        Ok(())
    }
}

fn em_step(
    sys: &dyn PerturbedSystem,
    scheme: SdeScheme,
    x: [f64; 2],
    t: f64,
    dt: f64,
    dw: [f64; 2],
) -> Result<[f64; 2]> {
    let a = sys.drift(x, t)?;
    let b = sys.diffusion(x, t)?;
    let noise = [
        b[0][0] * dw[0] + b[0][1] * dw[1],
        b[1][0] * dw[0] + b[1][1] * dw[1],
    ];
    let pred = [x[0] + a[0] * dt + noise[0], x[1] + a[1] * dt + noise[1]];
    match scheme {
        SdeScheme::EulerMaruyama => Ok(pred),
        SdeScheme::DriftHeun => {
            if !(pred[0].is_finite() && pred[1].is_finite()) {
                return Ok(pred);
            }
            let c = sys.drift(pred, t + dt)?;
            Ok([
                x[0] + 0.5 * (a[0] + c[0]) * dt + noise[0],
                x[1] + 0.5 * (a[1] + c[1]) * dt + noise[1],
            ])
        }
    }
}

fn check_grid(t0: f64, t_end: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter("step must be positive".into()));
    }
    if !(t_end >= t0) {
        return Err(Error::InvalidParameter(
            "end time must not precede the start".into(),
        ));
    }
    Ok(())
}

/// Euler-Maruyama path of `sys` from the chart state `init` at `t0`.
pub fn integrate_sde(
    sys: &dyn PerturbedSystem,
    init: [f64; 2],
    t0: f64,
    t_end: f64,
    opts: &SdeOptions,
    stream: &mut NoiseStream,
) -> Result<SamplePath> {
    check_grid(t0, t_end, opts.dt)?;
    if !sys.in_domain(init) {
        return Err(Error::domain(
            init[0],
            "initial state outside the simulation domain".to_string(),
        ));
    }
    let steps = ((t_end - t0) / opts.dt).ceil() as u64;
    let mut rec = Recorder {
        path: SamplePath {
            t: vec![],
            state: vec![],
            r: vec![],
            phi: vec![],
            psi: vec![],
            escape: None,
        },
    };
    rec.push(sys, t0, init)?;
    let mut x = init;
    stream.seek(0);
    for i in 0..steps {
        let t = t0 + i as f64 * opts.dt;
        let h = opts.dt.min(t_end - t);
        let dw = stream.increments(opts.dt);
        let scale = (h / opts.dt).sqrt();
        x = em_step(sys, opts.scheme, x, t, h, [dw[0] * scale, dw[1] * scale])?;
        let tn = if i + 1 == steps {
            t_end
        } else {
            t0 + (i + 1) as f64 * opts.dt
        };
        if !(x[0].is_finite() && x[1].is_finite()) {
            return Err(Error::BlowUp { t: tn });
        }
        if !sys.in_domain(x) {
            rec.path.escape = Some(tn);
            if rec.push(sys, tn, x).is_err() {
                let p = &mut rec.path;
                p.t.push(tn);
                p.state.push(x);
                p.r.push(f64::NAN);
                p.phi.push(f64::NAN);
                p.psi.push(f64::NAN);
            }
            break;
        }
        let stride = opts.record_stride.max(1) as u64;
        if (i + 1) % stride == 0 || i + 1 == steps {
            rec.push(sys, tn, x)?;
        }
    }
    Ok(rec.path)
}

/// Weighted distance of `(rho, psi)` from the particular solution at time `t`.
pub fn resonance_metric(
    avg: &AveragedSystem,
    ps: &ParticularSolution,
    rho: f64,
    psi: f64,
    t: f64,
) -> Result<f64> {
    Ok(ps.metric(rho, psi, avg.envelope.mu(t)?))
}

/// Length of the window over which capture persists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityHorizon {
    Infinite,
    Finite(f64),
}

impl StabilityHorizon {
    pub fn finite(self) -> Option<f64> {
        match self {
            Self::Finite(t) => Some(t),
            Self::Infinite => None,
        }
    }
}

/// Root `T` of `zeta_{2p-n}(t_star, t_star + T) = eps^(-2(1-l))`, or
/// `Infinite` when `mu^((2p-n)/2)` is integrable.
pub fn t_epsilon(
    env: &DecayEnvelope,
    p: u32,
    n: u32,
    eps: f64,
    l: f64,
    t_star: f64,
) -> Result<StabilityHorizon> {
    if !(l > 0.0 && l < 1.0) {
        return Err(Error::domain(l, "l must lie in (0, 1)".to_string()));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    let h = 2 * p as i32 - n as i32;
    env.eval(t_star)?;
    if !env.zeta_diverges(h) {
        return Ok(StabilityHorizon::Infinite);
    }
    let target = eps.powf(-2.0 * (1.0 - l));
    let z = |dt: f64| -> Result<f64> { Ok(env.zeta(h, t_star, t_star + dt)?.value) };
    let (mut lo, mut hi) = (0.0, 1.0);
    while z(hi)? < target {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Numerical(
                "stability horizon bracket overflow".into(),
            ));
        }
    }
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if z(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(StabilityHorizon::Finite(0.5 * (lo + hi)))
}

/// Wilson score interval for `k` successes out of `n` at the 95% level.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (nf, p) = (n as f64, k as f64 / n as f64);
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = Z_95 / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if k == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let hi = if k >= n {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSampling {
    /// Uniform in the M-ball.
    Ball,
    /// Uniform on its boundary circle.
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureOptions {
    pub n_paths: usize,
    pub delta1: f64,
    pub eps2: f64,
    pub t_star: f64,
    pub horizon: StabilityHorizon,
    /// Simulated window used when the horizon is infinite.
    pub t_max: f64,
    pub dt: f64,
    pub seed: u64,
    pub sampling: InitialSampling,
    /// Map simulated variables through the inverse near-identity change.
    pub near_identity: bool,
    pub scheme: SdeScheme,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureStats {
    pub n_paths: usize,
    pub n_captured: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub delta1: f64,
    pub eps2: f64,
    /// Simulated window length after `t_star`.
    pub horizon: f64,
    pub horizon_clamped: bool,
    pub seed: u64,
    pub n_escaped: usize,
    /// Per-path outcome in path order.
    pub outcomes: Vec<PathOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    pub captured: bool,
    pub sup_m: f64,
    pub escape: Option<f64>,
}

/// Chart state at `t` for the point at M-coordinates `(u, v)` around the particular solution.
pub fn state_from_metric_offset(
    sys: &dyn PerturbedSystem,
    avg: &AveragedSystem,
    ps: &ParticularSolution,
    u: f64,
    v: f64,
    t: f64,
) -> Result<[f64; 2]> {
    let mu = avg.envelope.mu(t)?;
    let (rs, pss) = ps.at(mu);
    let rho = rs + u * mu.powf((ps.n as f64 - 1.0) / 2.0);
    let psi = pss + v;
    let res = sys.resonance();
    let r = res.r0 + mu.sqrt() * rho;
    let phi = psi + res.kappa as f64 * sys.phase().phase(t)? / res.varkappa as f64;
    sys.from_polar(r, phi.rem_euclid(TAU))
}

/// Averaged-frame `(rho, psi)` of a polar point at time `t`.
fn rho_psi(
    avg: &AveragedSystem,
    sys: &dyn PerturbedSystem,
    r: f64,
    psi: f64,
    t: f64,
    near_identity: bool,
) -> Result<(f64, f64)> {
    let mu = avg.envelope.mu(t)?;
    let rho = (r - avg.resonance.r0) / mu.sqrt();
    if near_identity {
        let s = sys.phase().phase(t)?;
        return avg.inverse_map(rho, psi, s, mu);
    }
    Ok((rho, psi))
}

fn simulate_capture(
    sys: &dyn PerturbedSystem,
    avg: &AveragedSystem,
    ps: &ParticularSolution,
    opts: &CaptureOptions,
    window: f64,
    index: u64,
) -> Result<PathOutcome> {
    let mut init_stream = NoiseStream::new(opts.seed, INIT_STREAMS | index);
    let [a, b] = init_stream.uniforms();
    let rad = match opts.sampling {
        InitialSampling::Ball => opts.delta1 * a.sqrt(),
        InitialSampling::Boundary => opts.delta1,
    };
    let (u, v) = (rad * (TAU * b).cos(), rad * (TAU * b).sin());
    let t0 = opts.t_star;
    let init = state_from_metric_offset(sys, avg, ps, u, v, t0)?;
    let mut stream = NoiseStream::new(opts.seed, index);
    if !sys.in_domain(init) {
        return Ok(PathOutcome {
            captured: false,
            sup_m: f64::INFINITY,
            escape: Some(t0),
        });
    }
    let path = integrate_sde(
        sys,
        init,
        t0,
        t0 + window,
        &SdeOptions {
            dt: opts.dt,
            record_stride: 1,
            scheme: opts.scheme,
        },
        &mut stream,
    )?;
    let mut sup_m = 0.0f64;
    let n = path.escape.map_or(path.t.len(), |_| path.t.len() - 1);
    for i in 0..n {
        let (rho, psi) = rho_psi(
            avg,
            sys,
            path.r[i],
            path.psi[i],
            path.t[i],
            opts.near_identity,
        )?;
        sup_m = sup_m.max(resonance_metric(avg, ps, rho, psi, path.t[i])?);
    }
    let captured = path.escape.is_none() && sup_m < opts.eps2;
    Ok(PathOutcome {
        captured,
        sup_m,
        escape: path.escape,
    })
}

/// Monte Carlo estimate of the probability that paths started in the
/// `delta1` M-ball stay within M-distance `eps2` over the horizon.
pub fn capture_probability(
    sys: &dyn PerturbedSystem,
    avg: &AveragedSystem,
    ps: &ParticularSolution,
    opts: &CaptureOptions,
) -> Result<CaptureStats> {
    if opts.n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be at least 1".into()));
    }
    if !(opts.delta1 > 0.0 && opts.eps2 > 0.0) {
        return Err(Error::InvalidParameter(
            "delta1 and eps2 must be positive".into(),
        ));
    }
    check_grid(opts.t_star, opts.t_star, opts.dt)?;
    let (window, clamped) = match opts.horizon {
        StabilityHorizon::Finite(t) if t > 0.0 => (t, false),
        StabilityHorizon::Finite(_) => {
            return Err(Error::InvalidParameter("horizon must be positive".into()))
        }
        StabilityHorizon::Infinite => {
            if !(opts.t_max > 0.0) {
                return Err(Error::InvalidParameter(
                    "t_max must be positive for an infinite horizon".into(),
                ));
            }
            log::warn!(
                "infinite stability horizon clamped to t_max = {}",
                opts.t_max
            );
            (opts.t_max, true)
        }
    };
    let run = || -> Result<Vec<PathOutcome>> {
        (0..opts.n_paths as u64)
            .into_par_iter()
            .map(|i| simulate_capture(sys, avg, ps, opts, window, i))
            .collect()
    };
    let outcomes = match opts.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let n_captured = outcomes.iter().filter(|o| o.captured).count();
    let n_escaped = outcomes.iter().filter(|o| o.escape.is_some()).count();
    let (ci_low, ci_high) = wilson_interval(n_captured, opts.n_paths);
    Ok(CaptureStats {
        n_paths: opts.n_paths,
        n_captured,
        p_hat: n_captured as f64 / opts.n_paths as f64,
        ci_low,
        ci_high,
        delta1: opts.delta1,
        eps2: opts.eps2,
        horizon: window,
        horizon_clamped: clamped,
        seed: opts.seed,
        n_escaped,
        outcomes,
    })
}
