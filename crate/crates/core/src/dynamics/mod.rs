//! Regime classification of the averaged dynamics near the resonant orbit and
//! the resonant particular solution of the truncated system.

mod truncated;

pub use truncated::{
    domain_band, integrate_truncated, CompiledField, Scheme, StepRule, TruncatedOptions,
    TruncatedPath,
};

use crate::envelope::EnvelopeKind;
use crate::error::{Error, Result};
use crate::trigpoly::{AveragedSystem, TrigPoly};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

const SCAN_POINTS: usize = 1024;
const ROOT_TOL: f64 = 1e-12;
const DEGENERATE_SLOPE: f64 = 1e-10;
const DIVERGENCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    PhaseLocking,
    PhaseDrift,
    Degenerate,
    /// Equilibria exist but none is stable.
    UnstableSaddle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Horizon {
    Infinite,
    TEpsilon,
}

/// Zero `psi0` of the phase-shift function and its slope `xi` there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub psi0: f64,
    pub xi: f64,
    /// Centre of the limiting system (`xi eta < 0`).
    pub centre: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dissipation {
    pub h: usize,
    pub gamma_h: f64,
    pub gamma_tilde_h: f64,
    pub z0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub psi0: Option<f64>,
    pub xi: Option<f64>,
    pub eta: f64,
    pub h: Option<usize>,
    pub gamma_h: Option<f64>,
    pub gamma_tilde_h: Option<f64>,
    pub z0: Option<f64>,
    pub zeta_h_divergent: Option<bool>,
    pub zeta_lead_divergent: bool,
    pub horizon: Horizon,
    pub equilibria: Vec<Equilibrium>,
}

impl RegimeReport {
    /// Report for a phase-shift function with a degenerate zero at `psi0`.
    pub fn degenerate(avg: &AveragedSystem, psi0: f64) -> Self {
        let res = &avg.resonance;
        Self {
            regime: Regime::Degenerate,
            psi0: Some(psi0),
            xi: Some(0.0),
            eta: res.eta,
            h: None,
            gamma_h: None,
            gamma_tilde_h: None,
            z0: None,
            zeta_h_divergent: None,
            zeta_lead_divergent: avg.envelope.zeta_diverges(2 * res.n as i32 - 1),
            horizon: horizon(avg),
            equilibria: Vec::new(),
        }
    }
}

fn horizon(avg: &AveragedSystem) -> Horizon {
    let res = &avg.resonance;
    if avg.envelope.zeta_diverges(2 * res.p as i32 - res.n as i32) {
        Horizon::TEpsilon
    } else {
        Horizon::Infinite
    }
}

fn bisect_root(f: &TrigPoly, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f.eval(0.0, a, 0.0);
    while b - a > ROOT_TOL {
        let m = 0.5 * (a + b);
        let fm = f.eval(0.0, m, 0.0);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Zeros of `lambda` on `[0, 2 pi)` with their slopes.
pub fn find_equilibria(avg: &AveragedSystem) -> Result<Vec<Equilibrium>> {
    let lambda = avg.lambda_fn();
    let slope = lambda.d_psi();
    let eta = avg.resonance.eta;
    let grid: Vec<f64> = (0..=SCAN_POINTS)
        .map(|i| TAU * i as f64 / SCAN_POINTS as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&x| lambda.eval(0.0, x, 0.0)).collect();
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale <= ROOT_TOL {
        return Err(Error::Degenerate { psi0: 0.0 });
    }
    let mut roots = Vec::new();
    let mut bracketed = vec![false; SCAN_POINTS];
    for i in 0..SCAN_POINTS {
        let (a, b) = (vals[i], vals[i + 1]);
        if a == 0.0 {
            roots.push(grid[i]);
            bracketed[i] = true;
        } else if b != 0.0 && (a < 0.0) != (b < 0.0) {
            roots.push(bisect_root(lambda, grid[i], grid[i + 1]));
            bracketed[i] = true;
        }
    }
    // Touching zeros do not change sign; look for near-zero local minima of |lambda|.
    for i in 0..SCAN_POINTS {
        let prev = vals[(i + SCAN_POINTS - 1) % SCAN_POINTS].abs();
        let next = vals[i + 1].abs();
        let here = vals[i].abs();
        let near = bracketed[i] || bracketed[(i + SCAN_POINTS - 1) % SCAN_POINTS];
        if here <= prev && here <= next && !near {
            let h = TAU / SCAN_POINTS as f64;
            let (mut a, mut b) = (grid[i] - h, grid[i] + h);
            for _ in 0..100 {
                let m1 = a + (b - a) / 3.0;
                let m2 = b - (b - a) / 3.0;
                if lambda.eval(0.0, m1, 0.0).abs() < lambda.eval(0.0, m2, 0.0).abs() {
                    b = m2;
                } else {
                    a = m1;
                }
            }
            let x = 0.5 * (a + b);
            if lambda.eval(0.0, x, 0.0).abs() <= ROOT_TOL {
                return Err(Error::Degenerate {
                    psi0: x.rem_euclid(TAU),
                });
            }
        }
    }
    roots
        .into_iter()
        .map(|psi0| {
            let psi0 = psi0.rem_euclid(TAU);
            let xi = slope.eval(0.0, psi0, 0.0);
            if xi.abs() < DEGENERATE_SLOPE {
                return Err(Error::Degenerate { psi0 });
            }
            Ok(Equilibrium {
                psi0,
                xi,
                centre: xi * eta < 0.0,
            })
        })
        .collect()
}

/// First order `h` at which the averaged field has nonzero divergence, with
/// `gamma_h`, its envelope-corrected value and the decay exponent bound `z0`.
pub fn dissipation_order(avg: &AveragedSystem, psi0: f64) -> Result<Dissipation> {
    let (m, chi) = avg.envelope.mu_exponents();
    let n = avg.resonance.n as f64;
    for h in 2..=avg.order {
        let div = avg.lambda[h].d_rho().add(&avg.omega[h].d_psi());
        if div.max_abs() <= DIVERGENCE_TOL {
            continue;
        }
        let gamma_h = div.eval(0.0, psi0, 0.0);
        if gamma_h.abs() <= DIVERGENCE_TOL {
            return Err(Error::AssumptionViolated(format!(
                "divergence of order {h} vanishes at the equilibrium psi0 = {psi0}"
            )));
        }
        let corner = h == 2 * m as usize;
        if h > 2 * m as usize {
            return Err(Error::AssumptionViolated(format!(
                "dissipation order {h} exceeds twice the envelope exponent {m}"
            )));
        }
        let gamma_tilde_h = if corner {
            gamma_h - chi * n / 2.0
        } else {
            gamma_h
        };
        let z0 = if corner && chi < 0.0 {
            0.5 * (gamma_tilde_h / chi).min(1.0)
        } else {
            0.5
        };
        return Ok(Dissipation {
            h,
            gamma_h,
            gamma_tilde_h,
            z0,
        });
    }
    Err(Error::AssumptionViolated(format!(
        "averaged field is divergence-free up to order {}",
        avg.order
    )))
}

/// Classifies the resonant regime of the averaged system.
pub fn classify(avg: &AveragedSystem) -> Result<RegimeReport> {
    let res = &avg.resonance;
    let (n, p) = (res.n as i32, res.p as i32);
    let (m, _) = avg.envelope.mu_exponents();
    if (m as i32) < n {
        return Err(Error::AssumptionViolated(format!(
            "envelope exponent {m} is below the drift order {n}"
        )));
    }
    if 2 * p < n {
        return Err(Error::AssumptionViolated(format!(
            "noise order {p} is too low for drift order {n}"
        )));
    }
    let equilibria = find_equilibria(avg)?;
    let zeta_lead_divergent = avg.envelope.zeta_diverges(2 * n - 1);
    let mut report = RegimeReport {
        regime: Regime::UnstableSaddle,
        psi0: None,
        xi: None,
        eta: res.eta,
        h: None,
        gamma_h: None,
        gamma_tilde_h: None,
        z0: None,
        zeta_h_divergent: None,
        zeta_lead_divergent,
        horizon: horizon(avg),
        equilibria: equilibria.clone(),
    };
    if equilibria.is_empty() {
        if !zeta_lead_divergent {
            return Err(Error::AssumptionViolated(
                "phase shift never vanishes but its integrated drive is bounded".into(),
            ));
        }
        report.regime = Regime::PhaseDrift;
        return Ok(report);
    }
    let mut fallback = None;
    for eq in equilibria.iter().filter(|e| e.centre) {
        let d = dissipation_order(avg, eq.psi0)?;
        if d.gamma_tilde_h < 0.0 {
            fill(&mut report, eq, &d, avg);
            report.regime = Regime::PhaseLocking;
            return Ok(report);
        }
        fallback.get_or_insert((*eq, d));
    }
    match fallback {
        Some((eq, d)) => fill(&mut report, &eq, &d, avg),
        None => {
            let eq = equilibria[0];
            report.psi0 = Some(eq.psi0);
            report.xi = Some(eq.xi);
            if let Ok(d) = dissipation_order(avg, eq.psi0) {
                fill(&mut report, &eq, &d, avg);
            }
        }
    }
    Ok(report)
}

fn fill(report: &mut RegimeReport, eq: &Equilibrium, d: &Dissipation, avg: &AveragedSystem) {
    report.psi0 = Some(eq.psi0);
    report.xi = Some(eq.xi);
    report.h = Some(d.h);
    report.gamma_h = Some(d.gamma_h);
    report.gamma_tilde_h = Some(d.gamma_tilde_h);
    report.z0 = Some(d.z0);
    report.zeta_h_divergent = Some(avg.envelope.zeta_diverges(d.h as i32));
}

/// Truncated series `rho_* = sum rho_k sigma^k`, `psi_* = psi0 + sum phi_k sigma^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticularSolution {
    pub order: usize,
    pub psi0: f64,
    pub n: u32,
    /// `rho[k - 1] = rho_k`.
    pub rho: Vec<f64>,
    pub phi: Vec<f64>,
}

/// Truncated power series in `sigma`.
fn poly_mul(a: &[f64], b: &[f64], order: usize) -> Vec<f64> {
    let mut out = vec![0.0; order + 1];
    for (i, x) in a.iter().enumerate() {
        if *x == 0.0 {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            if i + j <= order {
                out[i + j] += x * y;
            }
        }
    }
    out
}

/// Series coefficients of `sum_j sigma^j F_j(drho, psi0 + dpsi)` up to `order`.
fn compose_at(f: &[TrigPoly], psi0: f64, drho: &[f64], dpsi: &[f64], order: usize) -> Vec<f64> {
    let mut out = vec![0.0; order + 1];
    let mut rho_pow = vec![vec![0.0; order + 1]];
    rho_pow[0][0] = 1.0;
    let mut psi_pow = rho_pow.clone();
    for a in 1..=order {
        rho_pow.push(poly_mul(&rho_pow[a - 1], drho, order));
        psi_pow.push(poly_mul(&psi_pow[a - 1], dpsi, order));
    }
    for (j, fj) in f.iter().enumerate().skip(1) {
        if j > order || fj.is_zero() {
            continue;
        }
        let room = order - j;
        let mut da = fj.clone();
        let mut fa = 1.0;
        for a in 0..=room {
            if a > 0 {
                da = da.d_rho();
                fa *= a as f64;
            }
            if da.is_zero() {
                break;
            }
            let mut db = da.clone();
            let mut fb = 1.0;
            for b in 0..=(room - a) {
                if b > 0 {
                    db = db.d_psi();
                    fb *= b as f64;
                }
                if db.is_zero() {
                    break;
                }
                let c = db.eval(0.0, psi0, 0.0) / (fa * fb);
                if c == 0.0 {
                    continue;
                }
                let prod = poly_mul(&rho_pow[a], &psi_pow[b], room);
                for (k, v) in prod.iter().enumerate() {
                    out[j + k] += c * v;
                }
            }
        }
    }
    out
}

/// `ell = c sigma^e` when the envelope is a pure power law.
fn ell_series(avg: &AveragedSystem) -> Option<(f64, usize)> {
    match avg.envelope.kind() {
        Some(EnvelopeKind::Power { q }) => Some((-1.0 / q as f64, 2 * q as usize)),
        _ => None,
    }
}

/// Coefficients of the particular solution with `h - 1` terms. For power-law
/// envelopes the terms carrying `ell` are matched exactly; otherwise they are
/// left out, being of higher order than every matched term.
pub fn particular_solution(
    avg: &AveragedSystem,
    psi0: f64,
    h: usize,
) -> Result<ParticularSolution> {
    let eta = avg.resonance.eta;
    let xi = avg.lambda_fn().d_psi().eval(0.0, psi0, 0.0);
    if xi == 0.0 || eta == 0.0 {
        return Err(Error::AssumptionViolated(
            "particular solution needs xi eta != 0".into(),
        ));
    }
    let n = avg.resonance.n as usize;
    let terms = h.saturating_sub(1);
    let top = 2 * n - 1 + terms;
    let ell = ell_series(avg);
    let mut drho = vec![0.0; top + 1];
    let mut dpsi = vec![0.0; top + 1];
    // Coefficient at `sigma^i` of `d/dt sum c_k sigma^k` plus `shift ell sum c_k sigma^k`.
    let rate = |coef: &[f64], i: usize, shift: f64| match ell {
        Some((c, e)) if i > e => c * ((i - e) as f64 / 2.0 + shift) * coef[i - e],
        _ => 0.0,
    };
    for k in 1..=terms {
        let om = compose_at(&avg.omega, psi0, &drho, &dpsi, k + 1);
        drho[k] = -(om[k + 1] - rate(&dpsi, k + 1, 0.0)) / eta;
        let j = 2 * n - 1 + k;
        let la = compose_at(&avg.lambda, psi0, &drho, &dpsi, j);
        dpsi[k] = -(la[j] - rate(&drho, j, 0.5)) / xi;
    }
    Ok(ParticularSolution {
        order: h,
        psi0,
        n: avg.resonance.n,
        rho: drho[1..=terms].to_vec(),
        phi: dpsi[1..=terms].to_vec(),
    })
}

impl ParticularSolution {
    /// `(rho_*, psi_*)` at envelope value `mu`.
    pub fn at(&self, mu: f64) -> (f64, f64) {
        let sigma = mu.sqrt();
        let (mut r, mut p, mut s) = (0.0, self.psi0, 1.0);
        for (a, b) in self.rho.iter().zip(&self.phi) {
            s *= sigma;
            r += a * s;
            p += b * s;
        }
        (r, p)
    }

    /// `d rho_* / dt` and `d psi_* / dt` given `mu` and `ell = mu'/mu`.
    pub fn rate(&self, mu: f64, ell: f64) -> (f64, f64) {
        let sigma = mu.sqrt();
        let (mut r, mut p, mut s) = (0.0, 0.0, 1.0);
        for (k, (a, b)) in self.rho.iter().zip(&self.phi).enumerate() {
            s *= sigma;
            let w = 0.5 * (k + 1) as f64 * ell * s;
            r += a * w;
            p += b * w;
        }
        (r, p)
    }

    /// Weighted distance `sqrt((rho - rho_*)^2 mu^-(n-1) + (psi - psi_*)^2)`.
    pub fn metric(&self, rho: f64, psi: f64, mu: f64) -> f64 {
        let (rs, ps) = self.at(mu);
        let w = mu.powi(-(self.n as i32 - 1));
        ((rho - rs).powi(2) * w + (psi - ps).powi(2)).sqrt()
    }
}
