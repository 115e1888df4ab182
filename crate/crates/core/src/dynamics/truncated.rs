//! Deterministic integration of the truncated averaged system.

use crate::envelope::DecayEnvelope;
use crate::error::{Error, Result};
use crate::trigpoly::{AveragedSystem, MAX_DEGREE, MAX_ORDER, MAX_PSI_MODE};
use serde::{Deserialize, Serialize};

const MAX_J: usize = MAX_PSI_MODE as usize;
const MAX_K: usize = MAX_ORDER;
const MAX_D: usize = MAX_DEGREE;

#[derive(Debug, Clone, Copy)]
struct Term {
    comp: usize,
    j: usize,
    k: i32,
    d: usize,
    c: f64,
    s: f64,
}

/// Flattened real form of `sum_k sigma^k (Lambda_k, Omega_k)` for fast evaluation.
#[derive(Debug, Clone)]
pub struct CompiledField {
    terms: Vec<Term>,
    max_j: usize,
    max_k: usize,
    max_d: usize,
}

impl CompiledField {
    pub fn new(avg: &AveragedSystem) -> Self {
        let mut terms = Vec::new();
        for k in 1..=avg.order {
            for (comp, f) in [&avg.lambda[k], &avg.omega[k]].into_iter().enumerate() {
                for (j, cs, sn) in f.psi_series() {
                    for d in 0..cs.len().max(sn.len()) {
                        let c = cs.get(d).copied().unwrap_or(0.0);
                        let s = sn.get(d).copied().unwrap_or(0.0);
                        if c != 0.0 || s != 0.0 {
                            terms.push(Term {
                                comp,
                                j: j as usize,
                                k: k as i32,
                                d,
                                c,
                                s,
                            });
                        }
                    }
                }
            }
        }
        let max_j = terms.iter().map(|t| t.j).max().unwrap_or(0);
        let max_k = terms.iter().map(|t| t.k as usize).max().unwrap_or(0);
        let max_d = terms.iter().map(|t| t.d).max().unwrap_or(0);
        Self {
            terms,
            max_j,
            max_k,
            max_d,
        }
    }

    /// Field `(d rho/dt, d psi/dt)` and, if asked, its Jacobian in `(rho, psi)`.
    pub fn eval(
        &self,
        rho: f64,
        psi: f64,
        mu: f64,
        ell: f64,
        jac: bool,
    ) -> ([f64; 2], [[f64; 2]; 2]) {
        let mut cj = [0.0f64; MAX_J + 1];
        let mut sj = [0.0f64; MAX_J + 1];
        let (s1, c1) = psi.sin_cos();
        cj[0] = 1.0;
        for j in 1..=self.max_j {
            cj[j] = cj[j - 1] * c1 - sj[j - 1] * s1;
            sj[j] = sj[j - 1] * c1 + cj[j - 1] * s1;
        }
        let sigma = mu.sqrt();
        let mut sk = [0.0f64; MAX_K + 1];
        sk[0] = 1.0;
        for k in 1..=self.max_k {
            sk[k] = sk[k - 1] * sigma;
        }
        let mut rd = [0.0f64; MAX_D + 1];
        rd[0] = 1.0;
        for d in 1..=self.max_d {
            rd[d] = rd[d - 1] * rho;
        }
        let mut f = [-0.5 * ell * rho, 0.0];
        let mut df = [[-0.5 * ell, 0.0], [0.0, 0.0]];
        for t in &self.terms {
            let w = sk[t.k as usize];
            let (c, s) = (cj[t.j], sj[t.j]);
            let trig = t.c * c + t.s * s;
            f[t.comp] += w * trig * rd[t.d];
            if jac {
                if t.d > 0 {
                    df[t.comp][0] += w * trig * t.d as f64 * rd[t.d - 1];
                }
                df[t.comp][1] += w * t.j as f64 * (t.s * c - t.c * s) * rd[t.d];
            }
        }
        (f, df)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Classic explicit fourth-order Runge-Kutta.
    Rk4,
    /// Two-stage Gauss-Legendre collocation, fourth order and symplectic.
    Gauss4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepRule {
    Fixed(f64),
    /// `dt = min(c / (omega mu^(n/2)), rel_max t)`: a fixed fraction of the local
    /// period of the limiting oscillation with frequency factor `omega`, capped
    /// by the time scale of the envelope.
    Resonant {
        c: f64,
        omega: f64,
        rel_max: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedOptions {
    pub scheme: Scheme,
    pub step: StepRule,
    /// Record every `stride` steps; 0 keeps only the endpoints.
    pub record_stride: usize,
    /// Stop on leaving the amplitude band of the resonant domain at `t0`.
    pub stop_on_exit: bool,
}

impl Default for TruncatedOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::Rk4,
            step: StepRule::Fixed(0.1),
            record_stride: 1,
            stop_on_exit: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedPath {
    pub t: Vec<f64>,
    pub rho: Vec<f64>,
    pub psi: Vec<f64>,
    /// First time the path left the domain, if it did.
    pub exit_time: Option<f64>,
    pub steps: u64,
}

impl TruncatedPath {
    pub fn last(&self) -> (f64, f64, f64) {
        let i = self.t.len() - 1;
        (self.t[i], self.rho[i], self.psi[i])
    }
}

/// Amplitude band `|rho + r0 / sigma| <= r_max / sigma` at time `t0`.
pub fn domain_band(avg: &AveragedSystem, t0: f64) -> Result<(f64, f64)> {
    let sigma = avg.envelope.mu(t0)?.sqrt();
    let (r0, rm) = (avg.resonance.r0, avg.resonance.r_max);
    Ok(((-rm - r0) / sigma, (rm - r0) / sigma))
}

const G4_S: f64 = 0.288_675_134_594_812_9;
const G4_A: [[f64; 2]; 2] = [[0.25, 0.25 - G4_S], [0.25 + G4_S, 0.25]];
const G4_C: [f64; 2] = [0.5 - G4_S, 0.5 + G4_S];

fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut s = b[row];
        for k in row + 1..4 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

struct Stepper<'a> {
    field: &'a CompiledField,
    env: &'a DecayEnvelope,
}

impl Stepper<'_> {
    fn f(&self, env: (f64, f64), y: [f64; 2], jac: bool) -> ([f64; 2], [[f64; 2]; 2]) {
        self.field.eval(y[0], y[1], env.0, env.1, jac)
    }

    fn rk4(&self, t: f64, y: [f64; 2], h: f64) -> [f64; 2] {
        let e0 = self.env.eval_unchecked(t);
        let e1 = self.env.eval_unchecked(t + 0.5 * h);
        let e2 = self.env.eval_unchecked(t + h);
        let k1 = self.f(e0, y, false).0;
        let k2 = self
            .f(e1, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]], false)
            .0;
        let k3 = self
            .f(e1, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]], false)
            .0;
        let k4 = self.f(e2, [y[0] + h * k3[0], y[1] + h * k3[1]], false).0;
        [
            y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    }

    fn gauss4(&self, t: f64, y: [f64; 2], h: f64) -> Result<[f64; 2]> {
        let env = [
            self.env.eval_unchecked(t + G4_C[0] * h),
            self.env.eval_unchecked(t + G4_C[1] * h),
        ];
        let f0 = self.f(self.env.eval_unchecked(t + 0.5 * h), y, false).0;
        let mut z = [0.0; 4];
        for i in 0..2 {
            for a in 0..2 {
                z[2 * i + a] = h * G4_C[i] * f0[a];
            }
        }
        let scale = 1.0 + y[0].abs() + y[1].abs();
        let mut k = [[0.0; 2]; 2];
        let mut jac = [[[0.0; 2]; 2]; 2];
        for _ in 0..50 {
            for i in 0..2 {
                (k[i], jac[i]) = self.f(env[i], [y[0] + z[2 * i], y[1] + z[2 * i + 1]], true);
            }
            let mut m = [[0.0; 4]; 4];
            let mut r = [0.0; 4];
            for i in 0..2 {
                for a in 0..2 {
                    r[2 * i + a] =
                        -z[2 * i + a] + h * (G4_A[i][0] * k[0][a] + G4_A[i][1] * k[1][a]);
                    for j in 0..2 {
                        for b in 0..2 {
                            let id = if i == j && a == b { 1.0 } else { 0.0 };
                            m[2 * i + a][2 * j + b] = id - h * G4_A[i][j] * jac[j][a][b];
                        }
                    }
                }
            }
            let dz = solve4(m, r)
                .ok_or_else(|| Error::Numerical("singular collocation system".into()))?;
            let mut norm = 0.0f64;
            for i in 0..4 {
                z[i] += dz[i];
                norm = norm.max(dz[i].abs());
            }
            if !norm.is_finite() {
                return Err(Error::BlowUp { t });
            }
            if norm <= 1e-13 * scale {
                for i in 0..2 {
                    k[i] = self
                        .f(env[i], [y[0] + z[2 * i], y[1] + z[2 * i + 1]], false)
                        .0;
                }
                return Ok([
                    y[0] + 0.5 * h * (k[0][0] + k[1][0]),
                    y[1] + 0.5 * h * (k[0][1] + k[1][1]),
                ]);
            }
        }
        Err(Error::Numerical(format!(
            "collocation iteration did not converge at t = {t}"
        )))
    }
}

/// Integrates the truncated system from `init = (rho, psi)` at `t0` to `t_end`.
pub fn integrate_truncated(
    avg: &AveragedSystem,
    init: [f64; 2],
    t0: f64,
    t_end: f64,
    opts: &TruncatedOptions,
) -> Result<TruncatedPath> {
    if !(t_end >= t0) {
        return Err(Error::InvalidParameter("t_end must not precede t0".into()));
    }
    avg.envelope.eval(t0)?;
    match opts.step {
        StepRule::Fixed(dt) if !(dt > 0.0) => {
            return Err(Error::InvalidParameter("step must be positive".into()))
        }
        StepRule::Resonant { c, omega, rel_max } if !(c > 0.0 && omega > 0.0 && rel_max > 0.0) => {
            return Err(Error::InvalidParameter(
                "resonant step parameters must be positive".into(),
            ))
        }
        _ => {}
    }
    let field = CompiledField::new(avg);
    let stepper = Stepper {
        field: &field,
        env: &avg.envelope,
    };
    let band = domain_band(avg, t0)?;
    let half_n = avg.resonance.n as f64 / 2.0;
    let mut path = TruncatedPath {
        t: vec![t0],
        rho: vec![init[0]],
        psi: vec![init[1]],
        exit_time: None,
        steps: 0,
    };
    let (mut t, mut y) = (t0, init);
    let mut since = 0usize;
    while t < t_end {
        let dt = match opts.step {
            StepRule::Fixed(dt) => dt,
            StepRule::Resonant { c, omega, rel_max } => {
                let mu = stepper.env.eval_unchecked(t).0;
                (c / (omega * mu.powf(half_n))).min(rel_max * t)
            }
        };
        let h = dt.min(t_end - t);
        let last = h < dt || t + h >= t_end;
        y = match opts.scheme {
            Scheme::Rk4 => stepper.rk4(t, y, h),
            Scheme::Gauss4 => stepper.gauss4(t, y, h)?,
        };
        t = if last { t_end } else { t + h };
        path.steps += 1;
        if !(y[0].is_finite() && y[1].is_finite()) {
            return Err(Error::BlowUp { t });
        }
        let out = y[0] < band.0 || y[0] > band.1;
        since += 1;
        if last
            || (opts.record_stride > 0 && since >= opts.record_stride)
            || (out && opts.stop_on_exit)
        {
            path.t.push(t);
            path.rho.push(y[0]);
            path.psi.push(y[1]);
            since = 0;
        }
        if out && path.exit_time.is_none() {
            path.exit_time = Some(t);
            if opts.stop_on_exit {
                break;
            }
        }
    }
    Ok(path)
}
