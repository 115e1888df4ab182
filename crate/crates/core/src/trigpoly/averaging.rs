//! Near-identity averaging of a perturbed system around its resonant orbit,
//! carried out on formal series in `sigma = mu^(1/2)`.

use super::{series_add_scaled, series_map, series_mul, series_zero, Series, TrigPoly};
use crate::envelope::DecayEnvelope;
use crate::error::{Error, Result};
use crate::systems::{PerturbedSystem, Resonance};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Highest supported truncation order.
pub const MAX_ORDER: usize = 4;

/// One Fourier mode of a coefficient table; `poly` lists `[re, im]` pairs of
/// the coefficients of `rho^0, rho^1, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub j: i32,
    pub l: i32,
    pub poly: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub k: usize,
    pub target: String,
    pub modes: Vec<ModeRecord>,
}

/// Averaged coefficients `Lambda_k`, `Omega_k` and generators `u_k`, `v_k`
/// for `k = 1..=order`. Index 0 of every list is unused and zero.
#[derive(Debug, Clone)]
pub struct AveragedSystem {
    pub order: usize,
    pub system: String,
    pub resonance: Resonance,
    pub s0: f64,
    pub envelope: DecayEnvelope,
    pub lambda: Vec<TrigPoly>,
    pub omega: Vec<TrigPoly>,
    pub u: Vec<TrigPoly>,
    pub v: Vec<TrigPoly>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// `F(rho + dr, psi + dpsi)` for series `F` and perturbation series `dr`,
/// `dpsi` starting at order one, truncated at `order`.
fn compose(f: &[TrigPoly], dr: &[TrigPoly], dpsi: &[TrigPoly], order: usize) -> Result<Series> {
    let vk = f[0].varkappa();
    let mut out = f.to_vec();
    out.resize(order + 1, TrigPoly::zero(vk));
    let dr_zero = dr.iter().all(|t| t.is_zero());
    let dpsi_zero = dpsi.iter().all(|t| t.is_zero());
    if dr_zero && dpsi_zero {
        return Ok(out);
    }
    let mut one = series_zero(order, vk);
    one[0] = TrigPoly::constant(1.0, vk);
    // Powers dr^a.
    let mut dr_pow = vec![one.clone()];
    let mut dpsi_pow = vec![one];
    for a in 1..=order {
        dr_pow.push(if dr_zero {
            series_zero(order, vk)
        } else {
            series_mul(&dr_pow[a - 1], dr, order)?
        });
        dpsi_pow.push(if dpsi_zero {
            series_zero(order, vk)
        } else {
            series_mul(&dpsi_pow[a - 1], dpsi, order)?
        });
    }
    for a in 0..=order {
        for b in 0..=(order - a) {
            if a + b == 0 {
                continue;
            }
            if (a > 0 && dr_zero) || (b > 0 && dpsi_zero) {
                continue;
            }
            let mut df: Series = f.to_vec();
            for _ in 0..a {
                df = series_map(&df, |t| t.d_rho());
            }
            for _ in 0..b {
                df = series_map(&df, |t| t.d_psi());
            }
            if df.iter().all(|t| t.is_zero()) {
                continue;
            }
            let weight = 1.0 / (factorial(a) * factorial(b));
            let prod = series_mul(&dr_pow[a], &dpsi_pow[b], order)?;
            let term = series_mul(&df, &prod, order)?;
            series_add_scaled(&mut out, weight, &term);
        }
    }
    Ok(out)
}

/// Inverse corrections `(R - rho, Psi - psi)` of the map
/// `rho = R + sum u_k sigma^k`, `psi = Psi + sum v_k sigma^k`, as series in
/// `(rho, psi)`.
fn inverse_shift(u: &[TrigPoly], v: &[TrigPoly], order: usize) -> Result<(Series, Series)> {
    let vk = u[0].varkappa();
    let mut dr = series_zero(order, vk);
    let mut dpsi = series_zero(order, vk);
    for _ in 0..order {
        let cu = compose(u, &dr, &dpsi, order)?;
        let cv = compose(v, &dr, &dpsi, order)?;
        dr = series_map(&cu, |t| t.scale(-1.0));
        dpsi = series_map(&cv, |t| t.scale(-1.0));
    }
    Ok((dr, dpsi))
}

/// Input series of the transformed drift and noise in `(R, Psi, S)`.
struct Expansion {
    b1: Series,
    b2: Series,
    beta1: Series,
    beta2: Series,
    /// `S'(t)` corrections: `s_rate[2j] = s_j`.
    s_rate: Vec<f64>,
}

fn expand(sys: &dyn PerturbedSystem, order: usize) -> Result<Expansion> {
    let res = *sys.resonance();
    let vk = res.varkappa;
    let rho_pow = |i: usize| TrigPoly::monomial(1.0 / factorial(i), i, vk);
    let mut b1 = series_zero(order, vk);
    let mut b2 = series_zero(order, vk);
    let mut beta1 = series_zero(order, vk);
    let mut beta2 = series_zero(order, vk);
    let nu = sys.nu_derivatives(res.r0, order)?;
    let phase = sys.phase();
    let mut s_rate = vec![0.0; order + 1];
    for (j, sj) in phase.s.iter().enumerate() {
        let k = 2 * (j + 1);
        if k <= order {
            s_rate[k] = *sj;
        }
    }
    let ratio = res.kappa as f64 / res.varkappa as f64;
    for k in 1..=order {
        for &j in &sys.drift_orders() {
            let j = j as usize;
            if k + 1 >= 2 * j {
                let i = k + 1 - 2 * j;
                let t = sys.drift_taylor(0, j as u32, i)?;
                if !t.is_zero() {
                    b1[k].add_assign_scaled(1.0, &t.mul(&rho_pow(i))?);
                }
            }
            if k >= 2 * j {
                let i = k - 2 * j;
                let t = sys.drift_taylor(1, j as u32, i)?;
                if !t.is_zero() {
                    b2[k].add_assign_scaled(1.0, &t.mul(&rho_pow(i))?);
                }
            }
        }
        b2[k].add_assign_scaled(nu[k], &rho_pow(k));
        if s_rate[k] != 0.0 {
            b2[k].add_assign_scaled(-ratio * s_rate[k], &TrigPoly::constant(1.0, vk));
        }
        for &j in &sys.diffusion_orders() {
            let j = j as usize;
            if k + 1 >= 2 * j {
                let i = k + 1 - 2 * j;
                let t = sys.diffusion_taylor(0, j as u32, i)?;
                if !t.is_zero() {
                    beta1[k].add_assign_scaled(1.0, &t.mul(&rho_pow(i))?);
                }
            }
            if k >= 2 * j {
                let i = k - 2 * j;
                let t = sys.diffusion_taylor(1, j as u32, i)?;
                if !t.is_zero() {
                    beta2[k].add_assign_scaled(1.0, &t.mul(&rho_pow(i))?);
                }
            }
        }
    }
    Ok(Expansion {
        b1,
        b2,
        beta1,
        beta2,
        s_rate,
    })
}

/// Generator of the transformed process applied to `X = id + sum x_k sigma^k`
/// (`identity` selects `R` or `Psi`), omitting the `s0 dS` term of the
/// newest generator, which is handled by the homological equation.
fn generator(
    x: &[TrigPoly],
    identity: usize,
    ex: &Expansion,
    s0: f64,
    eps2: f64,
    newest: usize,
    order: usize,
) -> Result<Series> {
    let vk = x[0].varkappa();
    let mut full: Series = x.to_vec();
    full[0] = if identity == 0 {
        TrigPoly::monomial(1.0, 1, vk)
    } else {
        TrigPoly::zero(vk)
    };
    let mut out = series_zero(order, vk);
    // S'(t) dX/dS with the s0 part of the newest generator omitted.
    let xs = series_map(x, |t| t.d_s());
    for (k, t) in xs.iter().enumerate() {
        if k != newest {
            out[k].add_assign_scaled(s0, t);
        }
    }
    for (m, sm) in ex.s_rate.iter().enumerate() {
        if *sm != 0.0 {
            for k in 0..=order.saturating_sub(m) {
                out[k + m].add_assign_scaled(*sm, &xs[k]);
            }
        }
    }
    let xr = series_map(&full, |t| t.d_rho());
    let xp = series_map(&full, |t| t.d_psi());
    let xr_const = {
        let mut v = xr.clone();
        // d/dR of the identity part.
        if identity == 0 {
            v[0] = TrigPoly::constant(1.0, vk);
        }
        v
    };
    let xp_const = {
        let mut v = xp.clone();
        if identity == 1 {
            v[0] = TrigPoly::constant(1.0, vk);
        }
        v
    };
    series_add_scaled(&mut out, 1.0, &series_mul(&xr_const, &ex.b1, order)?);
    series_add_scaled(&mut out, 1.0, &series_mul(&xp_const, &ex.b2, order)?);
    if eps2 != 0.0 {
        let xrr = series_map(&xr, |t| t.d_rho());
        let xrp = series_map(&xr, |t| t.d_psi());
        let xpp = series_map(&xp, |t| t.d_psi());
        let lowest = [&xrr, &xrp, &xpp]
            .iter()
            .filter_map(|s| s.iter().position(|t| !t.is_zero()))
            .min();
        if let Some(lowest) = lowest.filter(|&l| l <= order) {
            let cap = order - lowest;
            let b11 = series_mul(&ex.beta1, &ex.beta1, cap)?;
            let b12 = series_mul(&ex.beta1, &ex.beta2, cap)?;
            let b22 = series_mul(&ex.beta2, &ex.beta2, cap)?;
            series_add_scaled(&mut out, 0.5 * eps2, &series_mul(&b11, &xrr, order)?);
            series_add_scaled(&mut out, eps2, &series_mul(&b12, &xrp, order)?);
            series_add_scaled(&mut out, 0.5 * eps2, &series_mul(&b22, &xpp, order)?);
        }
    }
    Ok(out)
}

/// Builds the averaged system of truncation order `order`.
pub fn build_averaged(sys: &dyn PerturbedSystem, order: usize) -> Result<AveragedSystem> {
    let res = *sys.resonance();
    let n = res.n as usize;
    if order > MAX_ORDER {
        return Err(Error::UnsupportedOrder {
            order,
            reason: format!("orders above {MAX_ORDER} are not implemented"),
        });
    }
    if order < 2 * n - 1 {
        return Err(Error::UnsupportedOrder {
            order,
            reason: format!(
                "the phase-shift equation first appears at order {}",
                2 * n - 1
            ),
        });
    }
    if res.eta == 0.0 {
        return Err(Error::AssumptionViolated(
            "frequency slope vanishes at resonance".into(),
        ));
    }
    let vk = res.varkappa;
    let s0 = sys.phase().s0;
    let eps2 = sys.epsilon().powi(2);
    let ex = expand(sys, order)?;
    let mut u = series_zero(order, vk);
    let mut v = series_zero(order, vk);
    let mut lambda = series_zero(order, vk);
    let mut omega = series_zero(order, vk);
    for k in 1..=order {
        let du = generator(&u, 0, &ex, s0, eps2, k, order)?;
        let dv = generator(&v, 1, &ex, s0, eps2, k, order)?;
        let (dr, dpsi) = inverse_shift(&u, &v, k)?;
        let wu = compose(&du[..=k], &dr, &dpsi, k)?;
        let wv = compose(&dv[..=k], &dr, &dpsi, k)?;
        let lk = wu[k].average().pruned(1e-14);
        let ok = wv[k].average().pruned(1e-14);
        u[k] = lk.sub(&wu[k]).solve_homological(s0)?.pruned(1e-14);
        v[k] = ok.sub(&wv[k]).solve_homological(s0)?.pruned(1e-14);
        lambda[k] = lk;
        omega[k] = ok;
    }
    Ok(AveragedSystem {
        order,
        system: sys.name().to_string(),
        resonance: res,
        s0,
        envelope: sys.envelope().clone(),
        lambda,
        omega,
        u,
        v,
    })
}

impl AveragedSystem {
    /// `lambda(psi) = Lambda_{2n-1}`.
    pub fn lambda_fn(&self) -> &TrigPoly {
        &self.lambda[2 * self.resonance.n as usize - 1]
    }

    pub fn lambda_at(&self, psi: f64) -> f64 {
        self.lambda_fn().eval(0.0, psi, 0.0)
    }

    /// Right-hand side of the truncated averaged system at `(rho, psi, t)`.
    pub fn field(&self, rho: f64, psi: f64, t: f64) -> Result<[f64; 2]> {
        let (mu, ell) = self.envelope.eval(t)?;
        Ok(self.field_at(rho, psi, mu, ell))
    }

    /// Averaged field at explicit `mu` and `ell`.
    pub fn field_at(&self, rho: f64, psi: f64, mu: f64, ell: f64) -> [f64; 2] {
        let sigma = mu.sqrt();
        let mut a = -0.5 * ell * rho;
        let mut b = 0.0;
        let mut s = 1.0;
        for k in 1..=self.order {
            s *= sigma;
            a += s * self.lambda[k].eval(rho, psi, 0.0);
            b += s * self.omega[k].eval(rho, psi, 0.0);
        }
        [a, b]
    }

    /// Forward near-identity map `(R, Psi) -> (rho, psi)` at phase `s`.
    pub fn forward_map(&self, big_r: f64, big_psi: f64, s: f64, mu: f64) -> (f64, f64) {
        let sigma = mu.sqrt();
        let (mut rho, mut psi) = (big_r, big_psi);
        let mut p = 1.0;
        for k in 1..=self.order {
            p *= sigma;
            rho += p * self.u[k].eval(big_r, big_psi, s);
            psi += p * self.v[k].eval(big_r, big_psi, s);
        }
        (rho, psi)
    }

    /// Inverse of [`forward_map`] by Newton iteration.
    pub fn inverse_map(&self, rho: f64, psi: f64, s: f64, mu: f64) -> Result<(f64, f64)> {
        let (mut x, mut y) = (rho, psi);
        for _ in 0..50 {
            let (fr, fp) = self.forward_map(x, y, s, mu);
            let (er, ep) = (fr - rho, fp - psi);
            if er.abs().max(ep.abs()) < 1e-13 {
                return Ok((x, y));
            }
            let h = 1e-7;
            let (a1, b1) = self.forward_map(x + h, y, s, mu);
            let (a2, b2) = self.forward_map(x, y + h, s, mu);
            let j = [
                [(a1 - fr) / h, (a2 - fr) / h],
                [(b1 - fp) / h, (b2 - fp) / h],
            ];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-12 {
                break;
            }
            x -= (j[1][1] * er - j[0][1] * ep) / det;
            y -= (-j[1][0] * er + j[0][0] * ep) / det;
        }
        Err(Error::Numerical(
            "near-identity map could not be inverted".into(),
        ))
    }

    /// `sum_k sigma^k max(|u_k|, |v_k|)` over `|rho| <= rho_max` and all angles,
    /// sampled on a grid.
    pub fn generator_bound(&self, rho_max: f64, mu: f64) -> f64 {
        let sigma = mu.sqrt();
        let vk = self.resonance.varkappa as f64;
        let mut total = 0.0;
        let mut p = 1.0;
        for k in 1..=self.order {
            p *= sigma;
            let mut sup: f64 = 0.0;
            if !(self.u[k].is_zero() && self.v[k].is_zero()) {
                for a in 0..=8 {
                    let rho = rho_max * (a as f64 / 4.0 - 1.0);
                    for b in 0..24 {
                        let psi = TAU * b as f64 / 24.0;
                        for c in 0..24 {
                            let s = TAU * vk * c as f64 / 24.0;
                            sup = sup
                                .max(self.u[k].eval(rho, psi, s).abs())
                                .max(self.v[k].eval(rho, psi, s).abs());
                        }
                    }
                }
            }
            total += p * sup;
        }
        total
    }

    /// Earliest time at or after `t_min` from which [`generator_bound`] stays
    /// below `eps_box`.
    pub fn near_identity_start(&self, rho_max: f64, eps_box: f64, t_min: f64) -> Result<f64> {
        let t_min = t_min.max(self.envelope.tau0());
        let bound =
            |t: f64| -> Result<f64> { Ok(self.generator_bound(rho_max, self.envelope.mu(t)?)) };
        if bound(t_min)? <= eps_box {
            return Ok(t_min);
        }
        let mut hi = t_min;
        for _ in 0..200 {
            hi *= 2.0;
            if bound(hi)? <= eps_box {
                let mut lo = hi / 2.0;
                for _ in 0..60 {
                    let mid = (lo * hi).sqrt();
                    if bound(mid)? <= eps_box {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Ok(hi);
            }
        }
        Err(Error::Numerical(
            "generator sums never fall below the requested bound".into(),
        ))
    }

    /// Coefficient tables for JSON output.
    pub fn tables(&self) -> Vec<CoefficientTable> {
        let mut out = Vec::new();
        for k in 1..=self.order {
            for (name, list) in [
                ("Lambda", &self.lambda),
                ("Omega", &self.omega),
                ("u", &self.u),
                ("v", &self.v),
            ] {
                out.push(CoefficientTable {
                    k,
                    target: name.to_string(),
                    modes: list[k].records(),
                });
            }
        }
        out
    }
}
