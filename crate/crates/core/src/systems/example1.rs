//! Polar model with frequency `nu(r) = 1 - theta r^2`, forcing
//! `(Q(S) r sin phi - Z(S)) (sin phi, cos phi / r)` at order `mu^2` and noise
//! `-B(S) (sin phi, cos phi / r)` at order `mu^p`.

use super::{phi_harmonic, s_profile, Chart, PerturbedSystem, Resonance};
use crate::envelope::{DecayEnvelope, PerturbationPhase};
use crate::error::{Error, Result};
use crate::trigpoly::TrigPoly;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;

/// Forcing and noise parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example1Params {
    pub theta: f64,
    #[serde(rename = "Q0", default)]
    pub q0: f64,
    #[serde(rename = "Q1", default)]
    pub q1: f64,
    #[serde(rename = "Z0", default)]
    pub z0: f64,
    #[serde(rename = "Z1", default)]
    pub z1: f64,
    #[serde(rename = "B0", default)]
    pub b0: f64,
    #[serde(rename = "B1", default)]
    pub b1: f64,
}

impl Default for Example1Params {
    /// The locking set with `theta = 1/4`, `B1 = 1` and `Q0 = -eps^2/8` at `eps = 0.1`.
    fn default() -> Self {
        Self {
            theta: 0.25,
            q0: -0.01 / 8.0,
            q1: 0.0,
            z0: 0.0,
            z1: 0.0,
            b0: 0.0,
            b1: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Example1 {
    params: Example1Params,
    epsilon: f64,
    resonance: Resonance,
    phase: PerturbationPhase,
}

impl Example1 {
    /// Builds the system; the envelope defaults to `t^(-1/2) log t`.
    pub fn new(
        params: Example1Params,
        epsilon: f64,
        p: u32,
        kappa: u32,
        varkappa: u32,
        phase: PerturbationPhase,
    ) -> Result<Self> {
        if !(params.theta > 0.0) {
            return Err(Error::InvalidParameter("theta must be positive".into()));
        }
        if p == 0 {
            return Err(Error::InvalidParameter(
                "noise order p must be positive".into(),
            ));
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::InvalidParameter(
                "epsilon must be finite and nonnegative".into(),
            ));
        }
        if kappa == 0 || varkappa == 0 || gcd(kappa, varkappa) != 1 {
            return Err(Error::InvalidParameter(
                "kappa and varkappa must be coprime positive integers".into(),
            ));
        }
        let target = kappa as f64 * phase.s0 / varkappa as f64;
        if !(target > 0.0 && target < 1.0) {
            return Err(Error::NoResonance(format!(
                "target frequency {target} outside (0, 1)"
            )));
        }
        let r0 = ((1.0 - target) / params.theta).sqrt();
        let resonance = Resonance {
            n: 2,
            p,
            kappa,
            varkappa,
            r0,
            eta: -2.0 * params.theta * r0,
            r_max: params.theta.sqrt().recip(),
        };
        Ok(Self {
            params,
            epsilon,
            resonance,
            phase,
        })
    }

    /// The locking set on `mu = t^(-1/2) log t`, `s0 = 1/2`, `kappa = varkappa = 1`.
    pub fn standard(params: Example1Params, epsilon: f64, p: u32) -> Result<Self> {
        let env = DecayEnvelope::power_log(2, 10.0)?;
        let phase = PerturbationPhase::new(0.5, vec![], env, 10.0)?;
        Self::new(params, epsilon, p, 1, 1, phase)
    }

    pub fn params(&self) -> &Example1Params {
        &self.params
    }

    fn q(&self, s: f64) -> f64 {
        self.params.q0 + self.params.q1 * s.sin()
    }

    fn z(&self, s: f64) -> f64 {
        self.params.z0 + self.params.z1 * s.sin()
    }

    fn b(&self, s: f64) -> f64 {
        self.params.b0 + self.params.b1 * s.sin()
    }

    fn check_r(&self, r: f64) -> Result<()> {
        if !(r > 0.0 && r <= self.resonance.r_max) {
            return Err(Error::domain(
                r,
                format!("amplitude must lie in (0, {}]", self.resonance.r_max),
            ));
        }
        Ok(())
    }

    fn mu_s(&self, t: f64) -> Result<(f64, f64)> {
        Ok((self.phase.envelope.mu(t)?, self.phase.phase(t)?))
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `d^d/dr^d r^(-e)` at `r`.
fn inverse_power_derivative(e: i32, d: usize, r: f64) -> f64 {
    let mut c = 1.0;
    for i in 0..d {
        c *= -(e as f64 + i as f64);
    }
    c * r.powi(-(e + d as i32))
}

impl PerturbedSystem for Example1 {
    fn name(&self) -> &str {
        "example1"
    }

    fn chart(&self) -> Chart {
        Chart::Polar
    }

    fn resonance(&self) -> &Resonance {
        &self.resonance
    }

    fn envelope(&self) -> &DecayEnvelope {
        &self.phase.envelope
    }

    fn phase(&self) -> &PerturbationPhase {
        &self.phase
    }

    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn parameters(&self) -> BTreeMap<String, f64> {
        let p = &self.params;
        [
            ("theta", p.theta),
            ("Q0", p.q0),
            ("Q1", p.q1),
            ("Z0", p.z0),
            ("Z1", p.z1),
            ("B0", p.b0),
            ("B1", p.b1),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    fn nu_derivatives(&self, r: f64, order: usize) -> Result<Vec<f64>> {
        let th = self.params.theta;
        Ok((0..=order)
            .map(|j| match j {
                0 => 1.0 - th * r * r,
                1 => -2.0 * th * r,
                2 => -2.0 * th,
                _ => 0.0,
            })
            .collect())
    }

    fn polar_drift_at(&self, r: f64, phi: f64, s: f64, mu: f64) -> Result<[f64; 2]> {
        self.check_r(r)?;
        let (sp, cp) = phi.sin_cos();
        let common = self.q(s) * r * sp - self.z(s);
        let e2b2 = (self.epsilon * self.b(s)).powi(2);
        let mu2 = mu * mu;
        let mu2p = mu.powi(2 * self.resonance.p as i32);
        let nu = 1.0 - self.params.theta * r * r;
        Ok([
            mu2 * common * sp + mu2p * e2b2 * cp * cp / (2.0 * r),
            nu + mu2 * common * cp / r - mu2p * e2b2 * (2.0 * phi).sin() / (2.0 * r * r),
        ])
    }

    fn polar_diffusion_at(&self, r: f64, phi: f64, s: f64, mu: f64) -> Result<[[f64; 2]; 2]> {
        self.check_r(r)?;
        let (sp, cp) = phi.sin_cos();
        let g = -self.epsilon * mu.powi(self.resonance.p as i32) * self.b(s);
        Ok([[g * sp, 0.0], [g * cp / r, 0.0]])
    }

    fn drift(&self, state: [f64; 2], t: f64) -> Result<[f64; 2]> {
        let (mu, s) = self.mu_s(t)?;
        self.polar_drift_at(state[0], state[1], s, mu)
    }

    fn diffusion(&self, state: [f64; 2], t: f64) -> Result<[[f64; 2]; 2]> {
        let (mu, s) = self.mu_s(t)?;
        self.polar_diffusion_at(state[0], state[1], s, mu)
    }

    fn to_polar(&self, state: [f64; 2]) -> Result<(f64, f64)> {
        self.check_r(state[0])?;
        Ok((state[0], state[1].rem_euclid(TAU)))
    }

    fn from_polar(&self, r: f64, phi: f64) -> Result<[f64; 2]> {
        self.check_r(r)?;
        Ok([r, phi])
    }

    fn cartesian(&self, state: [f64; 2]) -> [f64; 2] {
        [state[0] * state[1].cos(), -state[0] * state[1].sin()]
    }

    fn in_domain(&self, state: [f64; 2]) -> bool {
        let rm = self.resonance.r_max;
        state[0].is_finite() && state[0] > 0.02 * rm && state[0] < 0.98 * rm
    }

    fn drift_orders(&self) -> Vec<u32> {
        let mut v = vec![2, 2 * self.resonance.p];
        v.dedup();
        v.sort_unstable();
        v.dedup();
        v
    }

    fn diffusion_orders(&self) -> Vec<u32> {
        vec![self.resonance.p]
    }

    fn drift_taylor(&self, comp: usize, j: u32, d: usize) -> Result<TrigPoly> {
        let res = &self.resonance;
        let vk = res.varkappa;
        let r0 = res.r0;
        let p = &self.params;
        let mut out = TrigPoly::zero(vk);
        let sin1 = phi_harmonic(0.0, 1.0, 1, res);
        let cos1 = phi_harmonic(1.0, 0.0, 1, res);
        let q = s_profile(p.q0, p.q1, vk);
        let z = s_profile(p.z0, p.z1, vk);
        if j == 2 {
            match comp {
                0 => {
                    // Q r sin^2 phi - Z sin phi
                    let sin2 = TrigPoly::constant(0.5, vk).sub(&phi_harmonic(0.5, 0.0, 2, res));
                    let rq = match d {
                        0 => r0,
                        1 => 1.0,
                        _ => 0.0,
                    };
                    out.add_assign_scaled(rq, &q.mul(&sin2)?);
                    if d == 0 {
                        out.add_assign_scaled(-1.0, &z.mul(&sin1)?);
                    }
                }
                1 => {
                    // Q sin phi cos phi - Z cos phi / r
                    if d == 0 {
                        out.add_assign_scaled(1.0, &q.mul(&phi_harmonic(0.0, 0.5, 2, res))?);
                    }
                    out.add_assign_scaled(-inverse_power_derivative(1, d, r0), &z.mul(&cos1)?);
                }
                _ => return Err(Error::InvalidParameter(format!("drift component {comp}"))),
            }
        }
        if j == 2 * res.p && self.epsilon != 0.0 {
            let b = s_profile(p.b0, p.b1, vk);
            let e2b2 = b.mul(&b)?.scale(self.epsilon * self.epsilon);
            match comp {
                0 => {
                    // eps^2 B^2 cos^2 phi / (2 r)
                    let cos2 = TrigPoly::constant(0.5, vk).add(&phi_harmonic(0.5, 0.0, 2, res));
                    out.add_assign_scaled(
                        0.5 * inverse_power_derivative(1, d, r0),
                        &e2b2.mul(&cos2)?,
                    );
                }
                1 => {
                    // -eps^2 B^2 sin 2 phi / (2 r^2)
                    let s2 = phi_harmonic(0.0, 1.0, 2, res);
                    out.add_assign_scaled(
                        -0.5 * inverse_power_derivative(2, d, r0),
                        &e2b2.mul(&s2)?,
                    );
                }
                _ => return Err(Error::InvalidParameter(format!("drift component {comp}"))),
            }
        }
        Ok(out)
    }

    fn diffusion_taylor(&self, row: usize, j: u32, d: usize) -> Result<TrigPoly> {
        let res = &self.resonance;
        let vk = res.varkappa;
        if j != res.p {
            return Ok(TrigPoly::zero(vk));
        }
        let b = s_profile(self.params.b0, self.params.b1, vk);
        match row {
            0 if d == 0 => b.mul(&phi_harmonic(0.0, -1.0, 1, res)),
            0 => Ok(TrigPoly::zero(vk)),
            1 => b.mul(&phi_harmonic(
                -inverse_power_derivative(1, d, res.r0),
                0.0,
                1,
                res,
            )),
            _ => Err(Error::InvalidParameter(format!("noise row {row}"))),
        }
    }
}
