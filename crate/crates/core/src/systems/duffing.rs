//! Duffing oscillator `x'' + x - theta x^3 = mu^n (P(S) x + Q(S) x') + eps mu^p B(S) w'`,
//! simulated in Cartesian coordinates and analysed in its action-angle chart.

use super::{s_profile, Chart, PerturbedSystem, Resonance};
use crate::envelope::{DecayEnvelope, PerturbationPhase};
use crate::error::{Error, Result};
use crate::numeric;
use crate::oscillator::DuffingOscillator;
use crate::trigpoly::{TrigPoly, MAX_PSI_MODE};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::sync::OnceLock;

/// Angle grid used for the Fourier fits.
const GRID: usize = 64;
/// Highest Taylor order in `r` prepared for the averaging recursion.
const TAYLOR_DEPTH: usize = 3;
/// Allowed relative energy of the discarded Fourier tail.
const TAIL_ENERGY: f64 = 1e-10;
/// Fitted modes below this fraction of the largest one are dropped; for
/// r-derivatives the floor grows with the finite-difference noise.
const FIT_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DuffingParams {
    pub theta: f64,
    #[serde(rename = "P0", default)]
    pub p0: f64,
    #[serde(rename = "P1", default)]
    pub p1: f64,
    #[serde(rename = "Q0", default)]
    pub q0: f64,
    #[serde(rename = "Q1", default)]
    pub q1: f64,
    #[serde(rename = "B0", default)]
    pub b0: f64,
    #[serde(rename = "B1", default)]
    pub b1: f64,
}

impl Default for DuffingParams {
    fn default() -> Self {
        Self {
            theta: 1.0 / 32.0,
            p0: 0.0,
            p1: 1.0,
            q0: -0.25,
            q1: 0.0,
            b0: 3.6,
            b1: 0.0,
        }
    }
}

/// Orbit functions whose Fourier coefficients feed the series coefficients.
#[derive(Clone, Copy)]
enum Profile {
    /// `X1 X2 / r`
    A1P = 0,
    /// `X2^2 / r`
    A1Q,
    /// `U(X1) / r^3`
    A1Eps,
    /// `-nu X1_r X1 / r`
    A2P,
    /// `-nu X1_r X2 / r`
    A2Q,
    /// Second-order Itô term of the angle equation per unit `eps^2 B^2`.
    A2Eps,
    /// `X2 / r`
    B1,
    /// `-nu X1_r / r`
    B2,
}

const PROFILES: usize = 8;
const MODES: usize = MAX_PSI_MODE as usize + 1;

/// Pointwise orbit data at one `(r, phi)`.
struct Local {
    x1: f64,
    x2: f64,
    x1_r: f64,
    x2_r: f64,
    x1_rr: f64,
}

#[derive(Debug, Clone)]
pub struct Duffing {
    params: DuffingParams,
    osc: DuffingOscillator,
    epsilon: f64,
    resonance: Resonance,
    phase: PerturbationPhase,
    /// `[d][profile][j]` Fourier coefficients of r-derivatives at `r0`, `j = 0..=16`.
    taylor: OnceLock<std::result::Result<Vec<Vec<Vec<Complex64>>>, Error>>,
}

impl Duffing {
    pub fn new(
        params: DuffingParams,
        epsilon: f64,
        n: u32,
        p: u32,
        kappa: u32,
        varkappa: u32,
        phase: PerturbationPhase,
    ) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::InvalidParameter(
                "orders n and p must be positive".into(),
            ));
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::InvalidParameter(
                "epsilon must be finite and nonnegative".into(),
            ));
        }
        let osc = DuffingOscillator::new(params.theta)?;
        let (r0, eta) = osc.resonant_amplitude(kappa, varkappa, phase.s0)?;
        let resonance = Resonance {
            n,
            p,
            kappa,
            varkappa,
            r0,
            eta,
            r_max: osc.r_max(),
        };
        Ok(Self {
            params,
            osc,
            epsilon,
            resonance,
            phase,
            taylor: OnceLock::new(),
        })
    }

    /// Forcing on `mu = t^(-1/4)` with `S = 3t/2`, `kappa = 1`, `varkappa = 2`.
    pub fn standard(params: DuffingParams, epsilon: f64, n: u32, p: u32) -> Result<Self> {
        let env = DecayEnvelope::power(4, 1.0)?;
        let phase = PerturbationPhase::new(1.5, vec![], env, 1.0)?;
        Self::new(params, epsilon, n, p, 1, 2, phase)
    }

    pub fn params(&self) -> &DuffingParams {
        &self.params
    }

    pub fn oscillator(&self) -> &DuffingOscillator {
        &self.osc
    }

    fn pq_b(&self, s: f64) -> (f64, f64, f64) {
        let sn = s.sin();
        let p = &self.params;
        (p.p0 + p.p1 * sn, p.q0 + p.q1 * sn, p.b0 + p.b1 * sn)
    }

    fn taylor_step(&self) -> f64 {
        let r0 = self.resonance.r0;
        0.05 * r0.min(self.resonance.r_max - r0)
    }

    fn inner_step(&self, r: f64) -> f64 {
        1e-2 * r.min(self.resonance.r_max - r)
    }

    /// Orbit data at every grid angle for amplitude `r`.
    fn locals(&self, r: f64) -> Result<Vec<Local>> {
        let h = self.inner_step(r);
        let orbits = [
            self.osc.orbit(r - 2.0 * h)?,
            self.osc.orbit(r - h)?,
            self.osc.orbit(r)?,
            self.osc.orbit(r + h)?,
            self.osc.orbit(r + 2.0 * h)?,
        ];
        Ok((0..GRID)
            .map(|i| {
                let phi = TAU * i as f64 / GRID as f64;
                let p: Vec<(f64, f64)> = orbits.iter().map(|o| o.point(phi)).collect();
                let d1 =
                    |f: &dyn Fn(usize) -> f64| (f(0) - 8.0 * f(1) + 8.0 * f(3) - f(4)) / (12.0 * h);
                let d2 = |f: &dyn Fn(usize) -> f64| {
                    (-f(0) + 16.0 * f(1) - 30.0 * f(2) + 16.0 * f(3) - f(4)) / (12.0 * h * h)
                };
                let x1 = |k: usize| p[k].0;
                let x2 = |k: usize| p[k].1;
                Local {
                    x1: p[2].0,
                    x2: p[2].1,
                    x1_r: d1(&x1),
                    x2_r: d1(&x2),
                    x1_rr: d2(&x1),
                }
            })
            .collect())
    }

    /// All profile functions at a single `(r, phi)` computed from local data.
    fn profile_values(&self, l: &Local, r: f64, nu: f64, dnu: f64) -> [f64; PROFILES] {
        let u = self.osc.potential(l.x1);
        let r2 = r * r;
        let mut v = [0.0; PROFILES];
        v[Profile::A1P as usize] = l.x1 * l.x2 / r;
        v[Profile::A1Q as usize] = l.x2 * l.x2 / r;
        v[Profile::A1Eps as usize] = u / (r2 * r);
        v[Profile::A2P as usize] = -nu * l.x1_r * l.x1 / r;
        v[Profile::A2Q as usize] = -nu * l.x1_r * l.x2 / r;
        v[Profile::A2Eps as usize] = 0.5
            * (nu * l.x1_r * l.x2_r / r2
                - 2.0 * dnu * l.x1_r * l.x2 / r2
                - nu * l.x2 / r * (l.x1_rr / r - l.x1_r / r2));
        v[Profile::B1 as usize] = l.x2 / r;
        v[Profile::B2 as usize] = -nu * l.x1_r / r;
        v
    }

    /// Fourier coefficients `j = 0..=16` of each profile at amplitude `r`,
    /// flattened as `[profile][j][re, im]`.
    fn fourier_profiles(&self, r: f64) -> Result<Vec<f64>> {
        let (nu, dnu) = self.osc.frequency(r)?;
        let locals = self.locals(r)?;
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(GRID);
        let values: Vec<[f64; PROFILES]> = locals
            .iter()
            .map(|l| self.profile_values(l, r, nu, dnu))
            .collect();
        let mut out = Vec::with_capacity(PROFILES * MODES * 2);
        for f in 0..PROFILES {
            let mut buf: Vec<Complex64> =
                values.iter().map(|v| Complex64::new(v[f], 0.0)).collect();
            fft.process(&mut buf);
            let total: f64 = buf.iter().map(|c| c.norm_sqr()).sum();
            let tail: f64 = buf[MODES..GRID - MAX_PSI_MODE as usize]
                .iter()
                .map(|c| c.norm_sqr())
                .sum();
            if total > 0.0 && tail > TAIL_ENERGY * total {
                return Err(Error::CapExceeded(format!(
                    "orbit Fourier tail energy {:.2e} exceeds tolerance at r = {r}",
                    tail / total
                )));
            }
            for c in buf.iter().take(MODES) {
                let c = c / GRID as f64;
                out.push(c.re);
                out.push(c.im);
            }
        }
        Ok(out)
    }

    fn taylor_table(&self) -> Result<&Vec<Vec<Vec<Complex64>>>> {
        self.taylor
            .get_or_init(|| {
                let r0 = self.resonance.r0;
                let step = self.taylor_step();
                let mut table = Vec::with_capacity(TAYLOR_DEPTH + 1);
                for d in 0..=TAYLOR_DEPTH {
                    let mut failure = None;
                    let flat = numeric::derivative_vec(
                        |r| match self.fourier_profiles(r) {
                            Ok(v) => v,
                            Err(e) => {
                                failure.get_or_insert(e);
                                vec![f64::NAN; PROFILES * MODES * 2]
                            }
                        },
                        r0,
                        d,
                        step,
                    );
                    if let Some(e) = failure {
                        return Err(e);
                    }
                    let per: Vec<Vec<Complex64>> = (0..PROFILES)
                        .map(|f| {
                            (0..MODES)
                                .map(|j| {
                                    let k = 2 * (f * MODES + j);
                                    Complex64::new(flat[k], flat[k + 1])
                                })
                                .collect()
                        })
                        .collect();
                    table.push(per);
                }
                Ok(table)
            })
            .as_ref()
            .map_err(|e| e.clone())
    }

    /// The profile's `d`-th r-derivative at `r0` as a polynomial in `(psi, S)`.
    fn profile_poly(&self, f: Profile, d: usize) -> Result<TrigPoly> {
        if d > TAYLOR_DEPTH {
            return Err(Error::UnsupportedOrder {
                order: d,
                reason: format!("Taylor depth in r is limited to {TAYLOR_DEPTH}"),
            });
        }
        let table = self.taylor_table()?;
        let coefs = &table[d][f as usize];
        let scale = |d: usize| {
            table[d][f as usize]
                .iter()
                .map(|c| c.norm())
                .fold(0.0, f64::max)
        };
        let step = self.taylor_step();
        let floor = (FIT_FLOOR * scale(d)).max(FIT_FLOOR * scale(0) / step.powi(d as i32));
        // Half-turn symmetry of the orbit: noise profiles carry odd harmonics only.
        let odd = matches!(f, Profile::B1 | Profile::B2);
        let kappa = self.resonance.kappa as i32;
        let mut modes = BTreeMap::new();
        for (j, c) in coefs.iter().enumerate() {
            let j = j as i32;
            if c.norm() <= floor || c.norm() == 0.0 || (j % 2 == 1) != odd {
                continue;
            }
            if j == 0 {
                modes.insert((0, 0), vec![Complex64::new(c.re, 0.0)]);
            } else {
                modes.insert((j, j * kappa), vec![*c]);
                modes.insert((-j, -j * kappa), vec![c.conj()]);
            }
        }
        TrigPoly::from_modes(modes, self.resonance.varkappa)
    }

    fn b_squared(&self) -> Result<TrigPoly> {
        let b = s_profile(self.params.b0, self.params.b1, self.resonance.varkappa);
        b.mul(&b)
    }

    /// Local orbit data at a single point.
    fn local_at(&self, r: f64, phi: f64) -> Result<Local> {
        let h = self.inner_step(r);
        let pts: Vec<(f64, f64)> = [-2.0, -1.0, 0.0, 1.0, 2.0]
            .iter()
            .map(|k| self.osc.point(phi, r + k * h))
            .collect::<Result<_>>()?;
        Ok(Local {
            x1: pts[2].0,
            x2: pts[2].1,
            x1_r: (pts[0].0 - 8.0 * pts[1].0 + 8.0 * pts[3].0 - pts[4].0) / (12.0 * h),
            x2_r: (pts[0].1 - 8.0 * pts[1].1 + 8.0 * pts[3].1 - pts[4].1) / (12.0 * h),
            x1_rr: (-pts[0].0 + 16.0 * pts[1].0 - 30.0 * pts[2].0 + 16.0 * pts[3].0 - pts[4].0)
                / (12.0 * h * h),
        })
    }

    fn check_r(&self, r: f64) -> Result<()> {
        let rm = self.resonance.r_max;
        if !(r > 0.0 && r < rm) {
            return Err(Error::domain(r, format!("amplitude must lie in (0, {rm})")));
        }
        Ok(())
    }
}

impl PerturbedSystem for Duffing {
    fn name(&self) -> &str {
        "duffing"
    }

    fn chart(&self) -> Chart {
        Chart::Cartesian
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
            ("P0", p.p0),
            ("P1", p.p1),
            ("Q0", p.q0),
            ("Q1", p.q1),
            ("B0", p.b0),
            ("B1", p.b1),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    fn nu_derivatives(&self, r: f64, order: usize) -> Result<Vec<f64>> {
        self.osc.nu_derivatives(r, order)
    }

    fn polar_drift_at(&self, r: f64, phi: f64, s: f64, mu: f64) -> Result<[f64; 2]> {
        self.check_r(r)?;
        let (nu, dnu) = self.osc.frequency(r)?;
        let l = self.local_at(r, phi)?;
        let v = self.profile_values(&l, r, nu, dnu);
        let (pp, qq, bb) = self.pq_b(s);
        let mun = mu.powi(self.resonance.n as i32);
        let mu2p = mu.powi(2 * self.resonance.p as i32);
        let e2b2 = (self.epsilon * bb).powi(2);
        Ok([
            mun * (pp * v[Profile::A1P as usize] + qq * v[Profile::A1Q as usize])
                + mu2p * e2b2 * v[Profile::A1Eps as usize],
            nu + mun * (pp * v[Profile::A2P as usize] + qq * v[Profile::A2Q as usize])
                + mu2p * e2b2 * v[Profile::A2Eps as usize],
        ])
    }

    fn polar_diffusion_at(&self, r: f64, phi: f64, s: f64, mu: f64) -> Result<[[f64; 2]; 2]> {
        self.check_r(r)?;
        let c = self.osc.angle_coords(phi, r)?;
        let nu = self.osc.nu(r)?;
        let g = self.epsilon * mu.powi(self.resonance.p as i32) * self.pq_b(s).2;
        Ok([[g * c.x2 / r, 0.0], [-g * nu * c.dx1_dr / r, 0.0]])
    }

    fn drift(&self, state: [f64; 2], t: f64) -> Result<[f64; 2]> {
        let (mu, s) = (self.phase.envelope.mu(t)?, self.phase.phase(t)?);
        let (pp, qq, _) = self.pq_b(s);
        let [x1, x2] = state;
        Ok([
            x2,
            -self.osc.force(x1) + mu.powi(self.resonance.n as i32) * (pp * x1 + qq * x2),
        ])
    }

    fn diffusion(&self, _state: [f64; 2], t: f64) -> Result<[[f64; 2]; 2]> {
        let (mu, s) = (self.phase.envelope.mu(t)?, self.phase.phase(t)?);
        let g = self.epsilon * mu.powi(self.resonance.p as i32) * self.pq_b(s).2;
        Ok([[0.0, 0.0], [g, 0.0]])
    }

    fn to_polar(&self, state: [f64; 2]) -> Result<(f64, f64)> {
        let s = self.osc.action_angle_from_state(state[0], state[1])?;
        Ok((s.r, s.phi))
    }

    fn from_polar(&self, r: f64, phi: f64) -> Result<[f64; 2]> {
        let (x1, x2) = self.osc.point(phi, r)?;
        Ok([x1, x2])
    }

    fn cartesian(&self, state: [f64; 2]) -> [f64; 2] {
        state
    }

    fn in_domain(&self, state: [f64; 2]) -> bool {
        let [x1, x2] = state;
        let rm = self.resonance.r_max;
        let e = 2.0 * self.osc.potential(x1) + x2 * x2;
        e.is_finite() && x1.abs() < 1.0 / self.params.theta.sqrt() && e < (0.98 * rm).powi(2)
    }

    fn drift_orders(&self) -> Vec<u32> {
        let mut v = vec![self.resonance.n, 2 * self.resonance.p];
        v.sort_unstable();
        v.dedup();
        v
    }

    fn diffusion_orders(&self) -> Vec<u32> {
        vec![self.resonance.p]
    }

    fn drift_taylor(&self, comp: usize, j: u32, d: usize) -> Result<TrigPoly> {
        let vk = self.resonance.varkappa;
        let mut out = TrigPoly::zero(vk);
        if comp > 1 {
            return Err(Error::InvalidParameter(format!("drift component {comp}")));
        }
        if j == self.resonance.n {
            let (fp, fq) = if comp == 0 {
                (Profile::A1P, Profile::A1Q)
            } else {
                (Profile::A2P, Profile::A2Q)
            };
            let pp = s_profile(self.params.p0, self.params.p1, vk);
            let qq = s_profile(self.params.q0, self.params.q1, vk);
            out.add_assign_scaled(1.0, &pp.mul(&self.profile_poly(fp, d)?)?);
            out.add_assign_scaled(1.0, &qq.mul(&self.profile_poly(fq, d)?)?);
        }
        if j == 2 * self.resonance.p && self.epsilon != 0.0 {
            let f = if comp == 0 {
                Profile::A1Eps
            } else {
                Profile::A2Eps
            };
            let term = self.b_squared()?.mul(&self.profile_poly(f, d)?)?;
            out.add_assign_scaled(self.epsilon * self.epsilon, &term);
        }
        Ok(out)
    }

    fn diffusion_taylor(&self, row: usize, j: u32, d: usize) -> Result<TrigPoly> {
        let vk = self.resonance.varkappa;
        if j != self.resonance.p {
            return Ok(TrigPoly::zero(vk));
        }
        let f = match row {
            0 => Profile::B1,
            1 => Profile::B2,
            _ => return Err(Error::InvalidParameter(format!("noise row {row}"))),
        };
        s_profile(self.params.b0, self.params.b1, vk).mul(&self.profile_poly(f, d)?)
    }
}
