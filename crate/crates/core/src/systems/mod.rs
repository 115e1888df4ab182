//! Planar perturbed systems in amplitude-phase form and the two concrete
//! instances: a polar model with quadratic frequency and the Duffing
//! oscillator with decaying parametric forcing.

mod duffing;
mod example1;

pub use duffing::{Duffing, DuffingParams};
pub use example1::{Example1, Example1Params};

use crate::envelope::{DecayEnvelope, PerturbationPhase};
use crate::error::{Error, Result};
use crate::trigpoly::TrigPoly;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Coordinates in which a system is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chart {
    Polar,
    Cartesian,
}

/// Resonance data `kappa s0 = varkappa nu(r0)`, `eta = nu'(r0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    /// Lowest power of `mu` in the drift perturbation.
    pub n: u32,
    /// Lowest power of `mu` in the noise.
    pub p: u32,
    pub kappa: u32,
    pub varkappa: u32,
    pub r0: f64,
    pub eta: f64,
    /// Amplitude bound of the unperturbed orbits.
    pub r_max: f64,
}

/// Component labels of the asymptotic expansions of drift and noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesTag {
    A1,
    A2,
    Alpha11,
    Alpha21,
    Alpha12,
    Alpha22,
}

/// One coefficient of the expansions in powers of `mu`, evaluated at `r = r0`
/// as a polynomial in `(psi, S)` with `phi = kappa S / varkappa + psi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesCoefficient {
    pub order: u32,
    pub tag: SeriesTag,
    pub value: TrigPoly,
}

/// A planar Itô system `dr = a1 dt + ..., dphi = (nu(r) + a2) dt + ...` with
/// drift and noise given as finite sums of powers of the decay envelope.
pub trait PerturbedSystem: Send + Sync {
    fn name(&self) -> &str;
    fn chart(&self) -> Chart;
    fn resonance(&self) -> &Resonance;
    fn envelope(&self) -> &DecayEnvelope;
    fn phase(&self) -> &PerturbationPhase;
    fn epsilon(&self) -> f64;
    fn parameters(&self) -> BTreeMap<String, f64>;

    /// `[nu(r), nu'(r), ..., nu^(order)(r)]`.
    fn nu_derivatives(&self, r: f64, order: usize) -> Result<Vec<f64>>;

    /// Polar drift `(dr, dphi)` including `nu(r)` at explicit `S` and `mu`.
    fn polar_drift_at(&self, r: f64, phi: f64, s: f64, mu: f64) -> Result<[f64; 2]>;
    /// Polar noise matrix including `epsilon`.
    fn polar_diffusion_at(&self, r: f64, phi: f64, s: f64, mu: f64) -> Result<[[f64; 2]; 2]>;

    /// Drift in the simulation chart.
    fn drift(&self, state: [f64; 2], t: f64) -> Result<[f64; 2]>;
    /// Noise matrix (including `epsilon`) in the simulation chart.
    fn diffusion(&self, state: [f64; 2], t: f64) -> Result<[[f64; 2]; 2]>;
    /// Chart state to `(r, phi)` with `phi` in `[0, 2 pi)`.
    fn to_polar(&self, state: [f64; 2]) -> Result<(f64, f64)>;
    fn from_polar(&self, r: f64, phi: f64) -> Result<[f64; 2]>;
    /// Cartesian `(x1, x2)` of a chart state, for path output.
    fn cartesian(&self, state: [f64; 2]) -> [f64; 2];
    /// Whether a chart state lies inside the simulation guard.
    fn in_domain(&self, state: [f64; 2]) -> bool;

    /// Powers `j` of `mu` carried by the drift perturbation.
    fn drift_orders(&self) -> Vec<u32>;
    /// Powers `j` of `mu` carried by the first noise column.
    fn diffusion_orders(&self) -> Vec<u32>;
    /// `d^d/dr^d` of the `mu^j` drift coefficient of component `comp` at `r0`.
    fn drift_taylor(&self, comp: usize, j: u32, d: usize) -> Result<TrigPoly>;
    /// `d^d/dr^d` of the `mu^j` first-column noise coefficient of row `row`
    /// at `r0`, without the factor `epsilon`.
    fn diffusion_taylor(&self, row: usize, j: u32, d: usize) -> Result<TrigPoly>;

    /// Series coefficient for a component tag at power `k` of `mu`.
    fn series_coefficient(&self, tag: SeriesTag, k: u32) -> Result<SeriesCoefficient> {
        let unsupported = |what: &str| Error::UnsupportedOrder {
            order: k as usize,
            reason: format!(
                "{} provides no {what} term at this power of mu",
                self.name()
            ),
        };
        let value = match tag {
            SeriesTag::A1 | SeriesTag::A2 => {
                if !self.drift_orders().contains(&k) {
                    return Err(unsupported("drift"));
                }
                self.drift_taylor(if tag == SeriesTag::A1 { 0 } else { 1 }, k, 0)?
            }
            SeriesTag::Alpha11 | SeriesTag::Alpha21 => {
                if !self.diffusion_orders().contains(&k) {
                    return Err(unsupported("noise"));
                }
                self.diffusion_taylor(if tag == SeriesTag::Alpha11 { 0 } else { 1 }, k, 0)?
            }
            SeriesTag::Alpha12 | SeriesTag::Alpha22 => {
                if !self.diffusion_orders().contains(&k) {
                    return Err(unsupported("noise"));
                }
                TrigPoly::zero(self.resonance().varkappa)
            }
        };
        Ok(SeriesCoefficient {
            order: k,
            tag,
            value,
        })
    }
}

/// Angle `phi = kappa S / varkappa + psi` as the mode `(1, kappa)`.
pub(crate) fn phi_harmonic(a: f64, b: f64, mult: i32, res: &Resonance) -> TrigPoly {
    TrigPoly::harmonic(a, b, mult, mult * res.kappa as i32, res.varkappa)
}

/// `c0 + c1 sin S`.
pub(crate) fn s_profile(c0: f64, c1: f64, varkappa: u32) -> TrigPoly {
    TrigPoly::constant(c0, varkappa).add(&TrigPoly::sin(0, varkappa as i32, varkappa).scale(c1))
}
