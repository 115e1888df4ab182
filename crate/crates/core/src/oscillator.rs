//! Action-angle geometry of the softening Duffing oscillator
//! `x'' + x - theta x^3 = 0`.

use crate::error::{Error, Result};
use crate::numeric;
use crate::specfun::{ellint_k, jacobi_sn_cn_dn, EllipticModulus};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, TAU};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuffingOscillator {
    theta: f64,
}

/// Amplitude and angle of a point on a closed orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionAngleState {
    pub r: f64,
    pub phi: f64,
}

/// Angle coordinates and their first partials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleCoords {
    pub x1: f64,
    pub x2: f64,
    pub dx1_dr: f64,
    pub dx1_dphi: f64,
    pub dx2_dr: f64,
    pub dx2_dphi: f64,
}

/// Quantities of one orbit that depend only on the amplitude.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Orbit {
    pub r: f64,
    pub k: EllipticModulus,
    /// `sqrt(1 + k^2)`
    pub stretch: f64,
    pub nu: f64,
}

impl Orbit {
    /// `(X1, X2)` at angle `phi`.
    pub fn point(&self, phi: f64) -> (f64, f64) {
        let u = phi / (self.nu * self.stretch);
        let (sn, cn, dn) = jacobi_sn_cn_dn(u, self.k);
        (self.r * self.stretch * sn, self.r * cn * dn)
    }
}

impl DuffingOscillator {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidParameter("theta must be positive".into()));
        }
        Ok(Self { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Largest amplitude of a closed orbit, `(2 theta)^(-1/2)`.
    pub fn r_max(&self) -> f64 {
        (2.0 * self.theta).sqrt().recip()
    }

    pub fn potential(&self, x: f64) -> f64 {
        0.5 * x * x - 0.25 * self.theta * x.powi(4)
    }

    pub fn force(&self, x: f64) -> f64 {
        x - self.theta * x.powi(3)
    }

    /// Modulus `k_r` solving `(k + 1/k)^(-2) = theta r^2 / 2`.
    pub fn modulus_kr(&self, r: f64) -> Result<EllipticModulus> {
        let rm = self.r_max();
        if !(r > 0.0 && r <= rm) {
            return Err(Error::domain(r, format!("amplitude must lie in (0, {rm}]")));
        }
        let y = 0.5 * self.theta * r * r;
        let s = y.sqrt().recip();
        let disc = (s * s - 4.0).max(0.0).sqrt();
        let k = (2.0 / (s + disc)).min(1.0);
        EllipticModulus::new(k)
    }

    pub(crate) fn orbit(&self, r: f64) -> Result<Orbit> {
        let k = self.modulus_kr(r)?;
        if k.k() >= 1.0 {
            return Err(Error::domain(
                r,
                "separatrix amplitude has no finite period",
            ));
        }
        let stretch = (1.0 + k.k() * k.k()).sqrt();
        let period = 4.0 * ellint_k(k)? * stretch;
        Ok(Orbit {
            r,
            k,
            stretch,
            nu: TAU / period,
        })
    }

    /// `nu(r)` alone.
    pub fn nu(&self, r: f64) -> Result<f64> {
        let rm = self.r_max();
        if !(0.0..rm).contains(&r) {
            return Err(Error::domain(
                r,
                format!("frequency is defined for r in [0, {rm})"),
            ));
        }
        if r == 0.0 {
            return Ok(1.0);
        }
        Ok(self.orbit(r)?.nu)
    }

    /// `(nu(r), nu'(r))` with a central-difference derivative.
    pub fn frequency(&self, r: f64) -> Result<(f64, f64)> {
        let nu = self.nu(r)?;
        let h = (1e-6f64).max(1e-8 * r);
        let rm = self.r_max();
        let d = if r - h < 0.0 {
            // nu is even in r.
            (self.nu(r + h)? - self.nu((r - h).abs())?) / (2.0 * h)
        } else if r + h >= rm {
            (3.0 * nu - 4.0 * self.nu(r - h)? + self.nu(r - 2.0 * h)?) / (2.0 * h)
        } else {
            (self.nu(r + h)? - self.nu(r - h)?) / (2.0 * h)
        };
        Ok((nu, d))
    }

    /// Derivatives `nu^(j)(r)` for `j = 0..=order` (order at most 4).
    pub fn nu_derivatives(&self, r: f64, order: usize) -> Result<Vec<f64>> {
        if order == 0 {
            return Ok(vec![self.nu(r)?]);
        }
        let rm = self.r_max();
        let h = 0.05 * r.min(rm - r);
        if !(h > 0.0) {
            return Err(Error::domain(
                r,
                "amplitude too close to the domain edge for derivatives",
            ));
        }
        let mut out = vec![self.nu(r)?];
        for j in 1..=order {
            out.push(numeric::derivative(
                |x| self.nu(x).unwrap_or(f64::NAN),
                r,
                j,
                h,
            ));
        }
        Ok(out)
    }

    /// `(X1, X2)` at angle `phi` on the orbit of amplitude `r`.
    pub fn point(&self, phi: f64, r: f64) -> Result<(f64, f64)> {
        Ok(self.orbit(r)?.point(phi))
    }

    fn r_step(&self, r: f64) -> f64 {
        (1e-4 * r).min(0.25 * (self.r_max() - r)).min(0.25 * r)
    }

    /// Angle coordinates and their partials at `(phi, r)`.
    pub fn angle_coords(&self, phi: f64, r: f64) -> Result<AngleCoords> {
        let orbit = self.orbit(r)?;
        let (x1, x2) = orbit.point(phi);
        let h = self.r_step(r);
        let p1 = self.point(phi, r + h)?;
        let m1 = self.point(phi, r - h)?;
        let p2 = self.point(phi, r + 2.0 * h)?;
        let m2 = self.point(phi, r - 2.0 * h)?;
        let d = |a2: f64, a1: f64, b1: f64, b2: f64| (-a2 + 8.0 * a1 - 8.0 * b1 + b2) / (12.0 * h);
        Ok(AngleCoords {
            x1,
            x2,
            dx1_dr: d(p2.0, p1.0, m1.0, m2.0),
            dx1_dphi: x2 / orbit.nu,
            dx2_dr: d(p2.1, p1.1, m1.1, m2.1),
            dx2_dphi: -self.force(x1) / orbit.nu,
        })
    }

    /// Resonant amplitude `r0` with `nu(r0) = kappa s0 / varkappa` and the
    /// slope `eta = nu'(r0)`.
    pub fn resonant_amplitude(&self, kappa: u32, varkappa: u32, s0: f64) -> Result<(f64, f64)> {
        if kappa == 0 || varkappa == 0 || gcd(kappa, varkappa) != 1 {
            return Err(Error::InvalidParameter(
                "kappa and varkappa must be coprime positive integers".into(),
            ));
        }
        let target = kappa as f64 * s0 / varkappa as f64;
        if !(target > 0.0 && target < 1.0) {
            return Err(Error::NoResonance(format!(
                "target frequency {target} outside (0, 1)"
            )));
        }
        let rm = self.r_max();
        let mut hi = rm * (1.0 - 1e-15);
        while self.nu(hi)? > target {
            // nu -> 0 only logarithmically near the separatrix.
            let next = rm - 0.5 * (rm - hi) * 1e-3;
            if next >= rm || next == hi {
                return Err(Error::NoResonance(format!(
                    "frequency {target} too small to resolve"
                )));
            }
            hi = next;
        }
        let r0 = numeric::bisect(|r| self.nu(r).unwrap_or(0.0) - target, 0.0, hi, 1e-15 * rm)?;
        let (_, eta) = self.frequency(r0)?;
        if eta == 0.0 {
            return Err(Error::AssumptionViolated(
                "frequency slope vanishes at resonance".into(),
            ));
        }
        Ok((r0, eta))
    }

    /// Inverse of the angle-coordinate map.
    pub fn action_angle_from_state(&self, x1: f64, x2: f64) -> Result<ActionAngleState> {
        let e = 2.0 * self.potential(x1) + x2 * x2;
        let rm = self.r_max();
        if !(e > 0.0 && e < rm * rm) || x1.abs() >= 1.0 / self.theta.sqrt() {
            return Err(Error::domain(e, "state outside the potential well"));
        }
        let r = e.sqrt();
        let orbit = self.orbit(r)?;
        // The orbit turns clockwise; the quadrant fixes a quarter-period bracket.
        let q = match (x1 >= 0.0, x2 >= 0.0) {
            (true, true) => 0.0,
            (true, false) => 1.0,
            (false, false) => 2.0,
            (false, true) => 3.0,
        };
        let lo = q * FRAC_PI_2;
        let hi = lo + FRAC_PI_2;
        // Cross product of the orbit point with the target: monotone inside a quarter.
        let cross = |phi: f64| {
            let (a, b) = orbit.point(phi);
            a * x2 - b * x1
        };
        let flo = cross(lo);
        let fhi = cross(hi);
        let mut phi = if flo == 0.0 {
            lo
        } else if fhi == 0.0 {
            hi
        } else {
            numeric::bisect(cross, lo, hi, 1e-14)?
        };
        let (a, b) = orbit.point(phi);
        let slope = (b * x2 + self.force(a) * x1) / orbit.nu;
        if slope.abs() > 1e-300 {
            phi -= cross(phi) / slope;
        }
        Ok(ActionAngleState {
            r,
            phi: phi.rem_euclid(TAU),
        })
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Reduce an angle to `[0, 2 pi)`.
pub fn reduce_angle(phi: f64) -> f64 {
    let v = phi.rem_euclid(TAU);
    if v >= TAU {
        0.0
    } else {
        v
    }
}
