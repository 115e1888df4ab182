//! Decay envelopes `mu(t)`, their logarithmic derivative, the power integrals
//! `zeta_h` and the perturbation phase `S(t)`.

use crate::error::{Error, Result};
use crate::numeric;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Built-in decay laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvelopeKind {
    /// `mu = t^(-1/q)`
    Power { q: u32 },
    /// `mu = t^(-1/q) log t`
    PowerLog { q: u32 },
}

/// A user-supplied decay law.
pub trait CustomEnvelope: Send + Sync {
    fn mu(&self, t: f64) -> f64;
    fn ell(&self, t: f64) -> f64;
    /// `(m, chi_m)` as in the decay conditions.
    fn exponents(&self) -> (u32, f64);
    /// Whether `mu^(h/2)` fails to be integrable at infinity.
    fn power_diverges(&self, h: u32) -> bool;
}

#[derive(Clone)]
enum Law {
    Builtin(EnvelopeKind),
    Custom(Arc<dyn CustomEnvelope>),
}

/// A decay envelope together with its reference time `tau0`.
#[derive(Clone)]
pub struct DecayEnvelope {
    law: Law,
    tau0: f64,
}

impl fmt::Debug for DecayEnvelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.law {
            Law::Builtin(k) => write!(f, "DecayEnvelope({k:?}, tau0 = {})", self.tau0),
            Law::Custom(_) => write!(f, "DecayEnvelope(custom, tau0 = {})", self.tau0),
        }
    }
}

/// Value of a `zeta_h` integral with the integrability flag of `mu^(h/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zeta {
    pub value: f64,
    pub divergent: bool,
}

impl DecayEnvelope {
    pub fn power(q: u32, tau0: f64) -> Result<Self> {
        Self::new(EnvelopeKind::Power { q }, Some(tau0))
    }

    pub fn power_log(q: u32, tau0: f64) -> Result<Self> {
        Self::new(EnvelopeKind::PowerLog { q }, Some(tau0))
    }

    /// Builds a built-in envelope; `tau0` defaults to 1 for `Power` and
    /// `e^q + 1` for `PowerLog`.
    pub fn new(kind: EnvelopeKind, tau0: Option<f64>) -> Result<Self> {
        let (q, min_tau0) = match kind {
            EnvelopeKind::Power { q } => (q, 0.0),
            EnvelopeKind::PowerLog { q } => (q, (q as f64).exp() + 1.0),
        };
        if q == 0 {
            return Err(Error::InvalidParameter(
                "envelope exponent q must be positive".into(),
            ));
        }
        let tau0 = tau0.unwrap_or(match kind {
            EnvelopeKind::Power { .. } => 1.0,
            EnvelopeKind::PowerLog { .. } => min_tau0,
        });
        if !(tau0 > 0.0 && tau0 >= min_tau0 && tau0.is_finite()) {
            return Err(Error::domain(
                tau0,
                format!("tau0 must be positive and at least {min_tau0}"),
            ));
        }
        Ok(Self {
            law: Law::Builtin(kind),
            tau0,
        })
    }

    /// Wraps a user-supplied law after probing the decay-condition limits at
    /// `t = 1e6` and `t = 1e8`.
    pub fn custom(law: Arc<dyn CustomEnvelope>, tau0: f64) -> Result<Self> {
        let (m, chi) = law.exponents();
        if m == 0 || chi > 0.0 {
            return Err(Error::InvalidParameter(
                "custom envelope needs m >= 1 and chi_m <= 0".into(),
            ));
        }
        let env = Self {
            law: Law::Custom(law),
            tau0,
        };
        let approaches = |early: f64, late: f64, target: f64| {
            early.is_finite()
                && late.is_finite()
                && ((late - target).abs() <= (early - target).abs()
                    || (late - target).abs() < 1e-12)
        };
        // Log factors can delay the approach, so later probe pairs are tried too.
        let mut ok = false;
        for (t1, t2) in [(1e6, 1e8), (1e8, 1e16), (1e16, 1e32)] {
            let (a, b) = env.limit_probes(t1)?;
            let (c, d) = env.limit_probes(t2)?;
            if approaches(a, c, chi) && approaches(b, d, 0.0) {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::AssumptionViolated(
                "custom envelope does not approach its declared (m, chi_m) limits".into(),
            ));
        }
        if !(env.mu(1e8)? < env.mu(1e6)? && env.mu(1e6)? > 0.0) {
            return Err(Error::AssumptionViolated(
                "custom envelope is not positive and decreasing".into(),
            ));
        }
        Ok(env)
    }

    pub fn kind(&self) -> Option<EnvelopeKind> {
        match self.law {
            Law::Builtin(k) => Some(k),
            Law::Custom(_) => None,
        }
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    fn check(&self, t: f64) -> Result<()> {
        if !(t >= self.tau0) || !t.is_finite() {
            return Err(Error::domain(
                t,
                format!("envelope is defined for t >= {}", self.tau0),
            ));
        }
        Ok(())
    }

    pub fn mu(&self, t: f64) -> Result<f64> {
        Ok(self.eval(t)?.0)
    }

    pub fn ell(&self, t: f64) -> Result<f64> {
        Ok(self.eval(t)?.1)
    }

    /// `(mu(t), ell(t))`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        self.check(t)?;
        Ok(self.eval_unchecked(t))
    }

    pub(crate) fn eval_unchecked(&self, t: f64) -> (f64, f64) {
        match &self.law {
            Law::Builtin(EnvelopeKind::Power { q }) => {
                let q = *q as f64;
                (t.powf(-1.0 / q), -1.0 / (q * t))
            }
            Law::Builtin(EnvelopeKind::PowerLog { q }) => {
                let q = *q as f64;
                let lt = t.ln();
                (t.powf(-1.0 / q) * lt, -(1.0 - q / lt) / (q * t))
            }
            Law::Custom(c) => (c.mu(t), c.ell(t)),
        }
    }

    /// `(m, chi_m)` from the decay conditions.
    pub fn mu_exponents(&self) -> (u32, f64) {
        match &self.law {
            Law::Builtin(EnvelopeKind::Power { q }) => (*q, -1.0 / *q as f64),
            Law::Builtin(EnvelopeKind::PowerLog { q }) => (*q, 0.0),
            Law::Custom(c) => c.exponents(),
        }
    }

    /// `(ell / mu^m, mu^(m+1) / ell)` at time `t`.
    pub fn limit_probes(&self, t: f64) -> Result<(f64, f64)> {
        let (mu, ell) = self.eval(t)?;
        let m = self.mu_exponents().0 as i32;
        Ok((ell / mu.powi(m), mu.powi(m + 1) / ell))
    }

    /// Whether `mu^(h/2)` is not integrable on `(t0, inf)`.
    pub fn zeta_diverges(&self, h: i32) -> bool {
        if h <= 0 {
            return true;
        }
        match &self.law {
            Law::Builtin(EnvelopeKind::Power { q })
            | Law::Builtin(EnvelopeKind::PowerLog { q }) => h as u32 <= 2 * q,
            Law::Custom(c) => c.power_diverges(h as u32),
        }
    }

    /// `zeta_h(t0, t) = int_{t0}^{t} mu^(h/2)`. Negative `h` is accepted and
    /// integrates the growing power `mu^(h/2)`.
    pub fn zeta(&self, h: i32, t0: f64, t: f64) -> Result<Zeta> {
        self.check(t0)?;
        if t < t0 {
            return Err(Error::domain(t, format!("zeta needs t >= t0 = {t0}")));
        }
        let divergent = self.zeta_diverges(h);
        if t == t0 {
            return Ok(Zeta {
                value: 0.0,
                divergent,
            });
        }
        let value = match &self.law {
            Law::Builtin(EnvelopeKind::Power { q }) => {
                let e = 1.0 - h as f64 / (2.0 * *q as f64);
                if e.abs() < 1e-15 {
                    (t / t0).ln()
                } else if h == 0 {
                    t - t0
                } else {
                    power_difference(t0, t, e) / e
                }
            }
            Law::Builtin(EnvelopeKind::PowerLog { q }) => power_log_zeta(*q, h, t0, t)?,
            Law::Custom(_) => self.zeta_quadrature(h, t0, t)?,
        };
        Ok(Zeta { value, divergent })
    }

    fn zeta_quadrature(&self, h: i32, t0: f64, t: f64) -> Result<f64> {
        // Integrate in log time: int mu^(h/2)(e^x) e^x dx.
        let half = h as f64 / 2.0;
        numeric::integrate(
            |x| {
                let s = x.exp();
                self.eval_unchecked(s).0.powf(half) * s
            },
            t0.ln(),
            t.ln(),
            1e-13,
            0.0,
        )
    }
}

/// `t^e - t0^e` computed without cancellation when `t` is close to `t0`.
fn power_difference(t0: f64, t: f64, e: f64) -> f64 {
    t0.powf(e) * (e * (t / t0).ln()).exp_m1()
}

/// `int_{t0}^{t} (s^(-1/q) log s)^(h/2) ds`.
fn power_log_zeta(q: u32, h: i32, t0: f64, t: f64) -> Result<f64> {
    let half = h as f64 / 2.0;
    let a = 1.0 - half / q as f64;
    if h % 2 == 0 && h >= 0 {
        // Integer power of log: closed form via repeated integration by parts.
        let j = (h / 2) as u32;
        let antiderivative = |s: f64| -> f64 {
            let l = s.ln();
            if a.abs() < 1e-15 {
                return l.powi(j as i32 + 1) / (j as f64 + 1.0);
            }
            // int s^(a-1) l^j ds = s^a sum_i (-1)^i j!/(j-i)! l^(j-i) / a^(i+1)
            let mut sum = 0.0;
            let mut coef = 1.0;
            for i in 0..=j {
                sum += coef * l.powi((j - i) as i32) / a.powi(i as i32 + 1);
                coef *= -((j - i) as f64);
            }
            s.powf(a) * sum
        };
        let v = antiderivative(t) - antiderivative(t0);
        if v.is_finite() {
            return Ok(v);
        }
    }
    numeric::integrate(
        |x| {
            let s = x.exp();
            (s.powf(-1.0 / q as f64) * x).powf(half) * s
        },
        t0.ln(),
        t.ln(),
        1e-13,
        0.0,
    )
}

/// The phase `S(t) = s0 t + sum_k s_k int_{t0}^{t} mu^k`.
#[derive(Debug, Clone)]
pub struct PerturbationPhase {
    pub s0: f64,
    pub s: Vec<f64>,
    pub envelope: DecayEnvelope,
    pub t0: f64,
}

impl PerturbationPhase {
    pub fn new(s0: f64, s: Vec<f64>, envelope: DecayEnvelope, t0: f64) -> Result<Self> {
        if s0 == 0.0 || !s0.is_finite() {
            return Err(Error::InvalidParameter(
                "phase rate s0 must be finite and nonzero".into(),
            ));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "phase corrections must be finite".into(),
            ));
        }
        envelope.check(t0)?;
        Ok(Self {
            s0,
            s,
            envelope,
            t0,
        })
    }

    /// `S(t)`.
    pub fn phase(&self, t: f64) -> Result<f64> {
        if t < self.t0 {
            return Err(Error::domain(
                t,
                format!("phase is defined for t >= {}", self.t0),
            ));
        }
        let mut total = self.s0 * t;
        for (k, sk) in self.s.iter().enumerate() {
            if *sk != 0.0 {
                total += sk * self.envelope.zeta(2 * (k as i32 + 1), self.t0, t)?.value;
            }
        }
        Ok(total)
    }

    /// `S'(t) = s0 + sum_k s_k mu^k`.
    pub fn rate(&self, t: f64) -> Result<f64> {
        let mu = self.envelope.mu(t)?;
        Ok(self.s0
            + self
                .s
                .iter()
                .enumerate()
                .map(|(k, sk)| sk * mu.powi(k as i32 + 1))
                .sum::<f64>())
    }

    pub fn has_corrections(&self) -> bool {
        self.s.iter().any(|v| *v != 0.0)
    }
}
