//! Trigonometric polynomials in two angles `(psi, S)` whose Fourier
//! coefficients are polynomials in the amplitude deviation `rho`, and the
//! averaging recursion built on them.

mod averaging;

pub use averaging::{build_averaged, AveragedSystem, CoefficientTable, ModeRecord, MAX_ORDER};

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Largest `|j|` (psi-mode) kept in any product.
pub const MAX_PSI_MODE: i32 = 16;
/// Largest `|l| / varkappa` (S-frequency) kept in any product.
pub const MAX_S_FREQUENCY: i32 = 16;
/// Largest polynomial degree in `rho`.
pub const MAX_DEGREE: usize = 6;
/// Coefficients at or below this magnitude are dropped.
pub const PRUNE: f64 = 1e-15;
/// Product entries below this fraction of `max|a| max|b|` are treated as zero.
const PRODUCT_ROUNDOFF: f64 = 1e-14;
/// Beyond-cap product modes below this fraction of `max|a| max|b|` are
/// dropped; larger ones are an error.
const CAP_SLACK: f64 = 1e-9;

/// Finite Fourier series `sum c_{j,l}(rho) exp(i (j psi + l S / varkappa))`
/// with Hermitian symmetry `c_{-j,-l} = conj(c_{j,l})`.
#[derive(Clone, PartialEq)]
pub struct TrigPoly {
    varkappa: u32,
    modes: BTreeMap<(i32, i32), Vec<Complex64>>,
}

impl fmt::Debug for TrigPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TrigPoly[varkappa={}]{{", self.varkappa)?;
        for ((j, l), p) in &self.modes {
            write!(f, " ({j},{l}):[")?;
            for c in p {
                write!(f, "{:+.3e}{:+.3e}i ", c.re, c.im)?;
            }
            write!(f, "]")?;
        }
        write!(f, " }}")
    }
}

fn trim(poly: &mut Vec<Complex64>) {
    while poly.last().is_some_and(|c| c.norm() <= PRUNE) {
        poly.pop();
    }
}

impl TrigPoly {
    pub fn zero(varkappa: u32) -> Self {
        assert!(varkappa >= 1, "varkappa must be positive");
        Self {
            varkappa,
            modes: BTreeMap::new(),
        }
    }

    /// Constant polynomial `c`.
    pub fn constant(c: f64, varkappa: u32) -> Self {
        Self::monomial(c, 0, varkappa)
    }

    /// `c rho^d`.
    pub fn monomial(c: f64, d: usize, varkappa: u32) -> Self {
        let mut p = vec![Complex64::new(0.0, 0.0); d + 1];
        p[d] = Complex64::new(c, 0.0);
        let mut t = Self::zero(varkappa);
        t.insert(0, 0, p);
        t
    }

    /// `a cos(j psi + l S / varkappa) + b sin(j psi + l S / varkappa)`.
    pub fn harmonic(a: f64, b: f64, j: i32, l: i32, varkappa: u32) -> Self {
        let mut t = Self::zero(varkappa);
        if j == 0 && l == 0 {
            t.insert(0, 0, vec![Complex64::new(a, 0.0)]);
            return t;
        }
        let c = Complex64::new(0.5 * a, -0.5 * b);
        t.insert(j, l, vec![c]);
        t.insert(-j, -l, vec![c.conj()]);
        t
    }

    pub fn cos(j: i32, l: i32, varkappa: u32) -> Self {
        Self::harmonic(1.0, 0.0, j, l, varkappa)
    }

    pub fn sin(j: i32, l: i32, varkappa: u32) -> Self {
        Self::harmonic(0.0, 1.0, j, l, varkappa)
    }

    /// Builds from raw `(j, l) -> polynomial` data; symmetry is the caller's
    /// responsibility and is checked.
    pub fn from_modes(modes: BTreeMap<(i32, i32), Vec<Complex64>>, varkappa: u32) -> Result<Self> {
        let mut t = Self::zero(varkappa);
        for ((j, l), p) in modes {
            t.insert(j, l, p);
        }
        t.check_caps()?;
        if !t.is_hermitian(1e-12) {
            return Err(Error::InvalidParameter(
                "trigonometric polynomial is not real-valued".into(),
            ));
        }
        Ok(t)
    }

    fn insert(&mut self, j: i32, l: i32, mut p: Vec<Complex64>) {
        trim(&mut p);
        if p.is_empty() {
            self.modes.remove(&(j, l));
        } else {
            self.modes.insert((j, l), p);
        }
    }

    pub fn varkappa(&self) -> u32 {
        self.varkappa
    }

    pub fn modes(&self) -> impl Iterator<Item = (&(i32, i32), &Vec<Complex64>)> {
        self.modes.iter()
    }

    pub fn coefficient(&self, j: i32, l: i32) -> &[Complex64] {
        self.modes.get(&(j, l)).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn is_zero(&self) -> bool {
        self.modes.is_empty()
    }

    /// Largest coefficient magnitude.
    pub fn max_abs(&self) -> f64 {
        self.modes
            .values()
            .flatten()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    pub fn degree(&self) -> usize {
        self.modes
            .values()
            .map(|p| p.len().saturating_sub(1))
            .max()
            .unwrap_or(0)
    }

    pub fn has_s_modes(&self) -> bool {
        self.modes.keys().any(|&(_, l)| l != 0)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.modes.iter().all(|(&(j, l), p)| {
            let q = self.coefficient(-j, -l);
            (0..p.len().max(q.len())).all(|i| {
                let a = p.get(i).copied().unwrap_or_default();
                let b = q.get(i).copied().unwrap_or_default();
                (a - b.conj()).norm() <= tol * (1.0 + a.norm())
            })
        })
    }

    fn check_caps(&self) -> Result<()> {
        for (&(j, l), p) in &self.modes {
            if j.abs() > MAX_PSI_MODE {
                return Err(Error::CapExceeded(format!(
                    "psi-mode {j} beyond {MAX_PSI_MODE}"
                )));
            }
            if l.abs() > MAX_S_FREQUENCY * self.varkappa as i32 {
                return Err(Error::CapExceeded(format!(
                    "S-mode {l}/{} beyond frequency {MAX_S_FREQUENCY}",
                    self.varkappa
                )));
            }
            if p.len() > MAX_DEGREE + 1 {
                return Err(Error::CapExceeded(format!(
                    "rho-degree {} beyond {MAX_DEGREE}",
                    p.len() - 1
                )));
            }
        }
        Ok(())
    }

    fn same_base(&self, other: &Self) {
        assert_eq!(
            self.varkappa, other.varkappa,
            "mixing trigonometric polynomials with different varkappa"
        );
    }

    pub fn add(&self, other: &Self) -> Self {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-1.0, other)
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        self.same_base(other);
        let mut out = self.clone();
        out.add_assign_scaled(a, other);
        out
    }

    pub fn add_assign_scaled(&mut self, a: f64, other: &Self) {
        self.same_base(other);
        if a == 0.0 {
            return;
        }
        for (&key, q) in &other.modes {
            let mut p = self.modes.remove(&key).unwrap_or_default();
            if p.len() < q.len() {
                p.resize(q.len(), Complex64::default());
            }
            for (x, y) in p.iter_mut().zip(q) {
                *x += y * a;
            }
            self.insert(key.0, key.1, p);
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        let mut out = Self::zero(self.varkappa);
        if a != 0.0 {
            for (&(j, l), p) in &self.modes {
                out.insert(j, l, p.iter().map(|c| c * a).collect());
            }
        }
        out
    }

    /// Product, erroring when a cap is exceeded by significant content.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_base(other);
        let mut acc: BTreeMap<(i32, i32), Vec<Complex64>> = BTreeMap::new();
        for (&(j1, l1), p) in &self.modes {
            for (&(j2, l2), q) in &other.modes {
                let e = acc.entry((j1 + j2, l1 + l2)).or_default();
                let n = p.len() + q.len() - 1;
                if e.len() < n {
                    e.resize(n, Complex64::default());
                }
                for (a, x) in p.iter().enumerate() {
                    for (b, y) in q.iter().enumerate() {
                        e[a + b] += x * y;
                    }
                }
            }
        }
        let scale = self.max_abs() * other.max_abs();
        let floor = PRODUCT_ROUNDOFF * scale;
        let mut out = Self::zero(self.varkappa);
        for ((j, l), mut p) in acc {
            let beyond = j.abs() > MAX_PSI_MODE || l.abs() > MAX_S_FREQUENCY * self.varkappa as i32;
            if beyond && p.iter().all(|c| c.norm() <= CAP_SLACK * scale) {
                continue;
            }
            for c in p.iter_mut() {
                if c.norm() <= floor {
                    *c = Complex64::default();
                }
            }
            out.insert(j, l, p);
        }
        out.check_caps()?;
        Ok(out)
    }

    /// `d/drho`.
    pub fn d_rho(&self) -> Self {
        let mut out = Self::zero(self.varkappa);
        for (&(j, l), p) in &self.modes {
            out.insert(
                j,
                l,
                p.iter()
                    .enumerate()
                    .skip(1)
                    .map(|(d, c)| c * d as f64)
                    .collect(),
            );
        }
        out
    }

    /// `d/dpsi`.
    pub fn d_psi(&self) -> Self {
        let mut out = Self::zero(self.varkappa);
        for (&(j, l), p) in &self.modes {
            let f = Complex64::new(0.0, j as f64);
            out.insert(j, l, p.iter().map(|c| c * f).collect());
        }
        out
    }

    /// `d/dS`.
    pub fn d_s(&self) -> Self {
        let mut out = Self::zero(self.varkappa);
        let w = 1.0 / self.varkappa as f64;
        for (&(j, l), p) in &self.modes {
            let f = Complex64::new(0.0, l as f64 * w);
            out.insert(j, l, p.iter().map(|c| c * f).collect());
        }
        out
    }

    /// Mean over `S` on its full period `2 pi varkappa`.
    pub fn average(&self) -> Self {
        let mut out = Self::zero(self.varkappa);
        for (&(j, l), p) in &self.modes {
            if l == 0 {
                out.insert(j, l, p.clone());
            }
        }
        out
    }

    /// The zero-mean solution `u` of `s0 du/dS = self`.
    pub fn solve_homological(&self, s0: f64) -> Result<Self> {
        if s0 == 0.0 || !s0.is_finite() {
            return Err(Error::InvalidParameter(
                "homological equation needs a finite nonzero s0".into(),
            ));
        }
        let mean = self.average().max_abs();
        if mean > 1e-14 {
            return Err(Error::Unsolvable(format!(
                "right-hand side has S-mean of size {mean:.3e}"
            )));
        }
        let mut out = Self::zero(self.varkappa);
        for (&(j, l), p) in &self.modes {
            if l == 0 {
                continue;
            }
            let f = Complex64::new(0.0, s0 * l as f64 / self.varkappa as f64).inv();
            out.insert(j, l, p.iter().map(|c| c * f).collect());
        }
        Ok(out)
    }

    /// Value at `(rho, psi, s)`.
    pub fn eval(&self, rho: f64, psi: f64, s: f64) -> f64 {
        let w = 1.0 / self.varkappa as f64;
        let mut total = 0.0;
        for (&(j, l), p) in &self.modes {
            let mut v = Complex64::default();
            for c in p.iter().rev() {
                v = v * rho + c;
            }
            let arg = j as f64 * psi + l as f64 * w * s;
            total += v.re * arg.cos() - v.im * arg.sin();
        }
        total
    }

    /// Drop modes whose coefficients are all below `tol`.
    pub fn pruned(&self, tol: f64) -> Self {
        let mut out = Self::zero(self.varkappa);
        for (&(j, l), p) in &self.modes {
            let q: Vec<Complex64> = p
                .iter()
                .map(|c| {
                    if c.norm() <= tol {
                        Complex64::default()
                    } else {
                        *c
                    }
                })
                .collect();
            out.insert(j, l, q);
        }
        out
    }

    /// Real form of a psi-only polynomial: for each `j >= 0`, the polynomial
    /// coefficients of `cos(j psi)` and `sin(j psi)`.
    pub fn psi_series(&self) -> Vec<(i32, Vec<f64>, Vec<f64>)> {
        let mut out = Vec::new();
        for (&(j, l), p) in &self.modes {
            if l != 0 || j < 0 {
                continue;
            }
            let factor = if j == 0 { 1.0 } else { 2.0 };
            out.push((
                j,
                p.iter().map(|c| factor * c.re).collect(),
                p.iter().map(|c| -factor * c.im).collect(),
            ));
        }
        out
    }

    /// Flat record for JSON output.
    pub fn records(&self) -> Vec<ModeRecord> {
        self.modes
            .iter()
            .map(|(&(j, l), p)| ModeRecord {
                j,
                l,
                poly: p.iter().map(|c| [c.re, c.im]).collect(),
            })
            .collect()
    }
}

impl Serialize for TrigPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            varkappa: u32,
            modes: Vec<ModeRecord>,
        }
        Repr {
            varkappa: self.varkappa,
            modes: self.records(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TrigPoly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            varkappa: u32,
            modes: Vec<ModeRecord>,
        }
        let r = Repr::deserialize(d)?;
        let modes = r
            .modes
            .into_iter()
            .map(|m| {
                (
                    (m.j, m.l),
                    m.poly
                        .into_iter()
                        .map(|[a, b]| Complex64::new(a, b))
                        .collect(),
                )
            })
            .collect();
        TrigPoly::from_modes(modes, r.varkappa).map_err(serde::de::Error::custom)
    }
}

/// Formal series in `sigma = mu^(1/2)`; entry `k` is the coefficient of `sigma^k`.
pub type Series = Vec<TrigPoly>;

pub(crate) fn series_zero(order: usize, varkappa: u32) -> Series {
    vec![TrigPoly::zero(varkappa); order + 1]
}

/// Truncated product of two series.
pub(crate) fn series_mul(a: &[TrigPoly], b: &[TrigPoly], order: usize) -> Result<Series> {
    let vk = a.first().or(b.first()).map(|t| t.varkappa()).unwrap_or(1);
    let mut out = series_zero(order, vk);
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            if i + j > order || y.is_zero() {
                continue;
            }
            let prod = x.mul(y)?;
            out[i + j].add_assign_scaled(1.0, &prod);
        }
    }
    Ok(out)
}

pub(crate) fn series_add_scaled(a: &mut Series, c: f64, b: &[TrigPoly]) {
    for (x, y) in a.iter_mut().zip(b) {
        x.add_assign_scaled(c, y);
    }
}

pub(crate) fn series_map(a: &[TrigPoly], f: impl Fn(&TrigPoly) -> TrigPoly) -> Series {
    a.iter().map(f).collect()
}
