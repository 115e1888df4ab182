//! Complete elliptic integral of the first kind and the Jacobi elliptic
//! functions sn, cn, dn for real arguments.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

/// Moduli closer than this to 0 or 1 use the circular or hyperbolic forms.
const DEGENERATE: f64 = 1e-12;

/// Elliptic modulus `k` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct EllipticModulus(f64);

impl EllipticModulus {
    pub fn new(k: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&k) {
            return Err(Error::domain(k, "elliptic modulus must lie in [0, 1]"));
        }
        Ok(Self(k))
    }

    pub fn k(self) -> f64 {
        self.0
    }

    /// Complementary modulus `k' = sqrt(1 - k^2)`.
    pub fn complementary(self) -> f64 {
        ((1.0 - self.0) * (1.0 + self.0)).sqrt()
    }
}

/// Arithmetic-geometric mean of two positive numbers.
fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        if (an - bn).abs() <= f64::EPSILON * an {
            return an;
        }
        a = an;
        b = bn;
    }
    a
}

/// Complete elliptic integral of the first kind, `K(k)`.
pub fn ellint_k(k: EllipticModulus) -> Result<f64> {
    if k.0 >= 1.0 {
        return Err(Error::domain(k.0, "K(k) diverges at k = 1"));
    }
    Ok(FRAC_PI_2 / agm(1.0, k.complementary()))
}

/// Jacobi elliptic functions `(sn, cn, dn)` at real argument `u`.
pub fn jacobi_sn_cn_dn(u: f64, k: EllipticModulus) -> (f64, f64, f64) {
    let m = k.0;
    if m < DEGENERATE {
        return (u.sin(), u.cos(), 1.0);
    }
    if 1.0 - m < DEGENERATE {
        let sech = 1.0 / u.cosh();
        return (u.tanh(), sech, sech);
    }
    // Reduce into one period so the Landen phase stays moderate.
    let period = 4.0 * ellint_k(k).expect("k < 1 checked above");
    let u = u - period * (u / period).round();

    let mut a = [0.0f64; 32];
    let mut c = [0.0f64; 32];
    a[0] = 1.0;
    let mut b = k.complementary();
    c[0] = m;
    let mut n = 0;
    while n < 31 && c[n].abs() > f64::EPSILON * a[n] {
        let an = 0.5 * (a[n] + b);
        c[n + 1] = 0.5 * (a[n] - b);
        b = (a[n] * b).sqrt();
        a[n + 1] = an;
        n += 1;
    }
    let mut phi = (1u64 << n) as f64 * a[n] * u;
    for j in (1..=n).rev() {
        phi = 0.5 * (phi + (c[j] / a[j] * phi.sin()).asin());
    }
    let (sn, cn) = phi.sin_cos();
    let dn = (1.0 - m * m * sn * sn).sqrt();
    (sn, cn, dn)
}
