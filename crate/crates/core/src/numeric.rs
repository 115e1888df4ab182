//! Small numerical kernels: bracketed root finding, adaptive quadrature and
//! finite-difference derivatives.

use crate::error::{Error, Result};

/// Bisection on a bracket `[a, b]` with `f(a)` and `f(b)` of opposite sign.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(Error::Numerical(format!(
            "root not bracketed on [{a}, {b}]"
        )));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol || m == a || m == b {
            return Ok(m);
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut stack = vec![(a, b, 0usize)];
    let (total0, _) = gk15(&mut f, a, b);
    let mut total = 0.0;
    let mut compensation = 0.0;
    let scale = total0.abs();
    let mut evaluations = 0usize;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = gk15(&mut f, lo, hi);
        evaluations += 1;
        if !val.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite integrand on [{lo}, {hi}]"
            )));
        }
        let frac = ((hi - lo) / (b - a)).abs();
        let tol = (rel_tol * scale).max(abs_tol) * frac.sqrt().max(frac);
        if err <= tol || depth >= 48 || evaluations > 200_000 {
            let y = val - compensation;
            let t = total + y;
            compensation = (t - total) - y;
            total = t;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    Ok(total)
}

/// Central finite-difference derivative of order `order` (0..=4) with two
/// levels of Richardson extrapolation.
pub fn derivative<F: FnMut(f64) -> f64>(mut f: F, x: f64, order: usize, h: f64) -> f64 {
    let mut stencil = |h: f64| -> f64 {
        match order {
            0 => f(x),
            1 => (f(x + h) - f(x - h)) / (2.0 * h),
            2 => (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h),
            3 => {
                (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h))
                    / (2.0 * h * h * h)
            }
            4 => {
                (f(x + 2.0 * h) - 4.0 * f(x + h) + 6.0 * f(x) - 4.0 * f(x - h) + f(x - 2.0 * h))
                    / h.powi(4)
            }
            _ => panic!("derivative order {order} not supported"),
        }
    };
    if order == 0 {
        return stencil(h);
    }
    let d0 = stencil(h);
    let d1 = stencil(h / 2.0);
    let d2 = stencil(h / 4.0);
    let e0 = (4.0 * d1 - d0) / 3.0;
    let e1 = (4.0 * d2 - d1) / 3.0;
    (16.0 * e1 - e0) / 15.0
}

/// Vector-valued version of [`derivative`]; `f` writes into the output slice.
pub fn derivative_vec<F: FnMut(f64) -> Vec<f64>>(
    mut f: F,
    x: f64,
    order: usize,
    h: f64,
) -> Vec<f64> {
    let mut stencil = |h: f64| -> Vec<f64> {
        let pts: &[(f64, f64)] = match order {
            0 => &[(0.0, 1.0)],
            1 => &[(1.0, 0.5), (-1.0, -0.5)],
            2 => &[(1.0, 1.0), (0.0, -2.0), (-1.0, 1.0)],
            3 => &[(2.0, 0.5), (1.0, -1.0), (-1.0, 1.0), (-2.0, -0.5)],
            4 => &[
                (2.0, 1.0),
                (1.0, -4.0),
                (0.0, 6.0),
                (-1.0, -4.0),
                (-2.0, 1.0),
            ],
            _ => panic!("derivative order {order} not supported"),
        };
        let mut out: Vec<f64> = Vec::new();
        for &(off, w) in pts {
            let v = f(x + off * h);
            if out.is_empty() {
                out = vec![0.0; v.len()];
            }
            for (o, vi) in out.iter_mut().zip(v) {
                *o += w * vi;
            }
        }
        let denom = h.powi(order as i32);
        out.iter_mut().for_each(|o| *o /= denom);
        out
    };
    if order == 0 {
        return stencil(h);
    }
    let d0 = stencil(h);
    let d1 = stencil(h / 2.0);
    let d2 = stencil(h / 4.0);
    d0.iter()
        .zip(d1.iter().zip(d2.iter()))
        .map(|(a, (b, c))| {
            let e0 = (4.0 * b - a) / 3.0;
            let e1 = (4.0 * c - b) / 3.0;
            (16.0 * e1 - e0) / 15.0
        })
        .collect()
}

/// Wrap an angle to `(-π, π]`.
pub fn wrap_pi(x: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut y = x.rem_euclid(two_pi);
    if y > std::f64::consts::PI {
        y -= two_pi;
    }
    y
}
