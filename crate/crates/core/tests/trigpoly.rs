use proptest::prelude::*;
use rescap::envelope::{DecayEnvelope, PerturbationPhase};
use rescap::error::Error;
use rescap::oscillator::DuffingOscillator;
use rescap::systems::{Duffing, DuffingParams, Example1, Example1Params, PerturbedSystem};
use rescap::trigpoly::{build_averaged, AveragedSystem, TrigPoly};

/// (Q0, Z1, B0, B1, eps, theta)
const SWEEP: [(f64, f64, f64, f64, f64, f64); 7] = [
    (-0.00125, 0.0, 0.0, 1.0, 0.1, 0.25),
    (-0.126, 0.35355339059327373, 2.0, 0.0, 0.1, 0.25),
    (-0.5, 1.0, 1.0, 1.0, 0.1, 0.25),
    (0.3, -0.7, 0.4, 1.3, 0.05, 0.1),
    (-0.02, 0.2, 1.5, 0.5, 0.3, 0.5),
    (0.0, 0.0, 0.0, 0.0, 0.0, 0.2),
    (-1.1, 2.5, 0.8, 2.0, 0.2, 0.08),
];

fn example1(row: (f64, f64, f64, f64, f64, f64), p: u32) -> Example1 {
    let (q0, z1, b0, b1, eps, theta) = row;
    let params = Example1Params {
        theta,
        q0,
        q1: 0.4,
        z0: -0.3,
        z1,
        b0,
        b1,
    };
    Example1::standard(params, eps, p).unwrap()
}

fn cos(j: i32) -> TrigPoly {
    TrigPoly::cos(j, 0, 1)
}

fn sin(j: i32) -> TrigPoly {
    TrigPoly::sin(j, 0, 1)
}

fn rho() -> TrigPoly {
    TrigPoly::monomial(1.0, 1, 1)
}

fn assert_close(got: &TrigPoly, want: &TrigPoly, tol: f64, what: &str) {
    let err = got.sub(want).max_abs();
    assert!(
        err <= tol,
        "{what}: coefficient error {err:e}\n got {got:?}\nwant {want:?}"
    );
}

fn closed_forms_p1(row: (f64, f64, f64, f64, f64, f64)) -> [TrigPoly; 3] {
    let (q0, z1, b0, b1, eps, theta) = row;
    let s = (2.0 * theta).sqrt();
    let noise = |scale: f64| {
        TrigPoly::constant(scale * (4.0 * b0 * b0 + 2.0 * b1 * b1), 1)
            .sub(&cos(2).scale(scale * b1 * b1))
    };
    let l3 = TrigPoly::constant(0.5 * q0 / s, 1)
        .sub(&cos(1).scale(0.5 * z1))
        .add(&noise(0.5 * s * eps * eps / 8.0));
    let l4 = TrigPoly::constant(0.5 * q0, 1)
        .sub(&noise(0.5 * theta * eps * eps / 4.0))
        .mul(&rho())
        .unwrap();
    let o4 = sin(1)
        .scale(0.5 * s * z1)
        .add(&sin(2).scale(0.25 * theta * eps * eps * b1 * b1));
    [l3, l4, o4]
}

fn closed_forms_p2(row: (f64, f64, f64, f64, f64, f64)) -> [TrigPoly; 3] {
    let (q0, z1, _, _, _, theta) = row;
    let s = (2.0 * theta).sqrt();
    [
        TrigPoly::constant(0.5 * q0 / s, 1).sub(&cos(1).scale(0.5 * z1)),
        rho().scale(0.5 * q0),
        sin(1).scale(0.5 * s * z1),
    ]
}

#[test]
fn example1_noise_order_one_matches_closed_form() {
    for row in SWEEP {
        let avg = build_averaged(&example1(row, 1), 4).unwrap();
        let [l3, l4, o4] = closed_forms_p1(row);
        assert_close(&avg.lambda[3], &l3, 1e-10, "Lambda3");
        assert_close(&avg.lambda[4], &l4, 1e-10, "Lambda4");
        assert_close(&avg.omega[4], &o4, 1e-10, "Omega4");
    }
}

#[test]
fn example1_noise_order_two_matches_closed_form() {
    for row in SWEEP {
        let avg = build_averaged(&example1(row, 2), 4).unwrap();
        let [l3, l4, o4] = closed_forms_p2(row);
        assert_close(&avg.lambda[3], &l3, 1e-10, "Lambda3");
        assert_close(&avg.lambda[4], &l4, 1e-10, "Lambda4");
        assert_close(&avg.omega[4], &o4, 1e-10, "Omega4");
    }
}

#[test]
fn example1_low_orders() {
    let row = SWEEP[2];
    let sys = example1(row, 1);
    let avg = build_averaged(&sys, 4).unwrap();
    let eta = sys.resonance().eta;
    assert!((eta + (2.0 * row.5).sqrt()).abs() < 1e-14);
    assert_close(&avg.omega[1], &rho().scale(eta), 1e-12, "Omega1");
    assert_close(
        &avg.omega[2],
        &rho().mul(&rho()).unwrap().scale(-row.5),
        1e-12,
        "Omega2",
    );
    assert!(avg.lambda[1].is_zero() && avg.lambda[2].is_zero());
    assert!((avg.lambda_at(0.9) - avg.lambda[3].eval(0.0, 0.9, 0.0)).abs() < 1e-15);
}

#[test]
fn zero_perturbation_averages_to_zero() {
    let params = Example1Params {
        theta: 0.3,
        q0: 0.0,
        q1: 0.0,
        z0: 0.0,
        z1: 0.0,
        b0: 0.0,
        b1: 0.0,
    };
    let sys = Example1::standard(params, 0.0, 1).unwrap();
    let avg = build_averaged(&sys, 4).unwrap();
    for k in 1..=4 {
        assert!(avg.lambda[k].is_zero(), "Lambda{k}");
        assert!(avg.u[k].is_zero() && avg.v[k].is_zero());
    }
    assert_close(
        &avg.omega[1],
        &rho().scale(sys.resonance().eta),
        1e-14,
        "Omega1",
    );
}

#[test]
fn order_limits() {
    let sys = example1(SWEEP[0], 1);
    assert!(matches!(
        build_averaged(&sys, 5),
        Err(Error::UnsupportedOrder { .. })
    ));
    assert!(matches!(
        build_averaged(&sys, 2),
        Err(Error::UnsupportedOrder { .. })
    ));
    assert!(build_averaged(&sys, 3).is_ok());
}

fn check_invariants(avg: &AveragedSystem) {
    let n = avg.resonance.n as usize;
    for k in 1..=avg.order {
        for (name, t) in [("Lambda", &avg.lambda[k]), ("Omega", &avg.omega[k])] {
            assert!(!t.has_s_modes(), "{name}{k} depends on S");
            assert!(t.is_hermitian(1e-12));
        }
        assert!(
            avg.lambda[k].is_zero() || avg.lambda[k].degree() <= k - 1,
            "deg Lambda{k}"
        );
        assert!(
            avg.omega[k].is_zero() || avg.omega[k].degree() <= k,
            "deg Omega{k}"
        );
        if k < 2 * n - 1 {
            assert!(avg.lambda[k].is_zero());
            assert!(avg.omega[k].d_psi().max_abs() < 1e-12);
        }
    }
}

#[test]
fn invariants_hold_for_both_systems() {
    for p in [1, 2] {
        for row in SWEEP {
            check_invariants(&build_averaged(&example1(row, p), 4).unwrap());
        }
    }
    for p in [1, 2] {
        let sys = Duffing::standard(DuffingParams::default(), 0.1, 2, p).unwrap();
        let avg = build_averaged(&sys, 4).unwrap();
        check_invariants(&avg);
        assert!((avg.omega[1].coefficient(0, 0)[1].re - sys.resonance().eta).abs() < 1e-8);
    }
}

#[test]
fn duffing_small_nonlinearity_matches_closed_form() {
    let theta = 1e-3;
    let osc = DuffingOscillator::new(theta).unwrap();
    let s0 = 2.0 * osc.nu(1.0).unwrap();
    let phase =
        PerturbationPhase::new(s0, vec![], DecayEnvelope::power(4, 1.0).unwrap(), 1.0).unwrap();
    let params = DuffingParams {
        theta,
        p0: 0.3,
        p1: 0.8,
        q0: -0.2,
        q1: 0.5,
        b0: 1.3,
        b1: 0.0,
    };
    let eps = 0.2;
    let sys = Duffing::new(params, eps, 2, 1, 1, 2, phase).unwrap();
    let r0 = sys.resonance().r0;
    assert!((r0 - 1.0).abs() < 1e-10);
    let avg = build_averaged(&sys, 4).unwrap();
    let z1 = params.p1.hypot(params.q1);
    let theta1 = (params.p1 / z1).acos();
    for i in 0..64 {
        let psi = std::f64::consts::TAU * i as f64 / 64.0;
        // Our angle is a quarter turn ahead of the cosine-based orbit convention.
        let shifted = 2.0 * psi + std::f64::consts::PI + theta1;
        let want = r0 / 4.0
            * (2.0 * params.q0 + eps * eps * params.b0.powi(2) / (r0 * r0) - z1 * shifted.cos());
        let got = avg.lambda[3].eval(0.0, psi, 0.0);
        assert!(
            (got - want).abs() <= 5.0 * theta,
            "psi = {psi}: {got} vs {want}"
        );
    }
}

#[test]
fn near_identity_bound() {
    let sys = example1(SWEEP[2], 1);
    let avg = build_averaged(&sys, 4).unwrap();
    let rho_max = 2.0;
    let t0 = avg.near_identity_start(rho_max, 0.1, 10.0).unwrap();
    for f in [1.0, 3.0, 10.0, 1e3, 1e6] {
        let mu = sys.envelope().mu(t0 * f).unwrap();
        assert!(avg.generator_bound(rho_max, mu) <= 0.1 + 1e-12);
    }
    // Forward and inverse maps agree.
    let mu = sys.envelope().mu(t0).unwrap();
    let (rho, psi) = avg.forward_map(0.4, 1.1, 2.3, mu);
    let (r, p) = avg.inverse_map(rho, psi, 2.3, mu).unwrap();
    assert!((r - 0.4).abs() < 1e-10 && (p - 1.1).abs() < 1e-10);
}

/// Drift of the transformed variables `(U, V)` pushed through the exact
/// generator, minus the truncated averaged field; all derivatives of the
/// generators are taken spectrally.
fn residual(
    sys: &Example1,
    avg: &AveragedSystem,
    big_r: f64,
    big_psi: f64,
    s: f64,
    t: f64,
) -> [f64; 2] {
    let env = sys.envelope();
    let (mu, ell) = env.eval(t).unwrap();
    let sigma = mu.sqrt();
    let res = sys.resonance();
    let s_rate = sys.phase().s0;
    let ratio = res.kappa as f64 / res.varkappa as f64;
    let r = res.r0 + sigma * big_r;
    let phi = big_psi + ratio * s;
    let drift = sys.polar_drift_at(r, phi, s, mu).unwrap();
    let diff = sys.polar_diffusion_at(r, phi, s, mu).unwrap();
    let dr = drift[0] / sigma - 0.5 * ell * big_r;
    let dpsi = drift[1] - ratio * s_rate;
    let nr = diff[0][0] / sigma;
    let np = diff[1][0];
    let mut out = [0.0; 2];
    let (rho, psi) = avg.forward_map(big_r, big_psi, s, mu);
    let field = avg.field_at(rho, psi, mu, ell);
    for (c, gens) in [&avg.u, &avg.v].iter().enumerate() {
        let mut g = if c == 0 { dr } else { dpsi };
        let mut p = 1.0;
        for k in 1..=avg.order {
            p *= sigma;
            let w = &gens[k];
            let e = |t: &TrigPoly| t.eval(big_r, big_psi, s);
            g += p
                * (s_rate * e(&w.d_s())
                    + 0.5 * ell * k as f64 * e(w)
                    + dr * e(&w.d_rho())
                    + dpsi * e(&w.d_psi())
                    + 0.5 * nr * nr * e(&w.d_rho().d_rho())
                    + nr * np * e(&w.d_rho().d_psi())
                    + 0.5 * np * np * e(&w.d_psi().d_psi()));
        }
        out[c] = g - field[c];
    }
    out
}

#[test]
fn residual_has_the_truncation_order() {
    let sys = example1(SWEEP[0], 1);
    let avg = build_averaged(&sys, 4).unwrap();
    let scaled: Vec<[f64; 2]> = [1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9]
        .iter()
        .map(|&t| {
            let sigma5 = sys.envelope().mu(t).unwrap().powf(2.5);
            let mut sup = [0.0f64; 2];
            for i in 0..16 {
                let s = std::f64::consts::TAU * i as f64 / 16.0;
                let r = residual(&sys, &avg, 0.3, 0.7, s, t);
                sup[0] = sup[0].max(r[0].abs() / sigma5);
                sup[1] = sup[1].max(r[1].abs() / sigma5);
            }
            sup
        })
        .collect();
    for c in 0..2 {
        let hi = scaled.iter().map(|v| v[c]).fold(0.0, f64::max);
        let lo = scaled.iter().map(|v| v[c]).fold(f64::INFINITY, f64::min);
        assert!(hi / lo < 3.0, "component {c}: {scaled:?}");
    }
}

#[test]
fn tables_serialize() {
    let avg = build_averaged(&example1(SWEEP[2], 1), 4).unwrap();
    let tables = avg.tables();
    assert_eq!(tables.len(), 16);
    let json = serde_json::to_value(&tables).unwrap();
    assert_eq!(json[0]["k"], 1);
    assert_eq!(json[0]["target"], "Lambda");
    let omega1 = &json[1]["modes"][0];
    assert_eq!(omega1["j"], 0);
    assert!(omega1["poly"].as_array().unwrap().len() == 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn homological_inverts_s_derivative(a in -2.0f64..2.0, b in -2.0f64..2.0, j in -3i32..=3, l in 1i32..=4, s0 in 0.1f64..3.0) {
        let g = TrigPoly::harmonic(a, b, j, l, 2).mul(&TrigPoly::monomial(1.0, 1, 2).add(&TrigPoly::constant(0.5, 2))).unwrap();
        let u = g.solve_homological(s0).unwrap();
        prop_assert!(u.d_s().scale(s0).sub(&g).max_abs() < 1e-12);
        prop_assert!(u.average().is_zero());
    }

    #[test]
    fn product_evaluates_pointwise(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -1.0f64..1.0, psi in 0.0f64..6.3, s in 0.0f64..12.6, rho in -1.0f64..1.0) {
        let x = TrigPoly::harmonic(a, b, 1, 1, 2).add(&TrigPoly::monomial(c, 2, 2));
        let y = TrigPoly::harmonic(b, c, 2, -3, 2).add(&TrigPoly::constant(a, 2));
        let xy = x.mul(&y).unwrap();
        prop_assert!((xy.eval(rho, psi, s) - x.eval(rho, psi, s) * y.eval(rho, psi, s)).abs() < 1e-12);
        prop_assert!(xy.is_hermitian(1e-14));
    }

    #[test]
    fn average_removes_s_modes(a in -2.0f64..2.0, b in -2.0f64..2.0, j in -4i32..=4, l in -6i32..=6) {
        let x = TrigPoly::harmonic(a, b, j, l, 3).add(&TrigPoly::cos(1, 0, 3));
        let avg = x.average();
        prop_assert!(!avg.has_s_modes());
        let mean: f64 = (0..96).map(|i| x.eval(0.0, 0.3, 3.0 * std::f64::consts::TAU * i as f64 / 96.0)).sum::<f64>() / 96.0;
        prop_assert!((avg.eval(0.0, 0.3, 0.0) - mean).abs() < 1e-12);
    }
}
