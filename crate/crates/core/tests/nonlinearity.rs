use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;

use chc_core::dense_oracle::oracle_f;
use chc_core::nonlinearity::check_structure_conditions;
use chc_core::{EigenBasis, Nonlinearity, SpectralField};

fn unit(n: usize) -> Arc<EigenBasis> {
    EigenBasis::unit(1, n).unwrap()
}

fn field(b: &Arc<EigenBasis>, coeffs: &[f64]) -> SpectralField {
    let mut c = coeffs.to_vec();
    c.resize(b.len(), 0.0);
    SpectralField::from_coeffs(b, c).unwrap()
}

#[test]
fn cube_of_first_mode() {
    let b = unit(5);
    let f = Nonlinearity::new(&b).eval_f(&SpectralField::unit(&b, 1).unwrap()).unwrap();
    let expected = [0.0, 0.5, 0.0, 0.5, 0.0, 0.0];
    for (a, e) in f.coeffs().iter().zip(expected) {
        assert!((a - e).abs() < 1e-14, "{:?}", f.coeffs());
    }
}

#[test]
fn derivative_on_constant_field() {
    let b = unit(4);
    let u = field(&b, &[2.0]);
    let psi = SpectralField::unit(&b, 1).unwrap();
    let out = Nonlinearity::new(&b).eval_f_prime_apply(&u, &psi).unwrap();
    let expected = psi.scaled(11.0);
    assert!(out.sub(&expected).unwrap().norm() < 1e-13);
}

#[test]
fn energy_values() {
    let b = unit(6);
    let mut nl = Nonlinearity::new(&b);
    assert!(nl.energy(&field(&b, &[2f64.sqrt()])).unwrap().abs() < 1e-15);
    // |e_1|_1^2 / 2 = pi^2 / 2; int (cos^4 - cos^2) = 3/8 - 1/2.
    let e1 = SpectralField::unit(&b, 1).unwrap();
    assert!((nl.energy(&e1).unwrap() - (PI * PI / 2.0 - 0.125)).abs() < 1e-13);
}

#[test]
fn mean_of_f_is_not_projected_away() {
    let b = unit(4);
    let f = Nonlinearity::new(&b).eval_f(&field(&b, &[2.0])).unwrap();
    assert!((f.coeffs()[0] - 6.0).abs() < 1e-13);
}

#[test]
fn structure_conditions_are_tight_at_equal_arguments() {
    let b = unit(8);
    let u = field(&b, &[0.1, 0.7, -0.2]);
    let rep = check_structure_conditions(&[(u.clone(), u)]).unwrap();
    assert_eq!(rep.violations, 0);
    assert!(rep.one_sided_slack.abs() < 1e-15);
    assert!(rep.sup_norm_is_grid_max);
}

#[test]
fn first_order_derivative_check() {
    let b = unit(10);
    let u = field(&b, &[0.2, 0.8, -0.3, 0.1, 0.05]);
    let psi = field(&b, &[0.0, -0.4, 0.6, 0.2, 0.0, 0.1]);
    let mut nl = Nonlinearity::new(&b);
    let fu = nl.eval_f(&u).unwrap();
    let dpsi = nl.eval_f_prime_apply(&u, &psi).unwrap();
    let err = |h: f64, nl: &mut Nonlinearity| {
        let mut shifted = u.clone();
        shifted.axpy(h, &psi).unwrap();
        let fd = nl.eval_f(&shifted).unwrap().sub(&fu).unwrap().scaled(1.0 / h);
        fd.sub(&dpsi).unwrap().norm()
    };
    let (e3, e4) = (err(1e-3, &mut nl), err(1e-4, &mut nl));
    assert!(e3 < 1e-2);
    assert!((e3 / e4 - 10.0).abs() < 0.5, "ratio {}", e3 / e4);
}

fn potential(nl: &mut Nonlinearity, u: &SpectralField) -> f64 {
    0.25 * nl.lp_norm(u, 4.0).unwrap().powi(4) - 0.5 * u.norm().powi(2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn agrees_with_dense_quadrature(c in prop::collection::vec(-1.5f64..1.5, 2..=7)) {
        let b = unit(c.len() - 1);
        let u = SpectralField::from_coeffs(&b, c.clone()).unwrap();
        let spectral = Nonlinearity::new(&b).eval_f(&u).unwrap();
        let dense = oracle_f(&c).unwrap();
        for (a, d) in spectral.coeffs().iter().zip(&dense) {
            prop_assert!((a - d).abs() <= 1e-10);
        }
    }

    #[test]
    fn gradient_of_potential(c in prop::collection::vec(-1.0f64..1.0, 9), d in prop::collection::vec(-1.0f64..1.0, 9)) {
        let b = unit(8);
        let u = SpectralField::from_coeffs(&b, c).unwrap();
        let psi = SpectralField::from_coeffs(&b, d).unwrap();
        let mut nl = Nonlinearity::new(&b);
        let exact = nl.eval_f(&u).unwrap().dot(&psi).unwrap();
        let central = |h: f64, nl: &mut Nonlinearity| {
            let mut plus = u.clone();
            plus.axpy(h, &psi).unwrap();
            let mut minus = u.clone();
            minus.axpy(-h, &psi).unwrap();
            (potential(nl, &plus) - potential(nl, &minus)) / (2.0 * h)
        };
        let e4 = (central(1e-4, &mut nl) - exact).abs();
        let e5 = (central(1e-5, &mut nl) - exact).abs();
        let scale = 1.0 + exact.abs();
        prop_assert!(e4 <= 1e-6 * scale);
        // second order until rounding (~1e-16 / h) takes over
        prop_assert!(e5 <= (e4 / 50.0).max(1e-9 * scale));
    }

    #[test]
    fn random_pairs_satisfy_structure_conditions(
        seed_u in prop::collection::vec(-2.0f64..2.0, 17),
        seed_v in prop::collection::vec(-2.0f64..2.0, 17),
    ) {
        let b = unit(16);
        let decay = |c: Vec<f64>| c.into_iter().enumerate().map(|(j, x)| x / (1.0 + j as f64)).collect();
        let u = SpectralField::from_coeffs(&b, decay(seed_u)).unwrap();
        let v = SpectralField::from_coeffs(&b, decay(seed_v)).unwrap();
        let rep = check_structure_conditions(&[(u, v)]).unwrap();
        prop_assert_eq!(rep.violations, 0);
    }
}
