use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chc_core::dense_oracle::{oracle_step, DenseOracle};
use chc_core::stepper::{discrete_solution_operator, discrete_square_sum, run_scheme};
use chc_core::{BrownianSkeleton, EigenBasis, NoiseModel, SchemeConfig, SolverKind, SpectralField, Stepper};

fn unit(n: usize) -> Arc<EigenBasis> {
    EigenBasis::unit(1, n).unwrap()
}

#[test]
fn matches_oracle_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..100 {
        let n = 1 + trial % 4;
        let k = 10f64.powf(rng.random_range(-5.0..-2.0));
        let b = unit(n);
        let prev: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dw: Vec<f64> = (0..=n).map(|_| rng.random_range(-0.1..0.1)).collect();
        let cfg = SchemeConfig::new(n, 1, k);
        let mut stepper = Stepper::new(&b, &cfg).unwrap();
        let x = stepper
            .step(&SpectralField::from_coeffs(&b, prev.clone()).unwrap(), &dw)
            .unwrap();
        let y = oracle_step(&prev, &dw, k, n).unwrap();
        for (a, c) in x.x.coeffs().iter().zip(&y) {
            assert!((a - c).abs() <= 1e-9, "trial {trial}: {a} vs {c}");
        }
    }
}

#[test]
fn first_mode_step_matches_oracle_tightly() {
    let (n, k) = (3, 1e-3);
    let b = unit(n);
    let e1 = SpectralField::unit(&b, 1).unwrap();
    for solver in [SolverKind::FixedPoint, SolverKind::Newton] {
        let cfg = SchemeConfig::new(n, 1, k).with_solver(solver);
        let x = Stepper::new(&b, &cfg).unwrap().step(&e1, &[0.0; 4]).unwrap();
        let y = DenseOracle::new(n, 1.0).unwrap().step(e1.coeffs(), &[0.0; 4], k).unwrap();
        for (a, c) in x.x.coeffs().iter().zip(&y) {
            assert!((a - c).abs() <= 1e-10, "{solver:?}");
        }
        assert!(x.residual <= cfg.solver_tol);
    }
}

#[test]
fn linear_path_is_the_discrete_semigroup() {
    let b = unit(8);
    let mut x0 = SpectralField::zeros(&b);
    for j in 0..=8 {
        x0.coeffs_mut()[j] = 1.0 / (1.0 + j as f64);
    }
    let cfg = SchemeConfig::new(8, 20, 0.01).linear();
    let sk = BrownianSkeleton::generate(0, 20, 8, 0.01).unwrap();
    let path = run_scheme(&x0, &cfg, &b, &NoiseModel::zero(), &sk).unwrap();
    let k = cfg.step_size();
    for (m, state) in path.states.iter().enumerate() {
        let exact = discrete_solution_operator(&x0, k, 8, m).unwrap();
        for j in 0..=8 {
            let l = b.eigenvalue(j);
            let closed = (1.0 + k * l * l).powi(-(m as i32)) * x0.coeffs()[j];
            assert!((state.coeffs()[j] - closed).abs() <= 1e-14 * x0.coeffs()[j].abs());
        }
        assert!(state.sub(&exact).unwrap().norm() <= 1e-14);
    }
}

#[test]
fn mass_moves_by_the_mean_increment() {
    let b = unit(6);
    let mut x = SpectralField::zeros(&b);
    x.coeffs_mut()[0] = 0.25;
    x.coeffs_mut()[2] = 0.5;
    let model = NoiseModel::power(1.0).with_q0(2.0);
    let cfg = SchemeConfig::new(6, 10, 0.01);
    let sk = BrownianSkeleton::generate(8, 10, 6, 0.01).unwrap();
    let path = run_scheme(&x, &cfg, &b, &model, &sk).unwrap();
    let noise = chc_core::noise::NoiseIncrements::from_model(&sk, &model, &b).unwrap();
    for m in 1..=10 {
        let dw0 = noise.increment_mode(10, m, 0).unwrap();
        assert_eq!(path.states[m].coeffs()[0], path.states[m - 1].coeffs()[0] + dw0);
        assert!(path.residuals[m - 1] <= cfg.solver_tol);
    }
}

#[test]
fn geometric_series_for_one_mode() {
    for (l, k) in [(10.0, 1e-2), (100.0, 1e-4), (3.0, 0.5)] {
        let a: f64 = k * l * l;
        let closed_infinite = a / ((1.0 + a).powi(2) - 1.0);
        let s = discrete_square_sum(l, k, 10_000);
        assert!(s <= closed_infinite * (1.0 + 1e-12));
        assert!(closed_infinite <= 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn linear_steps_are_unconditionally_stable(
        c in prop::collection::vec(-1.0f64..1.0, 17),
        d in prop::collection::vec(-1.0f64..1.0, 17),
        log_k in -6.0f64..1.0,
    ) {
        let b = unit(16);
        let k = 10f64.powf(log_k);
        let prev = SpectralField::from_coeffs(&b, c).unwrap();
        let cfg = SchemeConfig::new(16, 1, k).linear();
        let next = Stepper::new(&b, &cfg).unwrap().step(&prev, &d).unwrap();
        let forced = prev.project_mean_free().add(&SpectralField::from_coeffs(&b, d).unwrap().project_mean_free()).unwrap();
        prop_assert!(next.x.project_mean_free().norm() <= forced.norm());
    }

    #[test]
    fn cubic_steps_meet_the_residual_contract(
        c in prop::collection::vec(-1.0f64..1.0, 9),
        log_k in -6.0f64..-2.0,
    ) {
        let b = unit(8);
        let prev = SpectralField::from_coeffs(&b, c).unwrap();
        let cfg = SchemeConfig::new(8, 1, 10f64.powf(log_k));
        let out = Stepper::new(&b, &cfg).unwrap().step(&prev, &[0.0; 9]).unwrap();
        prop_assert!(out.residual <= cfg.solver_tol);
        prop_assert_eq!(out.x.coeffs()[0], prev.coeffs()[0]);
    }
}
