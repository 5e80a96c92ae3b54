use std::sync::Arc;

use chc_core::noise::NoiseIncrements;
use chc_core::simulator::{read_field_dump, simulate_ensemble, EnsembleOptions, PathOptions, TRAJECTORY_CSV_HEADER};
use chc_core::{
    ensemble_moments, holder_probe, simulate_path, BrownianSkeleton, EigenBasis, NoiseModel, SchemeConfig,
    SpectralField,
};

fn unit(n: usize) -> Arc<EigenBasis> {
    EigenBasis::unit(1, n).unwrap()
}

fn skeleton(seed: u64, cfg: &SchemeConfig) -> BrownianSkeleton {
    BrownianSkeleton::generate(seed, cfg.steps, cfg.n_modes, cfg.t_final).unwrap()
}

#[test]
fn zero_data_and_zero_noise_stay_zero() {
    let b = unit(8);
    let cfg = SchemeConfig::new(8, 16, 0.01);
    let tr = simulate_path(&SpectralField::zeros(&b), &cfg, &NoiseModel::zero(), &skeleton(1, &cfg), &PathOptions::default())
        .unwrap();
    assert_eq!(tr.len(), 17);
    for series in [&tr.l2, &tr.h1, &tr.kappa_norm, &tr.l4, &tr.l6, &tr.mass, &tr.energy] {
        assert_eq!(series.len(), tr.t.len());
        assert!(series.iter().all(|v| *v == 0.0));
    }
}

#[test]
fn small_data_follows_linear_decay() {
    let b = unit(8);
    let eps = 1e-3;
    let x0 = SpectralField::unit(&b, 1).unwrap().scaled(eps);
    let cfg = SchemeConfig::new(8, 50, 0.05);
    let tr = simulate_path(&x0, &cfg, &NoiseModel::zero(), &skeleton(1, &cfg), &PathOptions { kappa: None, thin: 1 })
        .unwrap();
    let k = cfg.step_size();
    let l = b.eigenvalue(1);
    // The -u part of F is linear, so it belongs to the decay factor; only u^3 is O(eps^3).
    for m in 0..=50 {
        let linear = (1.0 + k * l * l - k * l).powi(-(m as i32)) * eps;
        let x = tr.field_at(m).unwrap();
        assert!((x.coeffs()[1] - linear).abs() < 1e-6 * eps);
    }
}

#[test]
fn mass_is_the_cumulative_mean_increment() {
    let b = unit(6);
    let model = NoiseModel::power(1.0).with_q0(1.0);
    let cfg = SchemeConfig::new(6, 32, 0.1);
    let sk = skeleton(4, &cfg);
    let mut x0 = SpectralField::zeros(&b);
    x0.coeffs_mut()[0] = 0.1;
    x0.coeffs_mut()[1] = 0.3;
    let tr = simulate_path(&x0, &cfg, &model, &sk, &PathOptions::default()).unwrap();
    let noise = NoiseIncrements::from_model(&sk, &model, &b).unwrap();
    let mut mass = 0.1;
    for m in 1..=32 {
        mass += noise.increment_mode(32, m, 0).unwrap();
        assert_eq!(tr.mass[m], mass);
    }
}

#[test]
fn linear_second_moment_matches_discrete_ou() {
    let n = 16;
    let b = unit(n);
    let model = NoiseModel::power(1.0).with_q0(0.5);
    let cfg = SchemeConfig::new(n, 20, 0.02).linear();
    let x0 = SpectralField::unit(&b, 2).unwrap().scaled(0.3);
    let opts = EnsembleOptions {
        seed: 31,
        kappa: Some(0.0),
        identical_seeds: false,
    };
    let mom = ensemble_moments(&x0, &cfg, &model, 512, &[2.0], &opts).unwrap();
    let q = model.variances(&b).unwrap();
    let k = cfg.step_size();
    for m in [5, 20] {
        let mut exact = 0.0;
        for j in 0..=n {
            let l = b.eigenvalue(j);
            let r = 1.0 / (1.0 + k * l * l);
            exact += q[j] * k * (1..=m).map(|i| r.powi(2 * i as i32)).sum::<f64>();
            exact += r.powi(2 * m as i32) * x0.coeffs()[j].powi(2);
        }
        let (est, se) = (mom.mean[0][m], mom.stderr[0][m]);
        assert!((est - exact).abs() <= 3.0 * se, "m={m}: {est} +- {se} vs {exact}");
    }
}

#[test]
fn identical_seeds_have_no_spread() {
    let b = unit(8);
    let cfg = SchemeConfig::new(8, 10, 0.01);
    let opts = EnsembleOptions {
        seed: 5,
        kappa: None,
        identical_seeds: true,
    };
    let mom = ensemble_moments(&SpectralField::zeros(&b), &cfg, &NoiseModel::power(1.0), 2, &[2.0, 4.0], &opts).unwrap();
    assert!(mom.stderr.iter().flatten().all(|s| *s == 0.0));
    assert!(mom.sup_mean(0) > 0.0);
    assert!(ensemble_moments(&SpectralField::zeros(&b), &cfg, &NoiseModel::power(1.0), 1, &[2.0], &opts).is_err());
}

#[test]
fn ensembles_are_deterministic() {
    let b = unit(16);
    let cfg = SchemeConfig::new(16, 20, 0.01);
    let opts = EnsembleOptions {
        seed: 9,
        kappa: None,
        identical_seeds: false,
    };
    let x0 = SpectralField::unit(&b, 1).unwrap();
    let a = ensemble_moments(&x0, &cfg, &NoiseModel::power(1.0), 8, &[2.0, 4.0, 6.0], &opts).unwrap();
    let c = ensemble_moments(&x0, &cfg, &NoiseModel::power(1.0), 8, &[2.0, 4.0, 6.0], &opts).unwrap();
    for (u, v) in a.mean.iter().flatten().zip(c.mean.iter().flatten()) {
        assert_eq!(u.to_bits(), v.to_bits());
    }
}

#[test]
fn deterministic_linear_holder_exponent() {
    let b = unit(4);
    let cfg = SchemeConfig::new(4, 1024, 1e-3).linear();
    let x0 = SpectralField::unit(&b, 1).unwrap();
    let tr = simulate_path(&x0, &cfg, &NoiseModel::zero(), &skeleton(0, &cfg), &PathOptions { kappa: None, thin: 1 })
        .unwrap();
    let fit = holder_probe(&[tr], 0.0, 2.0).unwrap();
    let l = b.eigenvalue(1);
    let r = 1.0 / (1.0 + cfg.step_size() * l * l);
    let stored = 1025;
    for (gap, moment) in fit.gaps.iter().zip(&fit.moments) {
        let lag = (gap / cfg.step_size()).round() as i32;
        let windows = stored - lag as usize;
        let closed: f64 = (0..windows)
            .map(|s| (r.powi(s as i32) * (1.0 - r.powi(lag))).powi(2))
            .sum::<f64>()
            / windows as f64;
        assert!((moment - closed).abs() <= 1e-10 * closed, "lag {lag}");
    }
    assert!((fit.exponent - 1.0).abs() < 0.05, "{}", fit.exponent);
}

#[test]
fn holder_probe_needs_two_decades() {
    let b = unit(4);
    let cfg = SchemeConfig::new(4, 64, 1e-3);
    let paths = simulate_ensemble(&SpectralField::zeros(&b), &cfg, &NoiseModel::power(1.0), 2, 3, 1).unwrap();
    assert!(matches!(holder_probe(&paths, 0.0, 2.0), Err(chc_core::Error::InsufficientGapDecades { .. })));
}

#[test]
fn csv_and_field_dump() {
    let b = unit(4);
    let cfg = SchemeConfig::new(4, 8, 1e-3);
    let tr = simulate_path(
        &SpectralField::unit(&b, 1).unwrap(),
        &cfg,
        &NoiseModel::power(1.0),
        &skeleton(2, &cfg),
        &PathOptions { kappa: None, thin: 4 },
    )
    .unwrap();
    let mut csv = Vec::new();
    tr.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), TRAJECTORY_CSV_HEADER.join(","));
    assert_eq!(text.lines().count(), 10);

    let mut dump = Vec::new();
    tr.write_fields(&mut dump).unwrap();
    let back = read_field_dump(dump.as_slice()).unwrap();
    assert_eq!(back.times, vec![0.0, tr.t[4], tr.t[8]]);
    assert_eq!(back.fields[2].coeffs(), tr.field_at(8).unwrap().coeffs());
}
