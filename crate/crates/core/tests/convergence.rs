use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use chc_core::convergence::{galerkin_path, path_level_errors, RATE_CSV_HEADER, RATE_REPORT_SCHEMA_VERSION};
use chc_core::noise::{sample_stochastic_convolution, NoiseIncrements};
use chc_core::{
    fit_rate, galerkin_rate_study, strong_error_study, BrownianSkeleton, EigenBasis, Error, Experiment, LadderSpec,
    Level, NoiseModel, SpectralField,
};

fn unit(n: usize) -> Arc<EigenBasis> {
    EigenBasis::unit(1, n).unwrap()
}

fn smooth_x0(b: &Arc<EigenBasis>) -> SpectralField {
    let mut x0 = SpectralField::zeros(b);
    x0.coeffs_mut()[1] = 0.25;
    x0.coeffs_mut()[2] = -0.1;
    x0
}

#[test]
fn reference_level_has_zero_error() {
    let b = unit(16);
    let exp = Experiment::new(&b, NoiseModel::power(1.0), smooth_x0(&b), 0.01);
    let reference = Level { m: 64, n: 16 };
    let sk = BrownianSkeleton::generate(3, 64, 16, 0.01).unwrap();
    let errs = path_level_errors(&exp, reference, &[reference, Level { m: 16, n: 16 }], &sk).unwrap();
    assert!(errs[0].errors.iter().all(|e| *e == 0.0));
    assert_eq!(errs[1].errors.len(), 16);
    assert!(errs[1].max() > 0.0);
}

#[test]
fn linear_galerkin_error_is_the_tail() {
    let (n_ref, n, m) = (32, 8, 16);
    let b = unit(n_ref);
    let exp = Experiment::new(&b, NoiseModel::power(1.0), smooth_x0(&b), 0.01).linear();
    let sk = BrownianSkeleton::generate(7, m, n_ref, 0.01).unwrap();
    let noise = NoiseIncrements::from_model(&sk, &exp.noise, &b).unwrap();
    let z = sample_stochastic_convolution(&noise, &b, m, n_ref, 0.0).unwrap();
    let mut fine = Vec::new();
    galerkin_path(&exp, Level { m, n: n_ref }, &z, |_, c| fine.push(c.to_vec())).unwrap();
    let mut coarse = Vec::new();
    galerkin_path(&exp, Level { m, n }, &z, |_, c| coarse.push(c.to_vec())).unwrap();
    for (f, c) in fine.iter().zip(&coarse) {
        let err: f64 = f
            .iter()
            .enumerate()
            .map(|(j, v)| v - c.get(j).copied().unwrap_or(0.0))
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt();
        let tail: f64 = f[n + 1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((err - tail).abs() <= 1e-15 * (1.0 + tail));
    }
}

#[test]
fn deterministic_linear_time_slope_is_one() {
    let b = unit(8);
    // k lambda_1^2 <= 0.3 on every level, so all levels sit in the asymptotic regime.
    let x0 = SpectralField::unit(&b, 1).unwrap().scaled(0.25);
    let exp = Experiment::new(&b, NoiseModel::zero(), x0, 0.05).linear();
    let spec = LadderSpec::time(&[16, 32, 64, 128, 256], Level { m: 4096, n: 8 }, 2, 4.0, 1);
    let rep = strong_error_study(&exp, &spec).unwrap();
    assert!((rep.fit.slope - 1.0).abs() < 0.05, "{}", rep.fit.slope);
    assert!(rep.monotone);
    assert_eq!(rep.schema_version, RATE_REPORT_SCHEMA_VERSION);
}

#[test]
fn synthetic_power_law_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let eta = Normal::new(0.0, 0.01).unwrap();
    let points: Vec<(f64, f64, f64)> = (1..=8)
        .map(|i| {
            let h = 2f64.powi(-i);
            let e = 3.0 * h.powf(0.75) * (1.0 + eta.sample(&mut rng));
            (h, e, 0.01 * e)
        })
        .collect();
    let fit = fit_rate(&points).unwrap();
    assert!((fit.slope - 0.75).abs() < 0.02, "{fit:?}");
    let (lo, hi) = fit.band();
    assert!(lo < fit.slope && fit.slope < hi);
}

#[test]
fn degenerate_fits_are_rejected() {
    assert!(matches!(fit_rate(&[(1.0, 1.0, 0.1), (2.0, 2.0, 0.1)]), Err(Error::DegenerateFit(_))));
    assert!(fit_rate(&[(1.0, 1.0, 0.1), (1.0, 2.0, 0.1), (3.0, 2.0, 0.1)]).is_err());
    assert!(fit_rate(&[(1.0, 0.0, 0.1), (2.0, 2.0, 0.1), (3.0, 2.0, 0.1)]).is_err());
}

#[test]
fn infeasible_ladders_are_rejected() {
    let b = unit(64);
    let exp = Experiment::new(&b, NoiseModel::power(1.0), smooth_x0(&b), 0.01);
    let reference = Level { m: 256, n: 64 };
    let too_close = LadderSpec::time(&[16, 32, 128], reference, 4, 1.0, 0);
    assert!(matches!(strong_error_study(&exp, &too_close), Err(Error::LadderInfeasible(_))));
    let not_dividing = LadderSpec::time(&[16, 24, 32], reference, 4, 1.0, 0);
    assert!(strong_error_study(&exp, &not_dividing).is_err());
    let too_rough = LadderSpec::time(&[16, 32, 64], reference, 4, 3.9, 0);
    assert!(strong_error_study(&exp, &too_rough).is_err());
    let one_path = LadderSpec::space(&[4, 8, 16], reference, 1, 1.0, 0);
    assert!(galerkin_rate_study(&exp, &one_path).is_err());
    let space_too_close = LadderSpec::space(&[4, 8, 48], reference, 4, 1.0, 0);
    assert!(galerkin_rate_study(&exp, &space_too_close).is_err());
}

#[test]
fn report_artifacts() {
    let b = unit(32);
    let model = NoiseModel::power(1.0);
    let g = model.certify_gamma(&b).unwrap().effective();
    let exp = Experiment::new(&b, model, smooth_x0(&b), 0.01);
    let rep = galerkin_rate_study(&exp, &LadderSpec::space(&[2, 4, 8], Level { m: 64, n: 32 }, 4, g, 11)).unwrap();
    assert_eq!(rep.rows.len(), 3);
    assert!((rep.expected_slope + g / 2.0).abs() < 1e-15);
    let json: serde_json::Value = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
    assert_eq!(json["schema_version"], RATE_REPORT_SCHEMA_VERSION);
    assert_eq!(json["axis"], "space");
    assert_eq!(json["rows"].as_array().unwrap().len(), 3);
    let mut csv = Vec::new();
    rep.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), RATE_CSV_HEADER.join(","));
    assert!(text.lines().nth(1).unwrap().starts_with("space,64,2,"));
}
