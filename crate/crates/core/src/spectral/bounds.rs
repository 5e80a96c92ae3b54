//! Empirical constants for the parabolic smoothing estimates of `E(t) = e^{-tA^2}`.
//!
//! Every operator below is diagonal, so its norm is a supremum over retained modes. Each row
//! reports the operator norm (`lhs`), the scale the estimate compares it to (`scale`) and
//! their ratio, the empirical constant.

use serde::Serialize;

use crate::spectral::EigenBasis;

/// Which smoothing estimate a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundFamily {
    /// `||A^mu E(t)|| <= C t^{-mu/2}`.
    PowerSemigroup,
    /// `||A^{-nu}(I - E(t))|| <= C t^{nu/2}`.
    InverseDefect,
    /// `int_0^t ||A^rho E(s) v||^2 ds <= C t^{1-rho} ||v||^2`.
    SquareIntegral,
    /// `||A^{2 rho} int_0^t E(t - s) v ds|| <= C t^{1-rho} ||v||`.
    IntegratedPower,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub family: BoundFamily,
    pub exponent: f64,
    pub t: f64,
    pub lhs: f64,
    pub scale: f64,
    pub constant: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SmoothingReport {
    pub rows: Vec<BoundRow>,
}

impl SmoothingReport {
    /// Largest empirical constant for one family and exponent.
    pub fn max_constant(&self, family: BoundFamily, exponent: f64) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.family == family && r.exponent == exponent)
            .map(|r| r.constant)
            .reduce(f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.rows.iter().all(|r| r.constant.is_finite())
    }
}

fn sup_over_modes(basis: &EigenBasis, include_mean: Option<f64>, per_mode: impl Fn(f64) -> f64) -> f64 {
    let positive = basis
        .eigenvalues()
        .iter()
        .skip(1)
        .map(|&l| per_mode(l))
        .fold(0.0, f64::max);
    include_mean.map_or(positive, |m| positive.max(m))
}

/// Tabulate the four smoothing estimates over `exponents x t_grid`.
///
/// Exponents outside an estimate's admissible range (`[0,2]` for the first two, `[0,1]` for
/// the integral forms) are skipped for that estimate.
pub fn verify_smoothing_bounds(basis: &EigenBasis, exponents: &[f64], t_grid: &[f64]) -> SmoothingReport {
    let mut rows = Vec::new();
    for &mu in exponents {
        for &t in t_grid.iter().filter(|t| **t > 0.0) {
            if (0.0..=2.0).contains(&mu) {
                // the mean mode only sees A^0 = I
                let mean = (mu == 0.0).then_some(1.0);
                let lhs = sup_over_modes(basis, mean, |l| l.powf(mu) * (-t * l * l).exp());
                rows.push(row(BoundFamily::PowerSemigroup, mu, t, lhs, t.powf(-mu / 2.0)));

                let lhs = sup_over_modes(basis, None, |l| l.powf(-mu) * -(-t * l * l).exp_m1());
                rows.push(row(BoundFamily::InverseDefect, mu, t, lhs, t.powf(mu / 2.0)));
            }
            if (0.0..=1.0).contains(&mu) {
                let mean = (mu == 0.0).then_some(t);
                let lhs = sup_over_modes(basis, mean, |l| {
                    l.powf(2.0 * mu) * -(-2.0 * t * l * l).exp_m1() / (2.0 * l * l)
                });
                rows.push(row(BoundFamily::SquareIntegral, mu, t, lhs, t.powf(1.0 - mu)));

                let mean = (mu == 0.0).then_some(t);
                let lhs = sup_over_modes(basis, mean, |l| {
                    l.powf(2.0 * mu) * -(-t * l * l).exp_m1() / (l * l)
                });
                rows.push(row(BoundFamily::IntegratedPower, mu, t, lhs, t.powf(1.0 - mu)));
            }
        }
    }
    SmoothingReport { rows }
}

fn row(family: BoundFamily, exponent: f64, t: f64, lhs: f64, scale: f64) -> BoundRow {
    BoundRow {
        family,
        exponent,
        t,
        lhs,
        scale,
        constant: lhs / scale,
    }
}
