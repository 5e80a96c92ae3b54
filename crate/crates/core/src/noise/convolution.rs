use std::sync::Arc;

use crate::error::{Error, Result};
use crate::noise::NoiseIncrements;
use crate::spectral::{EigenBasis, SpectralField};

/// Sample `Z(t_m) = E(t_m)(I - P) X_0 + O(t_m)` on a uniform grid of `level_m` steps.
///
/// Each mean-free mode follows the exact one-step Ornstein-Uhlenbeck law
/// `Z_m = e^{-k lambda^2} Z_{m-1} + eta_m` with
/// `Var(eta_m) = q (1 - e^{-2 k lambda^2}) / (2 lambda^2)`, driven by the normalized sum of
/// the skeleton normals in that step. The mean mode starts at `<X_0, e_0>` and integrates the
/// mean-mode increments directly. Modes beyond `level_n` are left at zero.
pub fn sample_stochastic_convolution(
    noise: &NoiseIncrements<'_>,
    basis: &Arc<EigenBasis>,
    level_m: usize,
    level_n: usize,
    x0_mean: f64,
) -> Result<Vec<SpectralField>> {
    if level_n > basis.max_index() {
        return Err(Error::TruncationOutOfRange {
            requested: level_n,
            available: basis.max_index(),
        });
    }
    noise.ratio(level_m)?;
    let k = noise.skeleton().t_final() / level_m as f64;
    let q = noise.variances();
    let top = (level_n + 1).min(noise.width());

    let mut decay = vec![0.0; top];
    let mut spread = vec![0.0; top];
    for j in 1..top {
        let l2 = basis.eigenvalue(j).powi(2);
        decay[j] = (-k * l2).exp();
        spread[j] = (q[j] * -(-2.0 * k * l2).exp_m1() / (2.0 * l2)).sqrt();
    }

    let mut current = SpectralField::zeros(basis);
    current.coeffs_mut()[0] = x0_mean;
    let mut path = Vec::with_capacity(level_m + 1);
    path.push(current.clone());
    for m in 1..=level_m {
        let c = current.coeffs_mut();
        if top > 0 {
            c[0] += noise.increment_mode(level_m, m, 0)?;
        }
        for j in 1..top {
            c[j] = decay[j] * c[j] + spread[j] * noise.normalized_normal(level_m, m, j)?;
        }
        path.push(current.clone());
    }
    Ok(path)
}
