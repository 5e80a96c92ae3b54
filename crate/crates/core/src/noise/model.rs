use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::EigenBasis;

/// Margin subtracted from a supremum-type regularity index before experiments use it.
pub const GAMMA_MARGIN: f64 = 0.05;

/// Largest regularity index the analysis admits.
pub const GAMMA_CAP: f64 = 4.0;

/// Covariance family, diagonal in the eigenbasis of `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseKind {
    /// `q_j = lambda_j^{-s}` for `j >= 1`.
    TraceClassPower { s: f64 },
    /// `Q = I` (space-time white noise), admissible only in one dimension.
    White,
    /// Explicit `q_j` for `j >= 1`, indexed by flattened mode; missing entries are zero.
    /// Entry 0 is ignored in favour of `q0`.
    Custom { q: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Variance density of the mean mode.
    #[serde(default)]
    pub q0: f64,
}

/// Outcome of checking `||A^{(gamma-2)/2} P Q^{1/2}||_HS < infinity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaCertificate {
    /// Supremum of admissible `gamma`, capped at 4.
    pub gamma: f64,
    /// Whether `gamma` itself is admissible (only when the cap binds or the noise has
    /// finite rank).
    pub attained: bool,
}

impl GammaCertificate {
    /// The index experiments should work with.
    pub fn effective(&self) -> f64 {
        if self.attained {
            self.gamma
        } else {
            self.gamma - GAMMA_MARGIN
        }
    }
}

impl NoiseModel {
    pub fn power(s: f64) -> Self {
        NoiseModel {
            kind: NoiseKind::TraceClassPower { s },
            q0: 0.0,
        }
    }

    pub fn white() -> Self {
        NoiseModel {
            kind: NoiseKind::White,
            q0: 0.0,
        }
    }

    /// No noise at all; the scheme reduces to the deterministic equation.
    pub fn zero() -> Self {
        NoiseModel {
            kind: NoiseKind::Custom { q: Vec::new() },
            q0: 0.0,
        }
    }

    pub fn with_q0(mut self, q0: f64) -> Self {
        self.q0 = q0;
        self
    }

    /// Per-mode variances `q_j` on the retained modes of `basis`.
    pub fn variances(&self, basis: &EigenBasis) -> Result<Vec<f64>> {
        if !(self.q0.is_finite() && self.q0 >= 0.0) {
            return Err(Error::InvalidNoise(format!("q0 = {} must be nonnegative", self.q0)));
        }
        let lambdas = basis.eigenvalues();
        let mut q: Vec<f64> = match &self.kind {
            NoiseKind::TraceClassPower { s } => {
                if !s.is_finite() {
                    return Err(Error::InvalidNoise(format!("power exponent {s} is not finite")));
                }
                lambdas.iter().map(|l| l.powf(-s)).collect()
            }
            NoiseKind::White => vec![1.0; lambdas.len()],
            NoiseKind::Custom { q } => {
                if let Some(bad) = q.iter().skip(1).find(|v| !(v.is_finite() && **v >= 0.0)) {
                    return Err(Error::InvalidNoise(format!("custom variance {bad} is negative or not finite")));
                }
                (0..lambdas.len()).map(|j| q.get(j).copied().unwrap_or(0.0)).collect()
            }
        };
        q[0] = self.q0;
        Ok(q)
    }

    /// Certify the regularity index `gamma` of the noise on a `d`-dimensional basis.
    ///
    /// With `lambda_j ~ j^{2/d}`, the sum `sum_j lambda_j^{gamma-2} q_j` converges for
    /// `q_j = lambda_j^{-s}` iff `gamma < 2 + s - d/2`. White noise is the case `s = 0`.
    /// Custom sequences are extrapolated by a log-log fit of the upper half of the retained
    /// modes.
    pub fn certify_gamma(&self, basis: &EigenBasis) -> Result<GammaCertificate> {
        let d = basis.dim() as f64;
        let threshold = match &self.kind {
            NoiseKind::TraceClassPower { s } => Some(2.0 + s - d / 2.0),
            NoiseKind::White => {
                if basis.dim() != 1 {
                    return Err(Error::InvalidNoise(format!(
                        "white noise requires d = 1, got d = {}",
                        basis.dim()
                    )));
                }
                Some(2.0 - d / 2.0)
            }
            NoiseKind::Custom { .. } => {
                let q = self.variances(basis)?;
                custom_decay(basis, &q).map(|s| 2.0 + s - d / 2.0)
            }
        };
        let cert = match threshold {
            None => GammaCertificate {
                gamma: GAMMA_CAP,
                attained: true,
            },
            Some(t) if t > GAMMA_CAP => GammaCertificate {
                gamma: GAMMA_CAP,
                attained: true,
            },
            Some(t) => GammaCertificate {
                gamma: t,
                attained: false,
            },
        };
        if cert.gamma <= d / 2.0 || (!cert.attained && cert.effective() <= d / 2.0) {
            return Err(Error::GammaTooSmall {
                gamma: cert.gamma,
                half_dim: d / 2.0,
            });
        }
        Ok(cert)
    }
}

/// Tail decay exponent `s` of a custom sequence, or `None` for finite rank.
fn custom_decay(basis: &EigenBasis, q: &[f64]) -> Option<f64> {
    let upper = (basis.len() / 2).max(1);
    let pts: Vec<(f64, f64)> = (upper..basis.len())
        .filter(|&j| q[j] > 0.0)
        .map(|j| (basis.eigenvalue(j).ln(), q[j].ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(-sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_class_in_two_dimensions_admits_gamma_two() {
        let b = EigenBasis::unit(2, 8).unwrap();
        let cert = NoiseModel::power(1.5).certify_gamma(&b).unwrap();
        assert!(cert.effective() >= 2.0);
    }

    #[test]
    fn white_noise_only_in_one_dimension() {
        let b1 = EigenBasis::unit(1, 8).unwrap();
        let cert = NoiseModel::white().certify_gamma(&b1).unwrap();
        assert_eq!(cert.gamma, 1.5);
        assert!(!cert.attained);
        assert!((cert.effective() - 1.45).abs() < 1e-15);
        let b2 = EigenBasis::unit(2, 4).unwrap();
        assert!(matches!(NoiseModel::white().certify_gamma(&b2), Err(Error::InvalidNoise(_))));
    }

    #[test]
    fn smooth_power_is_capped() {
        let b = EigenBasis::unit(1, 16).unwrap();
        let cert = NoiseModel::power(3.5).certify_gamma(&b).unwrap();
        assert_eq!(cert.gamma, 4.0);
        assert!(cert.attained);
    }

    #[test]
    fn too_rough_noise_is_rejected() {
        let b = EigenBasis::unit(1, 16).unwrap();
        assert!(matches!(
            NoiseModel::power(-1.2).certify_gamma(&b),
            Err(Error::GammaTooSmall { .. })
        ));
    }

    #[test]
    fn custom_sequences_are_extrapolated() {
        let b = EigenBasis::unit(1, 32).unwrap();
        let q: Vec<f64> = b.eigenvalues().iter().map(|l| if *l > 0.0 { l.powf(-1.0) } else { 0.0 }).collect();
        let cert = NoiseModel { kind: NoiseKind::Custom { q }, q0: 0.0 }
            .certify_gamma(&b)
            .unwrap();
        assert!((cert.gamma - 2.5).abs() < 1e-9);
        let finite = NoiseModel::zero().certify_gamma(&b).unwrap();
        assert_eq!(finite.gamma, 4.0);
    }

    #[test]
    fn variances_respect_q0() {
        let b = EigenBasis::unit(1, 4).unwrap();
        let q = NoiseModel::power(2.0).with_q0(0.3).variances(&b).unwrap();
        assert_eq!(q[0], 0.3);
        assert!((q[2] - b.eigenvalue(2).powi(-2)).abs() < 1e-18);
        assert!(NoiseModel::white().with_q0(-1.0).variances(&b).is_err());
    }
}
