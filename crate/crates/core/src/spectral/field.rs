use std::sync::Arc;

use crate::error::{Error, Result};
use crate::spectral::EigenBasis;

/// Coefficients `c_j = <v, e_j>` of a function in an [`EigenBasis`]; `c_0` is the mean mode.
#[derive(Debug, Clone)]
pub struct SpectralField {
    basis: Arc<EigenBasis>,
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(basis: &Arc<EigenBasis>) -> Self {
        SpectralField {
            basis: Arc::clone(basis),
            coeffs: vec![0.0; basis.len()],
        }
    }

    /// The basis function `e_j`.
    pub fn unit(basis: &Arc<EigenBasis>, j: usize) -> Result<Self> {
        if j > basis.max_index() {
            return Err(Error::TruncationOutOfRange {
                requested: j,
                available: basis.max_index(),
            });
        }
        let mut f = Self::zeros(basis);
        f.coeffs[j] = 1.0;
        Ok(f)
    }

    pub fn from_coeffs(basis: &Arc<EigenBasis>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::LengthMismatch {
                expected: basis.len(),
                got: coeffs.len(),
            });
        }
        Ok(SpectralField {
            basis: Arc::clone(basis),
            coeffs,
        })
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// `<v, e_0>`.
    pub fn mean_coeff(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn same_basis(&self, other: &SpectralField) -> bool {
        self.basis.id() == other.basis.id()
    }

    fn check(&self, other: &SpectralField) -> Result<()> {
        if self.same_basis(other) {
            Ok(())
        } else {
            Err(Error::BasisMismatch)
        }
    }

    /// `||v||` by Parseval.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// `|v|_alpha = (sum_{j>=1} lambda_j^alpha c_j^2)^(1/2)`.
    pub fn seminorm(&self, alpha: f64) -> f64 {
        self.coeffs
            .iter()
            .zip(self.basis.eigenvalues())
            .skip(1)
            .map(|(c, l)| l.powf(alpha) * c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// `||v||_alpha = (|v|_alpha^2 + c_0^2)^(1/2)`.
    pub fn sobolev_norm(&self, alpha: f64) -> f64 {
        let s = self.seminorm(alpha);
        (s * s + self.coeffs[0] * self.coeffs[0]).sqrt()
    }

    pub fn dot(&self, other: &SpectralField) -> Result<f64> {
        self.check(other)?;
        Ok(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum())
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &SpectralField) -> Result<()> {
        self.check(other)?;
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        SpectralField {
            basis: Arc::clone(&self.basis),
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
        }
    }

    /// `A^alpha v` with the convention `A v := A P v`: the mean coefficient survives only for
    /// `alpha = 0`.
    pub fn apply_fractional_power(&self, alpha: f64) -> SpectralField {
        let mut out = self.clone();
        for (c, l) in out.coeffs.iter_mut().zip(self.basis.eigenvalues()).skip(1) {
            *c *= l.powf(alpha);
        }
        if alpha != 0.0 {
            out.coeffs[0] = 0.0;
        }
        out
    }

    /// `E(t) v = e^{-t A^2} P v + (I - P) v`.
    pub fn apply_semigroup(&self, t: f64) -> Result<SpectralField> {
        if !(t >= 0.0) {
            return Err(Error::NegativeTime(t));
        }
        let mut out = self.clone();
        for (c, l) in out.coeffs.iter_mut().zip(self.basis.eigenvalues()).skip(1) {
            *c *= (-t * l * l).exp();
        }
        Ok(out)
    }

    /// `P v`: drop the mean mode.
    pub fn project_mean_free(&self) -> SpectralField {
        let mut out = self.clone();
        out.coeffs[0] = 0.0;
        out
    }

    /// `P_N v`: keep flattened modes `0..=n`.
    pub fn truncate(&self, n: usize) -> Result<SpectralField> {
        if n > self.basis.max_index() {
            return Err(Error::TruncationOutOfRange {
                requested: n,
                available: self.basis.max_index(),
            });
        }
        let mut out = self.clone();
        out.coeffs[n + 1..].fill(0.0);
        Ok(out)
    }

    /// Highest mode index carrying a nonzero coefficient.
    pub fn support_max(&self) -> usize {
        self.coeffs.iter().rposition(|c| *c != 0.0).unwrap_or(0)
    }

    /// Grid values on the basis quadrature nodes.
    pub fn to_grid(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.basis.grid_len()];
        self.basis
            .synthesize(&self.coeffs, &mut out, &mut self.basis.workspace());
        out
    }

    /// Quadrature projection of grid values onto the retained modes.
    pub fn from_grid(basis: &Arc<EigenBasis>, values: &[f64]) -> Result<SpectralField> {
        if values.len() != basis.grid_len() {
            return Err(Error::GridMismatch {
                expected: basis.grid_len(),
                got: values.len(),
            });
        }
        let mut buf = values.to_vec();
        let mut coeffs = vec![0.0; basis.len()];
        basis.analyze(&mut buf, &mut coeffs, &mut basis.workspace());
        Ok(SpectralField {
            basis: Arc::clone(basis),
            coeffs,
        })
    }

    /// Re-express on another basis of the same domain by matching multi-indices.
    /// Modes absent from the target are dropped.
    pub fn embed(&self, target: &Arc<EigenBasis>) -> Result<SpectralField> {
        if target.dim() != self.basis.dim() || target.lengths() != self.basis.lengths() {
            return Err(Error::BasisMismatch);
        }
        let map = ModeMap::new(&self.basis, target);
        let mut out = SpectralField::zeros(target);
        map.scatter(&self.coeffs, &mut out.coeffs);
        Ok(out)
    }
}

/// Index correspondence between two bases on the same domain.
#[derive(Debug, Clone)]
pub struct ModeMap {
    /// For every target mode, the source mode with the same multi-index.
    source_of: Vec<Option<usize>>,
}

impl ModeMap {
    pub fn new(from: &EigenBasis, to: &EigenBasis) -> ModeMap {
        let source_of = if from.dim() == 1 && to.dim() == 1 {
            (0..to.len()).map(|j| (j < from.len()).then_some(j)).collect()
        } else {
            (0..to.len()).map(|j| from.index_of(to.multi_index(j))).collect()
        };
        ModeMap { source_of }
    }

    /// Copy coefficients of matching modes from `src` into `dst`.
    pub fn scatter(&self, src: &[f64], dst: &mut [f64]) {
        for (d, s) in dst.iter_mut().zip(&self.source_of) {
            if let Some(a) = s {
                *d = src[*a];
            }
        }
    }

    /// Squared distance between `fine` and the embedding of `coarse`, over all modes of the
    /// target basis.
    pub fn distance_sq(&self, coarse: &[f64], fine: &[f64]) -> f64 {
        fine.iter()
            .zip(&self.source_of)
            .map(|(f, s)| {
                let c = s.map_or(0.0, |a| coarse[a]);
                (f - c) * (f - c)
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn basis() -> Arc<EigenBasis> {
        EigenBasis::unit(1, 8).unwrap()
    }

    #[test]
    fn eigenrelation() {
        let b = basis();
        let e1 = SpectralField::unit(&b, 1).unwrap();
        let out = e1.apply_fractional_power(1.0);
        assert!((out.coeffs()[1] - PI * PI).abs() < 1e-12);
    }

    #[test]
    fn powers_annihilate_mean() {
        let b = basis();
        let e0 = SpectralField::unit(&b, 0).unwrap();
        assert_eq!(e0.apply_fractional_power(2.0).norm(), 0.0);
        assert_eq!(e0.apply_fractional_power(-0.5).norm(), 0.0);
        assert_eq!(e0.apply_fractional_power(0.0).norm(), 1.0);
    }

    #[test]
    fn negative_half_power() {
        let b = basis();
        let e2 = SpectralField::unit(&b, 2).unwrap();
        let out = e2.apply_fractional_power(-0.5);
        assert!((out.coeffs()[2] - 1.0 / (2.0 * PI)).abs() < 1e-14);
    }

    #[test]
    fn semigroup_actions() {
        let b = basis();
        let e0 = SpectralField::unit(&b, 0).unwrap();
        assert_eq!(e0.apply_semigroup(5.0).unwrap().coeffs(), e0.coeffs());
        let e1 = SpectralField::unit(&b, 1).unwrap();
        let out = e1.apply_semigroup(1.0).unwrap();
        assert!((out.coeffs()[1] - (-PI.powi(4)).exp()).abs() < 1e-20);
        assert!(matches!(e1.apply_semigroup(-1.0), Err(Error::NegativeTime(_))));
    }

    #[test]
    fn projections() {
        let b = basis();
        let e0 = SpectralField::unit(&b, 0).unwrap();
        assert_eq!(e0.project_mean_free().norm(), 0.0);
        let v = e0.add(&SpectralField::unit(&b, 5).unwrap()).unwrap();
        let t = v.truncate(3).unwrap();
        assert_eq!(t.coeffs(), e0.coeffs());
        assert!(matches!(v.truncate(9), Err(Error::TruncationOutOfRange { .. })));
    }

    #[test]
    fn truncation_tail_bound_is_sharp_for_single_mode() {
        let b = basis();
        let n = 4;
        let gamma = 3.0;
        let phi = SpectralField::unit(&b, n + 1).unwrap();
        let tail = phi.sub(&phi.truncate(n).unwrap()).unwrap().norm();
        assert_eq!(tail, 1.0);
        let lam = b.eigenvalue(n + 1);
        let semi = phi.seminorm(gamma);
        assert!((semi - lam.powf(gamma / 2.0)).abs() < 1e-9 * semi);
        let bound = lam.powf(-gamma / 2.0) * semi;
        assert!((tail - bound).abs() < 1e-12);
    }

    #[test]
    fn mismatched_bases_do_not_mix() {
        let a = SpectralField::zeros(&basis());
        let b = SpectralField::zeros(&basis());
        assert!(matches!(a.add(&b), Err(Error::BasisMismatch)));
        assert!(matches!(a.dot(&b), Err(Error::BasisMismatch)));
    }

    #[test]
    fn grid_values() {
        let b = basis();
        let e0 = SpectralField::unit(&b, 0).unwrap();
        assert!(e0.to_grid().iter().all(|v| (v - 1.0).abs() < 1e-14));
        let e1 = SpectralField::unit(&b, 1).unwrap();
        assert!((b.eval_point(e1.coeffs(), &[0.0]) - 2f64.sqrt()).abs() < 1e-15);
        let grid = e1.to_grid();
        let x0 = b.axis_nodes(0)[0];
        assert!((grid[0] - 2f64.sqrt() * (PI * x0).cos()).abs() < 1e-14);
        assert!(matches!(
            SpectralField::from_grid(&b, &grid[1..]),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn embedding_between_levels() {
        let fine = EigenBasis::unit(1, 8).unwrap();
        let coarse = EigenBasis::unit(1, 3).unwrap();
        let v = SpectralField::from_coeffs(&fine, (0..9).map(|j| j as f64).collect()).unwrap();
        let down = v.embed(&coarse).unwrap();
        assert_eq!(down.coeffs(), &[0.0, 1.0, 2.0, 3.0]);
        let up = down.embed(&fine).unwrap();
        assert_eq!(up.coeffs(), v.truncate(3).unwrap().coeffs());
        let map = ModeMap::new(&coarse, &fine);
        let d = map.distance_sq(down.coeffs(), v.coeffs());
        let expected: f64 = (4..9).map(|j| (j * j) as f64).sum();
        assert!((d - expected).abs() < 1e-9);
    }
}
