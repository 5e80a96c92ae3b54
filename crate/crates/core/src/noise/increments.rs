//! Q-Wiener increments at any level of a coupled ladder.
//!
//! The fine increment of mode `j` over fine step `m` is `sqrt(q_j k_fine) xi[m][j]`. A level
//! with `level_m` steps sums `r = m_fine / level_m` consecutive fine increments with a
//! balanced pairwise tree. When `r` is a power of two the two halves of that tree are
//! exactly the increments of the level with `2 level_m` steps, so refinement telescopes
//! bit-for-bit.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::noise::{BrownianSkeleton, NoiseModel};
use crate::spectral::{EigenBasis, SpectralField};

/// Balanced pairwise sum of `f(lo..hi)`.
fn tree_sum(lo: usize, hi: usize, f: &impl Fn(usize) -> f64) -> f64 {
    match hi - lo {
        0 => 0.0,
        1 => f(lo),
        n => {
            let mid = lo + n / 2;
            tree_sum(lo, mid, f) + tree_sum(mid, hi, f)
        }
    }
}

/// A skeleton paired with the per-mode standard deviations of one noise model.
#[derive(Debug, Clone)]
pub struct NoiseIncrements<'a> {
    skeleton: &'a BrownianSkeleton,
    q: Vec<f64>,
    fine_scale: Vec<f64>,
}

impl<'a> NoiseIncrements<'a> {
    /// Pair a skeleton with explicit variances `q_j`; modes beyond `n_fine` are ignored.
    pub fn new(skeleton: &'a BrownianSkeleton, q: &[f64]) -> Result<Self> {
        if let Some(bad) = q.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidNoise(format!("variance {bad} is negative or not finite")));
        }
        let width = (skeleton.n_fine() + 1).min(q.len());
        let q: Vec<f64> = q[..width].to_vec();
        let kf = skeleton.fine_step();
        let fine_scale = q.iter().map(|v| (v * kf).sqrt()).collect();
        Ok(NoiseIncrements {
            skeleton,
            q,
            fine_scale,
        })
    }

    pub fn from_model(skeleton: &'a BrownianSkeleton, model: &NoiseModel, basis: &EigenBasis) -> Result<Self> {
        Self::new(skeleton, &model.variances(basis)?)
    }

    pub fn skeleton(&self) -> &BrownianSkeleton {
        self.skeleton
    }

    pub fn variances(&self) -> &[f64] {
        &self.q
    }

    /// Number of modes with a driving source.
    pub fn width(&self) -> usize {
        self.q.len()
    }

    #[inline]
    fn fine(&self, m: usize, j: usize) -> f64 {
        self.fine_scale[j] * self.skeleton.xi(m, j)
    }

    /// Fine steps per step of a level, after checking the level fits the skeleton.
    pub fn ratio(&self, level_m: usize) -> Result<usize> {
        let fine = self.skeleton.m_fine();
        if level_m == 0 || fine % level_m != 0 {
            return Err(Error::LadderInfeasible(format!(
                "level with {level_m} steps does not divide the {fine} skeleton steps"
            )));
        }
        Ok(fine / level_m)
    }

    fn check_step(&self, level_m: usize, level_n: usize, m: usize) -> Result<usize> {
        let r = self.ratio(level_m)?;
        if level_n > self.skeleton.n_fine() {
            return Err(Error::LadderInfeasible(format!(
                "level with {level_n} modes exceeds the skeleton's {}",
                self.skeleton.n_fine()
            )));
        }
        if m == 0 || m > level_m {
            return Err(Error::LadderInfeasible(format!("step {m} outside 1..={level_m}")));
        }
        Ok(r)
    }

    /// Coefficient `j` of `Delta W_m` at a level.
    pub fn increment_mode(&self, level_m: usize, m: usize, j: usize) -> Result<f64> {
        let r = self.check_step(level_m, 0, m)?;
        if j >= self.width() {
            return Ok(0.0);
        }
        let lo = (m - 1) * r + 1;
        Ok(tree_sum(lo, lo + r, &|i| self.fine(i, j)))
    }

    /// `P_N Delta W_m` into `out`; coefficients above `level_n` are zeroed.
    pub fn increment_into(&self, level_m: usize, level_n: usize, m: usize, out: &mut [f64]) -> Result<()> {
        let r = self.check_step(level_m, level_n, m)?;
        out.fill(0.0);
        let lo = (m - 1) * r + 1;
        let top = (level_n + 1).min(self.width()).min(out.len());
        for (j, o) in out.iter_mut().enumerate().take(top) {
            *o = tree_sum(lo, lo + r, &|i| self.fine(i, j));
        }
        Ok(())
    }

    /// `P_N Delta W_m` as a field on `basis`.
    pub fn increment(&self, basis: &Arc<EigenBasis>, level_m: usize, level_n: usize, m: usize) -> Result<SpectralField> {
        if level_n > basis.max_index() {
            return Err(Error::TruncationOutOfRange {
                requested: level_n,
                available: basis.max_index(),
            });
        }
        let mut out = vec![0.0; basis.len()];
        self.increment_into(level_m, level_n, m, &mut out)?;
        SpectralField::from_coeffs(basis, out)
    }

    /// Sum of the standard normals of a level step, divided by `sqrt(r)`: a standard normal
    /// coupled to that step's increment.
    pub fn normalized_normal(&self, level_m: usize, m: usize, j: usize) -> Result<f64> {
        let r = self.check_step(level_m, 0, m)?;
        let lo = (m - 1) * r + 1;
        Ok(tree_sum(lo, lo + r, &|i| self.skeleton.xi(i, j)) / (r as f64).sqrt())
    }

    /// `W_j(T)` accumulated from a level's increments by the same pairwise tree.
    pub fn terminal_value(&self, level_m: usize, j: usize) -> Result<f64> {
        self.ratio(level_m)?;
        let incs: Vec<f64> = (1..=level_m)
            .map(|m| self.increment_mode(level_m, m, j))
            .collect::<Result<_>>()?;
        Ok(tree_sum(0, incs.len(), &|i| incs[i]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finest_level_is_one_fine_increment() {
        let sk = BrownianSkeleton::generate(1, 8, 3, 2.0).unwrap();
        let q = [0.0, 1.0, 0.5, 0.25];
        let inc = NoiseIncrements::new(&sk, &q).unwrap();
        let v = inc.increment_mode(8, 3, 2).unwrap();
        assert_eq!(v, (0.5f64 * 0.25).sqrt() * sk.xi(3, 2));
    }

    #[test]
    fn zero_covariance_gives_zero_increment() {
        let sk = BrownianSkeleton::generate(1, 8, 3, 1.0).unwrap();
        let inc = NoiseIncrements::new(&sk, &[0.0; 4]).unwrap();
        let mut out = vec![1.0; 4];
        inc.increment_into(4, 3, 2, &mut out).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_non_dividing_levels() {
        let sk = BrownianSkeleton::generate(1, 12, 3, 1.0).unwrap();
        let inc = NoiseIncrements::new(&sk, &[0.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(inc.increment_mode(5, 1, 1), Err(Error::LadderInfeasible(_))));
        assert!(matches!(inc.increment_mode(4, 5, 1), Err(Error::LadderInfeasible(_))));
        let mut out = vec![0.0; 8];
        assert!(inc.increment_into(4, 7, 1, &mut out).is_err());
    }

    #[test]
    fn pairs_telescope_exactly() {
        let sk = BrownianSkeleton::generate(5, 64, 4, 1.0).unwrap();
        let inc = NoiseIncrements::new(&sk, &[0.0, 1.0, 0.3, 0.2, 0.1]).unwrap();
        for level in [1usize, 2, 4, 8, 16, 32] {
            for m in 1..=level {
                for j in 0..5 {
                    let coarse = inc.increment_mode(level, m, j).unwrap();
                    let a = inc.increment_mode(2 * level, 2 * m - 1, j).unwrap();
                    let b = inc.increment_mode(2 * level, 2 * m, j).unwrap();
                    assert_eq!(coarse.to_bits(), (a + b).to_bits());
                }
            }
        }
    }
}
