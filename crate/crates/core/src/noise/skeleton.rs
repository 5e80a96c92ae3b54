//! Finest-resolution Gaussian array driving every level of a coupled experiment.
//!
//! `xi[m][j]` for step `m = 1..=m_fine` and mode `j = 0..=n_fine` is stored row-major. Row
//! `m` is drawn from a ChaCha8 stream selected by `m` under the skeleton seed, so any row can
//! be regenerated independently of the others.
//!
//! Binary layout (all little-endian): `seed: u64`, `m_fine: u64`, `n_fine: u64`,
//! `t_final: f64`, followed by `m_fine * (n_fine + 1)` IEEE-754 doubles.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianSkeleton {
    seed: u64,
    m_fine: usize,
    n_fine: usize,
    t_final: f64,
    xi: Vec<f64>,
}

/// Seed of path `i` in an ensemble built from `base`.
pub fn path_seed(base: u64, path: usize) -> u64 {
    base ^ path as u64
}

impl BrownianSkeleton {
    pub fn generate(seed: u64, m_fine: usize, n_fine: usize, t_final: f64) -> Result<Self> {
        if m_fine == 0 {
            return Err(Error::InvalidConfig("skeleton needs at least one step".into()));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::InvalidConfig(format!("final time {t_final} must be positive")));
        }
        let width = n_fine + 1;
        let mut xi = vec![0.0; m_fine * width];
        for (row, chunk) in xi.chunks_exact_mut(width).enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(row as u64 + 1);
            for v in chunk.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
        }
        Ok(BrownianSkeleton {
            seed,
            m_fine,
            n_fine,
            t_final,
            xi,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn m_fine(&self) -> usize {
        self.m_fine
    }

    pub fn n_fine(&self) -> usize {
        self.n_fine
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn fine_step(&self) -> f64 {
        self.t_final / self.m_fine as f64
    }

    /// Standard normal for fine step `m` (1-based) and mode `j`.
    #[inline]
    pub fn xi(&self, m: usize, j: usize) -> f64 {
        self.xi[(m - 1) * (self.n_fine + 1) + j]
    }

    /// All modes of fine step `m` (1-based).
    pub fn row(&self, m: usize) -> &[f64] {
        let w = self.n_fine + 1;
        &self.xi[(m - 1) * w..m * w]
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.m_fine as u64).to_le_bytes())?;
        w.write_all(&(self.n_fine as u64).to_le_bytes())?;
        w.write_all(&self.t_final.to_le_bytes())?;
        for v in &self.xi {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let seed = u64::from_le_bytes(next(&mut r)?);
        let m_fine = u64::from_le_bytes(next(&mut r)?) as usize;
        let n_fine = u64::from_le_bytes(next(&mut r)?) as usize;
        let t_final = f64::from_le_bytes(next(&mut r)?);
        let count = m_fine
            .checked_mul(n_fine + 1)
            .ok_or_else(|| Error::Format("skeleton dimensions overflow".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != count * 8 {
            return Err(Error::Format(format!(
                "expected {} payload bytes, found {}",
                count * 8,
                bytes.len()
            )));
        }
        let xi = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(BrownianSkeleton {
            seed,
            m_fine,
            n_fine,
            t_final,
            xi,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible() {
        let a = BrownianSkeleton::generate(7, 16, 5, 1.0).unwrap();
        let b = BrownianSkeleton::generate(7, 16, 5, 1.0).unwrap();
        assert_eq!(a, b);
        let c = BrownianSkeleton::generate(8, 16, 5, 1.0).unwrap();
        assert_ne!(a.row(1), c.row(1));
    }

    #[test]
    fn rows_do_not_depend_on_row_count() {
        let a = BrownianSkeleton::generate(3, 8, 4, 1.0).unwrap();
        let b = BrownianSkeleton::generate(3, 32, 4, 1.0).unwrap();
        for m in 1..=8 {
            assert_eq!(a.row(m), b.row(m));
        }
    }

    #[test]
    fn binary_round_trip() {
        let a = BrownianSkeleton::generate(11, 4, 3, 0.5).unwrap();
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 32 + 4 * 4 * 8);
        assert_eq!(&buf[..8], &11u64.to_le_bytes());
        let b = BrownianSkeleton::read_from(&buf[..]).unwrap();
        assert_eq!(a, b);
        assert!(BrownianSkeleton::read_from(&buf[..buf.len() - 1]).is_err());
    }
}
