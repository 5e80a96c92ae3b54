//! Brute-force reference for tiny one-dimensional problems.
//!
//! Everything here is deliberately independent of the spectral path: basis functions are
//! evaluated with `cos` directly, `F` is projected with a composite trapezoid rule on
//! `4N + 3` intervals (exact for the degree-four trigonometric products involved), and the
//! implicit step is solved by dense Newton with LU factorizations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest mode index the oracle accepts.
pub const ORACLE_MAX_MODES: usize = 6;

const STEP_TOL: f64 = 1e-13;
const STEP_MAX_ITERS: usize = 200;

/// A labelled square matrix in retained-mode coordinates.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub label: String,
    pub matrix: DMatrix<f64>,
}

impl DenseOperator {
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let m = &self.matrix;
        (m - m.transpose()).amax() <= tol * (1.0 + m.amax())
    }

    pub fn is_diagonal(&self) -> bool {
        let m = &self.matrix;
        (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
    }
}

/// Quadrature and operator tables for modes `0..=n` on `[0, length]`.
#[derive(Debug, Clone)]
pub struct DenseOracle {
    n: usize,
    length: f64,
    /// `phi[(i, j)] = e_j(x_i)`.
    phi: DMatrix<f64>,
    weights: DVector<f64>,
    lambdas: Vec<f64>,
}

impl DenseOracle {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n > ORACLE_MAX_MODES {
            return Err(Error::InvalidConfig(format!(
                "dense oracle is limited to N <= {ORACLE_MAX_MODES}, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidDomain(format!("length {length} must be positive")));
        }
        let intervals = 4 * n + 3;
        let h = length / intervals as f64;
        let nodes: Vec<f64> = (0..=intervals).map(|i| i as f64 * h).collect();
        let weights = DVector::from_fn(nodes.len(), |i, _| {
            if i == 0 || i == intervals {
                0.5 * h
            } else {
                h
            }
        });
        let phi = DMatrix::from_fn(nodes.len(), n + 1, |i, j| {
            if j == 0 {
                1.0 / length.sqrt()
            } else {
                (2.0 / length).sqrt() * (j as f64 * std::f64::consts::PI * nodes[i] / length).cos()
            }
        });
        let lambdas = (0..=n)
            .map(|j| (j as f64 * std::f64::consts::PI / length).powi(2))
            .collect();
        Ok(DenseOracle {
            n,
            length,
            phi,
            weights,
            lambdas,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn laplacian(&self) -> DenseOperator {
        DenseOperator {
            label: "A".into(),
            matrix: DMatrix::from_diagonal(&DVector::from_vec(self.lambdas.clone())),
        }
    }

    pub fn laplacian_squared(&self) -> DenseOperator {
        let a = self.laplacian().matrix;
        DenseOperator {
            label: "A^2".into(),
            matrix: &a * &a,
        }
    }

    /// `P`, the projection onto mean-free functions.
    pub fn mean_free_projection(&self) -> DenseOperator {
        let mut m = DMatrix::identity(self.n + 1, self.n + 1);
        m[(0, 0)] = 0.0;
        DenseOperator {
            label: "P".into(),
            matrix: m,
        }
    }

    /// `(I + k A^2)^{-1}` by dense inversion.
    pub fn resolvent(&self, k: f64) -> Result<DenseOperator> {
        let m = DMatrix::identity(self.n + 1, self.n + 1) + self.laplacian_squared().matrix * k;
        let inv = m
            .try_inverse()
            .ok_or_else(|| Error::InvalidConfig("I + kA^2 is singular".into()))?;
        Ok(DenseOperator {
            label: "(I+kA^2)^-1".into(),
            matrix: inv,
        })
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() == self.n + 1 {
            Ok(())
        } else {
            Err(Error::LengthMismatch {
                expected: self.n + 1,
                got: v.len(),
            })
        }
    }

    /// Nodal values of `u`.
    fn values(&self, u: &[f64]) -> DVector<f64> {
        &self.phi * DVector::from_column_slice(u)
    }

    /// `<u^3 - u, e_j>` for `j = 0..=n`.
    pub fn f(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let vals = self.values(u);
        let g = DVector::from_fn(vals.len(), |i, _| {
            let s = vals[i];
            (s * s * s - s) * self.weights[i]
        });
        Ok((self.phi.transpose() * g).as_slice().to_vec())
    }

    /// `<(3u^2 - 1) e_j, e_i>`.
    pub fn f_prime(&self, u: &[f64]) -> Result<DenseOperator> {
        self.check_len(u)?;
        let vals = self.values(u);
        let scaled = DMatrix::from_fn(self.phi.nrows(), self.n + 1, |i, j| {
            (3.0 * vals[i] * vals[i] - 1.0) * self.weights[i] * self.phi[(i, j)]
        });
        Ok(DenseOperator {
            label: "F'(u)".into(),
            matrix: self.phi.transpose() * scaled,
        })
    }

    fn step_residual(&self, x: &DVector<f64>, rhs: &DVector<f64>, k: f64, a2: &DMatrix<f64>, ap: &DMatrix<f64>) -> DVector<f64> {
        let f = DVector::from_vec(self.f(x.as_slice()).expect("length checked"));
        x + a2 * x * k + ap * f * k - rhs
    }

    /// Solve `x - x_prev + k A^2 x + k A P F(x) = dW` by damped Newton.
    pub fn step(&self, x_prev: &[f64], dw: &[f64], k: f64) -> Result<Vec<f64>> {
        self.check_len(x_prev)?;
        self.check_len(dw)?;
        let a = self.laplacian().matrix;
        let a2 = self.laplacian_squared().matrix;
        let ap = &a * self.mean_free_projection().matrix;
        let rhs = DVector::from_column_slice(x_prev) + DVector::from_column_slice(dw);
        let eye = DMatrix::identity(self.n + 1, self.n + 1);

        let mut x = DVector::from_column_slice(x_prev);
        let mut r = self.step_residual(&x, &rhs, k, &a2, &ap);
        let mut res = r.norm();
        let mut iterations = 0;
        while res > STEP_TOL {
            if iterations >= STEP_MAX_ITERS || !res.is_finite() {
                return Err(Error::NonConvergence {
                    residual: res,
                    iterations,
                });
            }
            iterations += 1;
            let jac = &eye + &a2 * k + &ap * self.f_prime(x.as_slice())?.matrix * k;
            let delta = jac.lu().solve(&(-&r)).ok_or(Error::NonConvergence {
                residual: res,
                iterations,
            })?;
            let mut t = 1.0;
            loop {
                let trial = &x + &delta * t;
                let r_trial = self.step_residual(&trial, &rhs, k, &a2, &ap);
                let res_trial = r_trial.norm();
                if res_trial < res || t < 1e-10 {
                    x = trial;
                    r = r_trial;
                    res = res_trial;
                    break;
                }
                t *= 0.5;
            }
        }
        Ok(x.as_slice().to_vec())
    }
}

/// `oracle_F` on the unit interval, with `N = u.len() - 1`.
pub fn oracle_f(u: &[f64]) -> Result<Vec<f64>> {
    let n = u.len().checked_sub(1).ok_or(Error::LengthMismatch { expected: 1, got: 0 })?;
    DenseOracle::new(n, 1.0)?.f(u)
}

/// One implicit step on the unit interval with modes `0..=n`.
pub fn oracle_step(x_prev: &[f64], dw: &[f64], k: f64, n: usize) -> Result<Vec<f64>> {
    DenseOracle::new(n, 1.0)?.step(x_prev, dw, k)
}
