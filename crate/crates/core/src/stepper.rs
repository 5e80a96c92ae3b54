//! Backward-Euler / spectral-Galerkin step
//! `X_m - X_{m-1} + k A^2 X_m + k P_N A P F(X_m) = P_N dW_m`
//! and the discrete solution operator `E_{k,N}^m = (I + k A^2)^{-m} P_N`.
//!
//! In coefficients the step decouples into `(1 + k lambda_j^2) x_j + k lambda_j F_j(x) = b_j`
//! with `b = P_N (X_{m-1} + dW_m)`. The mean mode has `lambda_0 = 0`, so `x_0 = b_0` exactly.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsolve::gmres;
use crate::noise::{BrownianSkeleton, NoiseIncrements, NoiseModel};
use crate::nonlinearity::Nonlinearity;
use crate::spectral::{EigenBasis, SpectralField};

/// Consecutive non-decreasing fixed-point residuals tolerated before switching to Newton.
const NON_CONTRACTING_LIMIT: usize = 25;

/// Contraction estimate above which a step size is reported as suspicious.
const CONTRACTION_WARN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    FixedPoint,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    /// Largest retained flattened mode index `N`.
    pub n_modes: usize,
    /// Number of time steps `M`.
    pub steps: usize,
    pub t_final: f64,
    pub solver: SolverKind,
    pub solver_tol: f64,
    pub solver_max_iters: usize,
    /// Largest admissible step size; `None` means `T`.
    pub k0_guard: Option<f64>,
    /// `false` drops `F` and leaves the linear scheme.
    pub cubic: bool,
}

impl SchemeConfig {
    pub fn new(n_modes: usize, steps: usize, t_final: f64) -> Self {
        SchemeConfig {
            n_modes,
            steps,
            t_final,
            solver: SolverKind::FixedPoint,
            solver_tol: 1e-12,
            solver_max_iters: 100,
            k0_guard: None,
            cubic: true,
        }
    }

    pub fn linear(mut self) -> Self {
        self.cubic = false;
        self
    }

    pub fn with_solver(mut self, solver: SolverKind) -> Self {
        self.solver = solver;
        self
    }

    /// `k = T / M`.
    pub fn step_size(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.steps == 0 {
            bad.push("steps must be at least 1".to_string());
        }
        if self.n_modes == 0 {
            bad.push("n_modes must be at least 1".to_string());
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            bad.push(format!("t_final = {} must be positive", self.t_final));
        }
        if !(self.solver_tol > 0.0) {
            bad.push(format!("solver_tol = {} must be positive", self.solver_tol));
        }
        if self.solver_max_iters == 0 {
            bad.push("solver_max_iters must be at least 1".to_string());
        }
        if let Some(g) = self.k0_guard {
            if self.steps > 0 && self.step_size() > g {
                bad.push(format!("step size {} exceeds k0_guard = {g}", self.step_size()));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(bad.join("; ")))
        }
    }
}

/// Outcome of one implicit step.
#[derive(Debug, Clone)]
pub struct StepState {
    pub m: usize,
    pub x: SpectralField,
    pub iterations: usize,
    pub residual: f64,
    pub used_newton: bool,
}

/// Diagnostics of one inner solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveInfo {
    pub iterations: usize,
    pub residual: f64,
    pub used_newton: bool,
    /// `sqrt(k) sup|f'(u)| / 2` at the start of the solve.
    pub contraction_estimate: f64,
}

/// Reusable implicit solver for one `(basis, N, k)` triple.
pub struct Stepper {
    basis: Arc<EigenBasis>,
    n: usize,
    k: f64,
    cubic: bool,
    solver: SolverKind,
    tol: f64,
    max_iters: usize,
    nl: Nonlinearity,
    diag: Vec<f64>,
    klam: Vec<f64>,
    b: Vec<f64>,
    f: Vec<f64>,
    r: Vec<f64>,
    trial: Vec<f64>,
    step_index: usize,
    warned: bool,
}

impl Stepper {
    pub fn new(basis: &Arc<EigenBasis>, config: &SchemeConfig) -> Result<Self> {
        config.validate()?;
        if config.n_modes > basis.max_index() {
            return Err(Error::TruncationOutOfRange {
                requested: config.n_modes,
                available: basis.max_index(),
            });
        }
        let k = config.step_size();
        let len = basis.len();
        let diag = basis.eigenvalues().iter().map(|l| 1.0 + k * l * l).collect();
        let klam = basis.eigenvalues().iter().map(|l| k * l).collect();
        Ok(Stepper {
            basis: Arc::clone(basis),
            n: config.n_modes,
            k,
            cubic: config.cubic,
            solver: config.solver,
            tol: config.solver_tol,
            max_iters: config.solver_max_iters,
            nl: Nonlinearity::new(basis),
            diag,
            klam,
            b: vec![0.0; len],
            f: vec![0.0; len],
            r: vec![0.0; len],
            trial: vec![0.0; len],
            step_index: 0,
            warned: false,
        })
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    pub fn step_size(&self) -> f64 {
        self.k
    }

    pub fn n_modes(&self) -> usize {
        self.n
    }

    /// Residual of the implicit equation at `x`; leaves `F(x + shift)` in `self.f`.
    fn residual(&mut self, x: &[f64], shift: Option<&[f64]>) -> (f64, f64) {
        let sup = if self.cubic {
            match shift {
                Some(s) => self.nl.eval_shifted_into(x, s, &mut self.f),
                None => self.nl.eval_into(x, &mut self.f),
            }
        } else {
            self.f.fill(0.0);
            0.0
        };
        let mut sq = 0.0;
        for j in 0..=self.n {
            let r = self.diag[j] * x[j] + self.klam[j] * self.f[j] - self.b[j];
            self.r[j] = r;
            sq += r * r;
        }
        (sq.sqrt(), sup)
    }

    /// Solve `(I + k A^2) x + k P_N A P F(x + shift) = P_N (prev + rhs)` into `x`.
    ///
    /// `x` must hold the initial guess on entry. With `shift = None` this is one step of the
    /// full scheme; with `shift = Z_m` it is one implicit Euler step of the splitting equation
    /// for `v = X - Z`.
    pub fn solve_implicit(&mut self, prev: &[f64], rhs: &[f64], shift: Option<&[f64]>, x: &mut [f64]) -> Result<SolveInfo> {
        let len = self.basis.len();
        for (name, v) in [("previous state", prev), ("right-hand side", rhs), ("iterate", &*x)] {
            if v.len() != len {
                log::error!("{name} has {} coefficients, basis has {len}", v.len());
                return Err(Error::LengthMismatch {
                    expected: len,
                    got: v.len(),
                });
            }
        }
        if let Some(s) = shift {
            if s.len() != len {
                return Err(Error::LengthMismatch {
                    expected: len,
                    got: s.len(),
                });
            }
        }
        self.b.fill(0.0);
        for j in 0..=self.n {
            self.b[j] = prev[j] + rhs[j];
        }
        x[self.n + 1..].fill(0.0);

        if !self.cubic {
            for j in 0..=self.n {
                x[j] = self.b[j] / self.diag[j];
            }
            let (res, _) = self.residual(x, shift);
            return Ok(SolveInfo {
                iterations: 1,
                residual: res,
                used_newton: false,
                contraction_estimate: 0.0,
            });
        }

        let mut iterations = 0;
        let (mut res, sup) = self.residual(x, shift);
        let lip = (3.0 * sup * sup - 1.0).max(1.0);
        let contraction = self.k.sqrt() * lip / 2.0;
        if contraction > CONTRACTION_WARN && !self.warned {
            log::warn!(
                "fixed-point contraction estimate {contraction:.3} exceeds {CONTRACTION_WARN} at step {} (k = {:e})",
                self.step_index,
                self.k
            );
            self.warned = true;
        }

        let mut newton = self.solver == SolverKind::Newton;
        if !newton {
            let mut non_contracting = 0;
            let mut best = res;
            while res > self.tol {
                if iterations >= self.max_iters || !res.is_finite() || non_contracting >= NON_CONTRACTING_LIMIT {
                    newton = true;
                    break;
                }
                for j in 0..=self.n {
                    x[j] = (self.b[j] - self.klam[j] * self.f[j]) / self.diag[j];
                }
                iterations += 1;
                let (next, _) = self.residual(x, shift);
                if next >= best {
                    non_contracting += 1;
                } else {
                    best = next;
                }
                res = next;
            }
            if newton {
                log::debug!(
                    "fixed point stalled at residual {res:e} after {iterations} iterations, switching to Newton"
                );
                if !res.is_finite() {
                    x[..=self.n].copy_from_slice(&prev[..=self.n]);
                    res = self.residual(x, shift).0;
                }
            }
        }
        if newton {
            let (r, it) = self.newton(x, shift, res)?;
            res = r;
            iterations += it;
        }
        Ok(SolveInfo {
            iterations,
            residual: res,
            used_newton: newton,
            contraction_estimate: contraction,
        })
    }

    /// Newton with a diagonally preconditioned GMRES inner solve and a backtracking line
    /// search. Expects `self.f`, `self.r` to hold the state at `x`.
    fn newton(&mut self, x: &mut [f64], shift: Option<&[f64]>, mut res: f64) -> Result<(f64, usize)> {
        let n = self.n;
        let mut iterations = 0;
        let mut delta = vec![0.0; n + 1];
        let mut u = vec![0.0; self.basis.len()];
        let mut psi = vec![0.0; self.basis.len()];
        let mut prod = vec![0.0; self.basis.len()];
        while res > self.tol {
            if iterations >= self.max_iters || !res.is_finite() {
                return Err(Error::SolverDiverged {
                    step: self.step_index,
                    residual: res,
                    iterations,
                    level: None,
                });
            }
            iterations += 1;
            for (j, ui) in u.iter_mut().enumerate() {
                *ui = x[j] + shift.map_or(0.0, |s| s[j]);
            }
            let mult = self.nl.derivative_multiplier(&u);
            let rhs: Vec<f64> = self.r[..=n].iter().map(|r| -r).collect();
            delta.fill(0.0);
            let diag = &self.diag;
            let klam = &self.klam;
            let nl = &mut self.nl;
            let stats = gmres(
                |v, out| {
                    psi[..=n].copy_from_slice(v);
                    nl.apply_multiplier(&mult, &psi, &mut prod);
                    for j in 0..=n {
                        out[j] = diag[j] * v[j] + klam[j] * prod[j];
                    }
                },
                |v| {
                    for (vj, d) in v.iter_mut().zip(diag) {
                        *vj /= d;
                    }
                },
                &rhs,
                &mut delta,
                40,
                400,
                1e-13,
            );
            log::trace!(
                "step {}: newton {iterations}, gmres {} its, rel. residual {:.1e}",
                self.step_index,
                stats.iterations,
                stats.relative_residual
            );

            let base: Vec<f64> = x[..=n].to_vec();
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                for j in 0..=n {
                    self.trial[j] = base[j] + t * delta[j];
                }
                let trial = std::mem::take(&mut self.trial);
                let (r_new, _) = self.residual(&trial, shift);
                self.trial = trial;
                if r_new.is_finite() && r_new <= (1.0 - 1e-4 * t) * res {
                    x[..=n].copy_from_slice(&self.trial[..=n]);
                    res = r_new;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                self.residual(x, shift);
                return Err(Error::SolverDiverged {
                    step: self.step_index,
                    residual: res,
                    iterations,
                    level: None,
                });
            }
        }
        Ok((res, iterations))
    }

    /// Advance `prev` by one step driven by the coefficient vector `increment`.
    pub fn step(&mut self, prev: &SpectralField, increment: &[f64]) -> Result<StepState> {
        if prev.basis().id() != self.basis.id() {
            return Err(Error::BasisMismatch);
        }
        self.step_index += 1;
        let mut x = prev.coeffs().to_vec();
        let info = self.solve_implicit(prev.coeffs(), increment, None, &mut x)?;
        Ok(StepState {
            m: self.step_index,
            x: SpectralField::from_coeffs(&self.basis, x)?,
            iterations: info.iterations,
            residual: info.residual,
            used_newton: info.used_newton,
        })
    }

    /// Reset the step counter used in diagnostics.
    pub fn set_step_index(&mut self, m: usize) {
        self.step_index = m;
    }
}

/// `E_{k,N}^m v = (I + k A^2)^{-m} P_N v`.
pub fn discrete_solution_operator(v: &SpectralField, k: f64, n: usize, m: usize) -> Result<SpectralField> {
    let mut out = v.truncate(n)?;
    let lambdas = v.basis().eigenvalues();
    for (c, l) in out.coeffs_mut().iter_mut().zip(lambdas).skip(1) {
        *c *= (1.0 + k * l * l).powi(-(m as i32));
    }
    Ok(out)
}

/// One step of the scheme from `state`.
pub fn backward_euler_step(
    state: &StepState,
    config: &SchemeConfig,
    basis: &Arc<EigenBasis>,
    noise_increment: &SpectralField,
) -> Result<StepState> {
    if noise_increment.support_max() > config.n_modes {
        return Err(Error::InvalidConfig(format!(
            "noise increment carries modes above N = {}",
            config.n_modes
        )));
    }
    if !noise_increment.same_basis(&state.x) {
        return Err(Error::BasisMismatch);
    }
    let mut stepper = Stepper::new(basis, config)?;
    stepper.set_step_index(state.m);
    stepper.step(&state.x, noise_increment.coeffs())
}

/// Full path `X_0^{M,N}, ..., X_M^{M,N}` with per-step diagnostics.
#[derive(Debug, Clone)]
pub struct SchemePath {
    pub states: Vec<SpectralField>,
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
}

/// Run the scheme for `config.steps` steps driven by `skeleton`.
pub fn run_scheme(
    x0: &SpectralField,
    config: &SchemeConfig,
    basis: &Arc<EigenBasis>,
    model: &NoiseModel,
    skeleton: &BrownianSkeleton,
) -> Result<SchemePath> {
    if (skeleton.t_final() - config.t_final).abs() > 1e-12 * config.t_final {
        return Err(Error::LadderInfeasible(format!(
            "skeleton horizon {} differs from T = {}",
            skeleton.t_final(),
            config.t_final
        )));
    }
    let noise = NoiseIncrements::from_model(skeleton, model, basis)?;
    noise.ratio(config.steps)?;
    let mut stepper = Stepper::new(basis, config)?;
    let mut current = x0.embed(basis)?.truncate(config.n_modes)?;
    let mut inc = vec![0.0; basis.len()];
    let mut path = SchemePath {
        states: vec![current.clone()],
        iterations: vec![0],
        residuals: vec![0.0],
    };
    for m in 1..=config.steps {
        noise.increment_into(config.steps, config.n_modes, m, &mut inc)?;
        let st = stepper.step(&current, &inc)?;
        path.iterations.push(st.iterations);
        path.residuals.push(st.residual);
        current = st.x;
        path.states.push(current.clone());
    }
    Ok(path)
}

/// `lambda^mu (1 + k lambda^2)^{-m} t_m^{mu/2}` for one mode.
pub fn discrete_power_multiplier(lambda: f64, k: f64, m: usize, mu: f64) -> f64 {
    let t = m as f64 * k;
    lambda.powf(mu) * (1.0 + k * lambda * lambda).powi(-(m as i32)) * t.powf(mu / 2.0)
}

/// `k sum_{i=1}^m lambda^2 (1 + k lambda^2)^{-2i}` for one mode.
pub fn discrete_square_sum(lambda: f64, k: f64, m: usize) -> f64 {
    let l2 = lambda * lambda;
    let q = (1.0 + k * l2).powi(-2);
    // Geometric series q (1 - q^m) / (1 - q).
    let sum = if q == 1.0 {
        m as f64
    } else {
        q * (1.0 - q.powi(m as i32)) / (1.0 - q)
    };
    k * l2 * sum
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscreteBound {
    /// `||A^mu E_{k,N}^m|| t_m^{mu/2}`.
    Power,
    /// `k sum_j ||A E_{k,N}^j||^2`.
    SquareSum,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscreteBoundRow {
    pub bound: DiscreteBound,
    pub mu: f64,
    pub k: f64,
    pub n_modes: usize,
    pub m_max: usize,
    pub constant: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscreteSmoothingReport {
    pub rows: Vec<DiscreteBoundRow>,
}

impl DiscreteSmoothingReport {
    pub fn max_constant(&self, bound: DiscreteBound, mu: f64) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.bound == bound && r.mu == mu)
            .map(|r| r.constant)
            .reduce(f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.rows.iter().all(|r| r.constant.is_finite())
    }
}

/// Empirical constants of the discrete smoothing bounds, sup over modes `1..=N` (the mean
/// mode joins for `mu = 0`) and over `m = 1..=m_max`, for every step size in `ks`.
pub fn verify_discrete_smoothing(
    basis: &EigenBasis,
    ks: &[f64],
    n: usize,
    mu_grid: &[f64],
    m_max: usize,
) -> Result<DiscreteSmoothingReport> {
    if n > basis.max_index() {
        return Err(Error::TruncationOutOfRange {
            requested: n,
            available: basis.max_index(),
        });
    }
    if let Some(mu) = mu_grid.iter().find(|mu| !(0.0..=2.0).contains(*mu)) {
        return Err(Error::InvalidConfig(format!("mu = {mu} outside [0, 2]")));
    }
    let lambdas = &basis.eigenvalues()[1..=n];
    let mut rows = Vec::new();
    for &k in ks {
        for &mu in mu_grid {
            let mut c: f64 = if mu == 0.0 { 1.0 } else { 0.0 };
            for &l in lambdas {
                let ratio = 1.0 / (1.0 + k * l * l);
                let lmu = l.powf(mu);
                let mut decay = 1.0;
                for m in 1..=m_max {
                    decay *= ratio;
                    c = c.max(lmu * decay * (m as f64 * k).powf(mu / 2.0));
                }
            }
            rows.push(DiscreteBoundRow {
                bound: DiscreteBound::Power,
                mu,
                k,
                n_modes: n,
                m_max,
                constant: c,
            });
        }
        let sq = lambdas
            .iter()
            .map(|&l| discrete_square_sum(l, k, m_max))
            .fold(0.0, f64::max);
        rows.push(DiscreteBoundRow {
            bound: DiscreteBound::SquareSum,
            mu: 1.0,
            k,
            n_modes: n,
            m_max,
            constant: sq,
        });
    }
    Ok(DiscreteSmoothingReport { rows })
}
