//! Coupled-refinement strong-error experiments and log-log rate fitting.
//!
//! Every path draws one skeleton at the reference resolution. The reference solution and
//! every ladder level are driven by increments summed from that skeleton, so level errors
//! measure discretization error only. The finest (reference) discretization stands in for the
//! exact solution.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{path_seed, sample_stochastic_convolution, BrownianSkeleton, NoiseIncrements, NoiseModel};
use crate::simulator::{csv_error, jackknife_mean, pairwise_sum};
use crate::spectral::{EigenBasis, ModeMap, SpectralField};
use crate::stepper::{SchemeConfig, SolverKind, Stepper};

pub const RATE_REPORT_SCHEMA_VERSION: u32 = 1;

/// Slope change between half and full path counts above which a fit is flagged.
const ROBUSTNESS_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    Time,
    Space,
}

impl Axis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::Time => "time",
            Axis::Space => "space",
        }
    }
}

/// One discretization: `m` time steps, modes `0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub m: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderSpec {
    pub axis: Axis,
    pub levels: Vec<Level>,
    pub reference: Level,
    pub n_paths: usize,
    pub p: f64,
    pub gamma_requested: f64,
    pub seed: u64,
}

impl LadderSpec {
    /// Time ladder over `steps` at `N = N_ref`.
    pub fn time(steps: &[usize], reference: Level, n_paths: usize, gamma_requested: f64, seed: u64) -> Self {
        LadderSpec {
            axis: Axis::Time,
            levels: steps.iter().map(|&m| Level { m, n: reference.n }).collect(),
            reference,
            n_paths,
            p: 2.0,
            gamma_requested,
            seed,
        }
    }

    /// Space ladder over `modes` at `M = M_ref`.
    pub fn space(modes: &[usize], reference: Level, n_paths: usize, gamma_requested: f64, seed: u64) -> Self {
        LadderSpec {
            axis: Axis::Space,
            levels: modes.iter().map(|&n| Level { m: reference.m, n }).collect(),
            reference,
            n_paths,
            p: 2.0,
            gamma_requested,
            seed,
        }
    }

    /// Check the ladder against a reference basis and noise certificate.
    pub fn validate(&self, basis: &EigenBasis, gamma_eff: f64) -> Result<()> {
        let mut bad = Vec::new();
        let r = self.reference;
        if self.levels.is_empty() {
            bad.push("ladder has no levels".to_string());
        }
        if r.m == 0 || r.n == 0 {
            bad.push("reference must have M >= 1 and N >= 1".to_string());
        }
        if r.n > basis.max_index() {
            bad.push(format!("reference N = {} exceeds basis max index {}", r.n, basis.max_index()));
        }
        if self.n_paths < 2 {
            bad.push(format!("n_paths = {} must be at least 2", self.n_paths));
        }
        if !(self.p >= 1.0) {
            bad.push(format!("moment order p = {} must be at least 1", self.p));
        }
        if self.gamma_requested > gamma_eff + 1e-12 {
            bad.push(format!(
                "requested gamma {} exceeds certified {gamma_eff}",
                self.gamma_requested
            ));
        }
        for l in &self.levels {
            if l.m == 0 || l.n == 0 {
                bad.push(format!("level {l:?} must have M >= 1 and N >= 1"));
                continue;
            }
            if r.m % l.m != 0 {
                bad.push(format!("level M = {} does not divide M_ref = {}", l.m, r.m));
            }
            if l.n > r.n {
                bad.push(format!("level N = {} exceeds N_ref = {}", l.n, r.n));
            }
            match self.axis {
                Axis::Time => {
                    if l.n != r.n {
                        bad.push(format!("time ladder level has N = {} instead of N_ref = {}", l.n, r.n));
                    }
                    if r.m < 4 * l.m {
                        bad.push(format!("M_ref = {} is not 4x finer than M = {}", r.m, l.m));
                    }
                }
                Axis::Space => {
                    if l.m != r.m {
                        bad.push(format!("space ladder level has M = {} instead of M_ref = {}", l.m, r.m));
                    }
                    if r.n <= basis.max_index()
                        && l.n <= basis.max_index()
                        && basis.eigenvalue(r.n) < 4.0 * basis.eigenvalue(l.n)
                    {
                        bad.push(format!("lambda at N_ref = {} is not 4x lambda at N = {}", r.n, l.n));
                    }
                }
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::LadderInfeasible(bad.join("; ")))
        }
    }
}

/// Problem data shared by every level of a study.
#[derive(Debug, Clone)]
pub struct Experiment {
    /// Reference basis; `N_ref` must not exceed its largest index.
    pub basis: Arc<EigenBasis>,
    pub noise: NoiseModel,
    pub x0: SpectralField,
    pub t_final: f64,
    pub cubic: bool,
    pub solver: SolverKind,
    pub solver_tol: f64,
    pub solver_max_iters: usize,
}

impl Experiment {
    pub fn new(basis: &Arc<EigenBasis>, noise: NoiseModel, x0: SpectralField, t_final: f64) -> Self {
        Experiment {
            basis: Arc::clone(basis),
            noise,
            x0,
            t_final,
            cubic: true,
            solver: SolverKind::FixedPoint,
            solver_tol: 1e-12,
            solver_max_iters: 100,
        }
    }

    pub fn linear(mut self) -> Self {
        self.cubic = false;
        self
    }

    fn scheme(&self, level: Level) -> SchemeConfig {
        SchemeConfig {
            n_modes: level.n,
            steps: level.m,
            t_final: self.t_final,
            solver: self.solver,
            solver_tol: self.solver_tol,
            solver_max_iters: self.solver_max_iters,
            k0_guard: None,
            cubic: self.cubic,
        }
    }

    /// Basis a level runs on: in one dimension its own smaller basis, otherwise the reference
    /// basis with `P_N` truncation.
    fn level_basis(&self, n: usize) -> Result<Arc<EigenBasis>> {
        if self.basis.dim() == 1 && n < self.basis.max_index() {
            EigenBasis::new(1, n, self.basis.lengths())
        } else {
            Ok(Arc::clone(&self.basis))
        }
    }
}

fn level_label(l: Level) -> String {
    format!("M={} N={}", l.m, l.n)
}

/// Per-path errors of one level: `||X_ref(t_m) - X_m||` for `m = 1..=M`.
#[derive(Debug, Clone)]
pub struct PathLevelErrors {
    pub level: Level,
    pub errors: Vec<f64>,
}

impl PathLevelErrors {
    pub fn max(&self) -> f64 {
        self.errors.iter().cloned().fold(0.0, f64::max)
    }
}

struct Prepared {
    level: Level,
    basis: Arc<EigenBasis>,
    map: ModeMap,
    x0: SpectralField,
}

fn prepare(exp: &Experiment, levels: &[Level]) -> Result<Vec<Prepared>> {
    levels
        .iter()
        .map(|&level| {
            let basis = exp.level_basis(level.n)?;
            let map = ModeMap::new(&basis, &exp.basis);
            let x0 = exp.x0.embed(&basis)?.truncate(level.n)?;
            Ok(Prepared { level, basis, map, x0 })
        })
        .collect()
}

/// Run the full scheme at one level, passing each state to `visit(m, coeffs)`.
fn run_level(exp: &Experiment, prep: &Prepared, skeleton: &BrownianSkeleton, mut visit: impl FnMut(usize, &[f64])) -> Result<()> {
    let config = exp.scheme(prep.level);
    let noise = NoiseIncrements::from_model(skeleton, &exp.noise, &prep.basis)?;
    noise.ratio(config.steps)?;
    let mut stepper = Stepper::new(&prep.basis, &config)?;
    let mut x = prep.x0.clone();
    let mut inc = vec![0.0; prep.basis.len()];
    visit(0, x.coeffs());
    for m in 1..=config.steps {
        noise.increment_into(config.steps, config.n_modes, m, &mut inc)?;
        x = stepper
            .step(&x, &inc)
            .map_err(|e| e.with_level(level_label(prep.level)))?
            .x;
        visit(m, x.coeffs());
    }
    Ok(())
}

/// Reference path and level errors for one skeleton. No ladder validation beyond what the
/// increments themselves require, so a level equal to the reference is allowed.
pub fn path_level_errors(exp: &Experiment, reference: Level, levels: &[Level], skeleton: &BrownianSkeleton) -> Result<Vec<PathLevelErrors>> {
    let prepared = prepare(exp, &[reference])?;
    let ref_prep = &prepared[0];
    let mut ref_path: Vec<Vec<f64>> = Vec::with_capacity(reference.m + 1);
    run_level(exp, ref_prep, skeleton, |_, c| ref_path.push(c.to_vec()))?;
    let levels_prepared = prepare(exp, levels)?;
    levels_prepared
        .iter()
        .map(|prep| {
            if reference.m % prep.level.m != 0 {
                return Err(Error::LadderInfeasible(format!(
                    "level M = {} does not divide M_ref = {}",
                    prep.level.m, reference.m
                )));
            }
            let r = reference.m / prep.level.m;
            let mut errors = Vec::with_capacity(prep.level.m);
            run_level(exp, prep, skeleton, |m, c| {
                if m > 0 {
                    errors.push(prep.map.distance_sq(c, &ref_path[m * r]).sqrt());
                }
            })?;
            Ok(PathLevelErrors {
                level: prep.level,
                errors,
            })
        })
        .collect()
}

/// Splitting route for the semidiscrete Galerkin solution `X^n = v^n + Z^n` on a time grid of
/// `m` steps: `Z` is the exact Ornstein-Uhlenbeck process and `v` solves
/// `v' + A^2 v + P_n A P F(v + Z) = 0` by implicit Euler.
pub fn galerkin_path(exp: &Experiment, level: Level, z_ref: &[SpectralField], mut visit: impl FnMut(usize, &[f64])) -> Result<()> {
    let prep = prepare(exp, &[level])?.pop().expect("one level");
    let config = exp.scheme(level);
    let mut stepper = Stepper::new(&prep.basis, &config)?;
    let zmap = ModeMap::new(&exp.basis, &prep.basis);
    let len = prep.basis.len();
    let mut z = vec![0.0; len];
    let truncate_z = |src: &SpectralField, dst: &mut [f64]| {
        dst.fill(0.0);
        zmap.scatter(src.coeffs(), dst);
        dst[level.n + 1..].fill(0.0);
    };
    let mut v = prep.x0.project_mean_free().into_coeffs();
    let mut next = v.clone();
    let zero = vec![0.0; len];
    let mut x = vec![0.0; len];
    truncate_z(&z_ref[0], &mut z);
    for j in 0..len {
        x[j] = v[j] + z[j];
    }
    visit(0, &x);
    for m in 1..=level.m {
        truncate_z(&z_ref[m], &mut z);
        stepper.set_step_index(m);
        next.copy_from_slice(&v);
        stepper
            .solve_implicit(&v, &zero, Some(&z), &mut next)
            .map_err(|e| e.with_level(level_label(level)))?;
        std::mem::swap(&mut v, &mut next);
        for j in 0..len {
            x[j] = v[j] + z[j];
        }
        visit(m, &x);
    }
    Ok(())
}

fn galerkin_path_errors(exp: &Experiment, reference: Level, levels: &[Level], skeleton: &BrownianSkeleton) -> Result<Vec<PathLevelErrors>> {
    let noise = NoiseIncrements::from_model(skeleton, &exp.noise, &exp.basis)?;
    let z_ref = sample_stochastic_convolution(&noise, &exp.basis, reference.m, reference.n, exp.x0.mean_coeff())?;
    let mut ref_path: Vec<Vec<f64>> = Vec::with_capacity(reference.m + 1);
    galerkin_path(exp, reference, &z_ref, |_, c| ref_path.push(c.to_vec()))?;
    levels
        .iter()
        .map(|&level| {
            if level.m != reference.m {
                return Err(Error::LadderInfeasible(format!(
                    "Galerkin levels share the reference time grid, got M = {} vs {}",
                    level.m, reference.m
                )));
            }
            let basis = exp.level_basis(level.n)?;
            let map = ModeMap::new(&basis, &exp.basis);
            let mut errors = Vec::with_capacity(level.m);
            galerkin_path(exp, level, &z_ref, |m, c| {
                if m > 0 {
                    errors.push(map.distance_sq(c, &ref_path[m]).sqrt());
                }
            })?;
            Ok(PathLevelErrors { level, errors })
        })
        .collect()
}

/// Weighted least-squares fit of `log e = intercept + slope log h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
}

impl RateFit {
    /// Two-sided 95% band `slope -+ 1.96 se`.
    pub fn band(&self) -> (f64, f64) {
        (self.slope - 1.96 * self.slope_se, self.slope + 1.96 * self.slope_se)
    }
}

/// Fit `(h, e, se)` triples on log-log axes.
///
/// Weights are `(e / se)^2`, the inverse variance of `log e`, when every `se` is positive,
/// and uniform otherwise. With Monte Carlo weights the slope error is inflated by the
/// Birge ratio whenever the scatter exceeds what the error bars explain.
pub fn fit_rate(points: &[(f64, f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!("{} levels, at least 3 are required", points.len())));
    }
    if let Some(p) = points.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0 && p.0.is_finite() && p.1.is_finite())) {
        return Err(Error::DegenerateFit(format!("nonpositive or non-finite point {p:?}")));
    }
    let mut hs: Vec<f64> = points.iter().map(|p| p.0).collect();
    hs.sort_by(|a, b| a.total_cmp(b));
    if hs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DegenerateFit("h values are not distinct".into()));
    }
    let mc_weights = points.iter().all(|p| p.2 > 0.0 && p.2.is_finite());
    let w: Vec<f64> = points
        .iter()
        .map(|p| if mc_weights { (p.1 / p.2).powi(2) } else { 1.0 })
        .collect();
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&x).map(|(w, x)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = w.iter().zip(&x).zip(&y).map(|((w, x), y)| w * (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let dof = (points.len() - 2) as f64;
    let chi2: f64 = w
        .iter()
        .zip(&x)
        .zip(&y)
        .map(|((w, x), y)| w * (y - intercept - slope * x).powi(2))
        .sum();
    let scale = if mc_weights { (chi2 / dof).max(1.0) } else { chi2 / dof };
    Ok(RateFit {
        slope,
        slope_se: (scale / sxx).sqrt(),
        intercept,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateRow {
    pub level_m: usize,
    pub level_n: usize,
    /// `k` on the time axis, `lambda_N` on the space axis.
    pub h: f64,
    /// `(E max_m ||.||^p)^(1/p)`.
    pub error: f64,
    pub stderr: f64,
    /// `max_m (E ||.||^p)^(1/p)`.
    pub error_sup_outside: f64,
    pub stderr_sup_outside: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    pub schema_version: u32,
    pub study: String,
    pub axis: Axis,
    pub reference: Level,
    pub n_paths: usize,
    pub p: f64,
    pub gamma_requested: f64,
    pub expected_slope: f64,
    pub rows: Vec<RateRow>,
    pub fit: RateFit,
    pub band: (f64, f64),
    pub fit_sup_outside: RateFit,
    /// Slope from the first half of the paths.
    pub half_path_slope: Option<f64>,
    pub undersampled: bool,
    pub monotone: bool,
    /// Fitted power law evaluated at the reference resolution.
    pub reference_bias_estimate: f64,
    pub seed: u64,
    pub config_hash: Option<String>,
}

pub const RATE_CSV_HEADER: [&str; 6] = ["axis", "level_M", "level_N", "h", "error", "stderr"];

impl RateReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(RATE_CSV_HEADER).map_err(csv_error)?;
        for r in &self.rows {
            out.write_record(&[
                self.axis.as_str().to_string(),
                r.level_m.to_string(),
                r.level_n.to_string(),
                r.h.to_string(),
                r.error.to_string(),
                r.stderr.to_string(),
            ])
            .map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Leave-one-out jackknife standard error of a functional of the path sample.
fn jackknife<F: Fn(&[usize]) -> f64>(n: usize, stat: F) -> f64 {
    let idx: Vec<usize> = (0..n).collect();
    let loo: Vec<f64> = (0..n)
        .map(|i| {
            let keep: Vec<usize> = idx.iter().copied().filter(|&j| j != i).collect();
            stat(&keep)
        })
        .collect();
    let mean = pairwise_sum(&loo) / n as f64;
    let dev: Vec<f64> = loo.iter().map(|t| (t - mean).powi(2)).collect();
    ((n - 1) as f64 / n as f64 * pairwise_sum(&dev)).sqrt()
}

struct LevelEstimate {
    inside: f64,
    inside_se: f64,
    outside: f64,
    outside_se: f64,
}

fn estimate_level(paths: &[&PathLevelErrors], p: f64) -> LevelEstimate {
    let n = paths.len();
    let maxima: Vec<f64> = paths.iter().map(|e| e.max().powf(p)).collect();
    let (mean_max, se_mean) = jackknife_mean(&maxima);
    let inside = mean_max.powf(1.0 / p);
    // Delta method for the 1/p power of a mean.
    let inside_se = if mean_max > 0.0 {
        se_mean * inside / (p * mean_max)
    } else {
        0.0
    };

    let steps = paths[0].errors.len();
    let pow: Vec<Vec<f64>> = paths
        .iter()
        .map(|e| e.errors.iter().map(|v| v.powf(p)).collect())
        .collect();
    let outside_of = |keep: &[usize]| -> f64 {
        (0..steps)
            .map(|m| {
                let col: Vec<f64> = keep.iter().map(|&i| pow[i][m]).collect();
                pairwise_sum(&col) / keep.len() as f64
            })
            .fold(0.0, f64::max)
            .powf(1.0 / p)
    };
    let all: Vec<usize> = (0..n).collect();
    let outside = outside_of(&all);
    let outside_se = if n >= 2 { jackknife(n, outside_of) } else { f64::NAN };
    LevelEstimate {
        inside,
        inside_se,
        outside,
        outside_se,
    }
}

fn axis_h(exp: &Experiment, axis: Axis, l: Level) -> f64 {
    match axis {
        Axis::Time => exp.t_final / l.m as f64,
        Axis::Space => exp.basis.eigenvalue(l.n),
    }
}

fn points_for(exp: &Experiment, spec: &LadderSpec, paths: &[Vec<PathLevelErrors>], use_outside: bool) -> Vec<(f64, f64, f64)> {
    (0..spec.levels.len())
        .map(|li| {
            let col: Vec<&PathLevelErrors> = paths.iter().map(|p| &p[li]).collect();
            let est = estimate_level(&col, spec.p);
            let h = axis_h(exp, spec.axis, spec.levels[li]);
            if use_outside {
                (h, est.outside, est.outside_se)
            } else {
                (h, est.inside, est.inside_se)
            }
        })
        .collect()
}

fn build_report(exp: &Experiment, spec: &LadderSpec, study: &str, paths: Vec<Vec<PathLevelErrors>>) -> Result<RateReport> {
    let mut rows = Vec::with_capacity(spec.levels.len());
    for (li, &level) in spec.levels.iter().enumerate() {
        let col: Vec<&PathLevelErrors> = paths.iter().map(|p| &p[li]).collect();
        let est = estimate_level(&col, spec.p);
        rows.push(RateRow {
            level_m: level.m,
            level_n: level.n,
            h: axis_h(exp, spec.axis, level),
            error: est.inside,
            stderr: est.inside_se,
            error_sup_outside: est.outside,
            stderr_sup_outside: est.outside_se,
        });
    }
    let fit = fit_rate(&points_for(exp, spec, &paths, false))?;
    let fit_sup_outside = fit_rate(&points_for(exp, spec, &paths, true))?;
    let half_path_slope = if paths.len() >= 4 {
        fit_rate(&points_for(exp, spec, &paths[..paths.len() / 2], false))
            .ok()
            .map(|f| f.slope)
    } else {
        None
    };
    let undersampled = half_path_slope.map_or(true, |s| (s - fit.slope).abs() >= ROBUSTNESS_THRESHOLD);
    if undersampled {
        log::warn!("{study}: slope is not stable under halving the path count; increase n_paths");
    }

    // Order levels from coarse to fine along the varied axis.
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| match spec.axis {
        Axis::Time => rows[b].h.total_cmp(&rows[a].h),
        Axis::Space => rows[a].h.total_cmp(&rows[b].h),
    });
    let monotone = order.windows(2).all(|w| {
        let (c, f) = (&rows[w[0]], &rows[w[1]]);
        f.error <= c.error + 2.0 * c.stderr.max(f.stderr)
    });

    let h_ref = axis_h(exp, spec.axis, spec.reference);
    let reference_bias_estimate = (fit.intercept + fit.slope * h_ref.ln()).exp();
    let expected_slope = match spec.axis {
        Axis::Time => spec.gamma_requested / 4.0,
        Axis::Space => -spec.gamma_requested / 2.0,
    };
    Ok(RateReport {
        schema_version: RATE_REPORT_SCHEMA_VERSION,
        study: study.to_string(),
        axis: spec.axis,
        reference: spec.reference,
        n_paths: spec.n_paths,
        p: spec.p,
        gamma_requested: spec.gamma_requested,
        expected_slope,
        band: fit.band(),
        rows,
        fit,
        fit_sup_outside,
        half_path_slope,
        undersampled,
        monotone,
        reference_bias_estimate,
        seed: spec.seed,
        config_hash: None,
    })
}

fn check_experiment(exp: &Experiment, spec: &LadderSpec) -> Result<()> {
    if exp.x0.basis().dim() != exp.basis.dim() || exp.x0.basis().lengths() != exp.basis.lengths() {
        return Err(Error::BasisMismatch);
    }
    let cert = exp.noise.certify_gamma(&exp.basis)?;
    spec.validate(&exp.basis, cert.effective())
}

/// Strong errors of the full scheme along a ladder, with fitted rate.
pub fn strong_error_study(exp: &Experiment, spec: &LadderSpec) -> Result<RateReport> {
    check_experiment(exp, spec)?;
    let paths: Vec<Vec<PathLevelErrors>> = (0..spec.n_paths)
        .into_par_iter()
        .map(|i| {
            let sk = BrownianSkeleton::generate(path_seed(spec.seed, i), spec.reference.m, spec.reference.n, exp.t_final)?;
            path_level_errors(exp, spec.reference, &spec.levels, &sk)
        })
        .collect::<Result<_>>()?;
    build_report(exp, spec, "strong-error", paths)
}

/// Galerkin errors `X^n - X^{N_ref}` at a common fine time grid, with fitted rate against
/// `lambda_n`.
pub fn galerkin_rate_study(exp: &Experiment, spec: &LadderSpec) -> Result<RateReport> {
    if spec.axis != Axis::Space {
        return Err(Error::LadderInfeasible("Galerkin study varies the space axis only".into()));
    }
    check_experiment(exp, spec)?;
    let paths: Vec<Vec<PathLevelErrors>> = (0..spec.n_paths)
        .into_par_iter()
        .map(|i| {
            let sk = BrownianSkeleton::generate(path_seed(spec.seed, i), spec.reference.m, spec.reference.n, exp.t_final)?;
            galerkin_path_errors(exp, spec.reference, &spec.levels, &sk)
        })
        .collect::<Result<_>>()?;
    build_report(exp, spec, "galerkin", paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let f = fit_rate(&[(4.0, 4.0, 0.0), (2.0, 2.0, 0.0), (1.0, 1.0, 0.0)]).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-14);
        assert!(f.slope_se < 1e-12);
        let f = fit_rate(&[(4.0, 16.0, 0.0), (2.0, 4.0, 0.0), (1.0, 1.0, 0.0)]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            fit_rate(&[(1.0, 1.0, 0.0), (1.0, 2.0, 0.0), (2.0, 3.0, 0.0)]),
            Err(Error::DegenerateFit(_))
        ));
        assert!(fit_rate(&[(1.0, 1.0, 0.0), (2.0, 2.0, 0.0)]).is_err());
        assert!(fit_rate(&[(1.0, 0.0, 0.0), (2.0, 2.0, 0.0), (3.0, 1.0, 0.0)]).is_err());
    }

    #[test]
    fn ladder_validation() {
        let b = EigenBasis::unit(1, 128).unwrap();
        let r = Level { m: 4096, n: 128 };
        assert!(LadderSpec::time(&[16, 32, 64], r, 8, 3.9, 0).validate(&b, 4.0).is_ok());
        assert!(LadderSpec::time(&[16, 2048], r, 8, 3.9, 0).validate(&b, 4.0).is_err());
        assert!(LadderSpec::time(&[48], r, 8, 3.9, 0).validate(&b, 4.0).is_err());
        assert!(LadderSpec::time(&[16], r, 8, 4.5, 0).validate(&b, 4.0).is_err());
        assert!(LadderSpec::space(&[4, 64], r, 8, 2.0, 0).validate(&b, 4.0).is_ok());
        assert!(LadderSpec::space(&[4, 100], r, 8, 2.0, 0).validate(&b, 4.0).is_err());
    }
}
