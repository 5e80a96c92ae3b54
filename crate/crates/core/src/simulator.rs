//! Single paths and ensembles of the full scheme with on-the-fly observables.
//!
//! Field dump layout (all little-endian):
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `CHCF` |
//! | 4 | format version `u32` (= 1) |
//! | 4 | dimension `u32` |
//! | 4 | modes per axis `u32` |
//! | 8 | coefficients per record `u64` |
//! | 8 | number of records `u64` |
//! | 8 x dim | domain lengths `f64` |
//!
//! followed by one record per stored step: the time `t` as `f64`, then the coefficients.

use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::convergence::{fit_rate, galerkin_path, Experiment, Level, RateFit};
use crate::error::{Error, Result};
use crate::noise::{path_seed, sample_stochastic_convolution, BrownianSkeleton, NoiseIncrements, NoiseModel};
use crate::nonlinearity::Nonlinearity;
use crate::spectral::{EigenBasis, SpectralField};
use crate::stepper::{SchemeConfig, Stepper};

pub const FIELD_DUMP_MAGIC: &[u8; 4] = b"CHCF";
pub const FIELD_DUMP_VERSION: u32 = 1;

/// `kappa = min{gamma, d/2 + 1/4}`, the index in which moments stay bounded.
pub fn moment_index(gamma: f64, dim: usize) -> f64 {
    gamma.min(dim as f64 / 2.0 + 0.25)
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    /// Stored fields are those at steps `0, thin, 2 thin, ...`; `0` stores none.
    pub thin: usize,
    #[serde(skip)]
    pub fields: Vec<SpectralField>,
    pub kappa: f64,
    pub l2: Vec<f64>,
    pub h1: Vec<f64>,
    pub kappa_norm: Vec<f64>,
    pub l4: Vec<f64>,
    pub l6: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
}

pub const TRAJECTORY_CSV_HEADER: [&str; 11] = [
    "step",
    "t",
    "l2",
    "h1",
    "kappa_norm",
    "l4",
    "l6",
    "mass",
    "energy",
    "iterations",
    "residual",
];

impl Trajectory {
    fn with_capacity(steps: usize, thin: usize, kappa: f64) -> Self {
        let cap = steps + 1;
        Trajectory {
            t: Vec::with_capacity(cap),
            thin,
            fields: Vec::new(),
            kappa,
            l2: Vec::with_capacity(cap),
            h1: Vec::with_capacity(cap),
            kappa_norm: Vec::with_capacity(cap),
            l4: Vec::with_capacity(cap),
            l6: Vec::with_capacity(cap),
            mass: Vec::with_capacity(cap),
            energy: Vec::with_capacity(cap),
            iterations: Vec::with_capacity(cap),
            residuals: Vec::with_capacity(cap),
        }
    }

    fn record(&mut self, nl: &mut Nonlinearity, m: usize, t: f64, x: &SpectralField, iterations: usize, residual: f64) -> Result<()> {
        self.t.push(t);
        self.l2.push(x.norm());
        self.h1.push(x.seminorm(1.0));
        self.kappa_norm.push(x.sobolev_norm(self.kappa));
        self.l4.push(nl.lp_norm(x, 4.0)?);
        self.l6.push(nl.lp_norm(x, 6.0)?);
        self.mass.push(x.mean_coeff());
        self.energy.push(nl.energy(x)?);
        self.iterations.push(iterations);
        self.residuals.push(residual);
        if self.thin > 0 && m % self.thin == 0 {
            self.fields.push(x.clone());
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Stored field at step `m`, if `m` is a multiple of the thinning factor.
    pub fn field_at(&self, m: usize) -> Option<&SpectralField> {
        if self.thin == 0 || m % self.thin != 0 {
            return None;
        }
        self.fields.get(m / self.thin)
    }

    /// Observables as CSV with the columns of [`TRAJECTORY_CSV_HEADER`].
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(TRAJECTORY_CSV_HEADER).map_err(csv_error)?;
        for i in 0..self.len() {
            out.write_record(&[
                i.to_string(),
                self.t[i].to_string(),
                self.l2[i].to_string(),
                self.h1[i].to_string(),
                self.kappa_norm[i].to_string(),
                self.l4[i].to_string(),
                self.l6[i].to_string(),
                self.mass[i].to_string(),
                self.energy[i].to_string(),
                self.iterations[i].to_string(),
                self.residuals[i].to_string(),
            ])
            .map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Stored fields in the binary dump format described in the module docs.
    pub fn write_fields<W: Write>(&self, w: W) -> Result<()> {
        let times: Vec<f64> = (0..self.fields.len()).map(|i| self.t[i * self.thin]).collect();
        write_field_dump(w, &times, &self.fields)
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Write `(t, field)` records sharing one basis.
pub fn write_field_dump<W: Write>(mut w: W, times: &[f64], fields: &[SpectralField]) -> Result<()> {
    if times.len() != fields.len() {
        return Err(Error::LengthMismatch {
            expected: fields.len(),
            got: times.len(),
        });
    }
    let basis = match fields.first() {
        Some(f) => Arc::clone(f.basis()),
        None => return Err(Error::InvalidConfig("no fields to dump".into())),
    };
    if fields.iter().any(|f| f.basis().id() != basis.id()) {
        return Err(Error::BasisMismatch);
    }
    w.write_all(FIELD_DUMP_MAGIC)?;
    w.write_all(&FIELD_DUMP_VERSION.to_le_bytes())?;
    w.write_all(&(basis.dim() as u32).to_le_bytes())?;
    w.write_all(&(basis.modes_per_axis() as u32).to_le_bytes())?;
    w.write_all(&(basis.len() as u64).to_le_bytes())?;
    w.write_all(&(fields.len() as u64).to_le_bytes())?;
    for l in basis.lengths() {
        w.write_all(&l.to_le_bytes())?;
    }
    for (t, f) in times.iter().zip(fields) {
        w.write_all(&t.to_le_bytes())?;
        for c in f.coeffs() {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Contents of a field dump.
#[derive(Debug, Clone)]
pub struct FieldDump {
    pub basis: Arc<EigenBasis>,
    pub times: Vec<f64>,
    pub fields: Vec<SpectralField>,
}

pub fn read_field_dump<R: Read>(mut r: R) -> Result<FieldDump> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes
            .get(pos..pos + n)
            .ok_or_else(|| Error::Format("field dump is truncated".into()))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != FIELD_DUMP_MAGIC {
        return Err(Error::Format("bad magic, expected CHCF".into()));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes"));
    let u64_at = |s: &[u8]| u64::from_le_bytes(s.try_into().expect("8 bytes"));
    let f64_at = |s: &[u8]| f64::from_le_bytes(s.try_into().expect("8 bytes"));
    let version = u32_at(take(4)?);
    if version != FIELD_DUMP_VERSION {
        return Err(Error::Format(format!("unsupported field dump version {version}")));
    }
    let dim = u32_at(take(4)?) as usize;
    let modes = u32_at(take(4)?) as usize;
    let n_coeffs = u64_at(take(8)?) as usize;
    let n_records = u64_at(take(8)?) as usize;
    let mut lengths = Vec::with_capacity(dim.min(3));
    for _ in 0..dim.min(3) {
        lengths.push(f64_at(take(8)?));
    }
    let basis = EigenBasis::new(dim, modes, &lengths)?;
    if basis.len() != n_coeffs {
        return Err(Error::Format(format!(
            "header declares {n_coeffs} coefficients, basis has {}",
            basis.len()
        )));
    }
    let mut times = Vec::with_capacity(n_records);
    let mut fields = Vec::with_capacity(n_records);
    for _ in 0..n_records {
        times.push(f64_at(take(8)?));
        let raw = take(8 * n_coeffs)?;
        let coeffs = raw.chunks_exact(8).map(f64_at).collect();
        fields.push(SpectralField::from_coeffs(&basis, coeffs)?);
    }
    if pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok(FieldDump { basis, times, fields })
}

/// Knobs of a path simulation beyond the scheme itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOptions {
    /// Index of the `kappa_norm` observable; `None` uses `min{gamma_eff, d/2 + 1/4}`.
    pub kappa: Option<f64>,
    /// Field storage stride; `0` stores none.
    pub thin: usize,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions { kappa: None, thin: 0 }
    }
}

fn resolve_kappa(opts: &PathOptions, model: &NoiseModel, basis: &EigenBasis) -> Result<f64> {
    match opts.kappa {
        Some(k) => Ok(k),
        None => Ok(moment_index(model.certify_gamma(basis)?.effective(), basis.dim())),
    }
}

/// Run the scheme on the basis of `x0`, recording observables at every step.
pub fn simulate_path(
    x0: &SpectralField,
    config: &SchemeConfig,
    model: &NoiseModel,
    skeleton: &BrownianSkeleton,
    opts: &PathOptions,
) -> Result<Trajectory> {
    let basis = Arc::clone(x0.basis());
    let kappa = resolve_kappa(opts, model, &basis)?;
    simulate_with_kappa(x0, config, model, skeleton, opts.thin, kappa)
}

fn simulate_with_kappa(
    x0: &SpectralField,
    config: &SchemeConfig,
    model: &NoiseModel,
    skeleton: &BrownianSkeleton,
    thin: usize,
    kappa: f64,
) -> Result<Trajectory> {
    let basis = Arc::clone(x0.basis());
    if (skeleton.t_final() - config.t_final).abs() > 1e-12 * config.t_final {
        return Err(Error::LadderInfeasible(format!(
            "skeleton horizon {} differs from T = {}",
            skeleton.t_final(),
            config.t_final
        )));
    }
    let noise = NoiseIncrements::from_model(skeleton, model, &basis)?;
    noise.ratio(config.steps)?;
    let mut stepper = Stepper::new(&basis, config)?;
    let mut nl = Nonlinearity::new(&basis);
    let k = config.step_size();
    let mut traj = Trajectory::with_capacity(config.steps, thin, kappa);
    let mut x = x0.truncate(config.n_modes)?;
    traj.record(&mut nl, 0, 0.0, &x, 0, 0.0)?;
    let mut inc = vec![0.0; basis.len()];
    for m in 1..=config.steps {
        noise.increment_into(config.steps, config.n_modes, m, &mut inc)?;
        let st = stepper.step(&x, &inc)?;
        x = st.x;
        traj.record(&mut nl, m, m as f64 * k, &x, st.iterations, st.residual)?;
    }
    Ok(traj)
}

/// Skeleton sized exactly for `config`.
pub fn path_skeleton(seed: u64, config: &SchemeConfig) -> Result<BrownianSkeleton> {
    BrownianSkeleton::generate(seed, config.steps, config.n_modes, config.t_final)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleOptions {
    pub seed: u64,
    pub kappa: Option<f64>,
    /// Drive every path with the base seed (a degenerate ensemble, for testing).
    pub identical_seeds: bool,
}

/// Per-time Monte Carlo estimates of `E ||X_m||_kappa^p`.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleMoments {
    pub t: Vec<f64>,
    pub kappa: f64,
    pub n_paths: usize,
    pub p_list: Vec<f64>,
    /// `mean[i][m]` for `p_list[i]`.
    pub mean: Vec<Vec<f64>>,
    /// Jackknife standard errors, same layout as `mean`.
    pub stderr: Vec<Vec<f64>>,
}

impl EnsembleMoments {
    /// `sup_m` of the estimated moment of order `p_list[i]`.
    pub fn sup_mean(&self, i: usize) -> f64 {
        self.mean[i].iter().cloned().fold(0.0, f64::max)
    }
}

/// Pairwise (cascade) summation, independent of how the inputs were produced.
pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

/// Mean and jackknife standard error of the mean.
pub(crate) fn jackknife_mean(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    let total = pairwise_sum(v);
    let mean = total / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let loo: Vec<f64> = v.iter().map(|x| (total - x) / (n - 1) as f64).collect();
    let dev: Vec<f64> = loo.iter().map(|t| (t - mean) * (t - mean)).collect();
    let var = (n - 1) as f64 / n as f64 * pairwise_sum(&dev);
    (mean, var.sqrt())
}

/// Simulate `n_paths` independent paths (seed `seed ^ i` for path `i`) and estimate the
/// moments of `||X_m||_kappa` of every order in `p_list`.
pub fn ensemble_moments(
    x0: &SpectralField,
    config: &SchemeConfig,
    model: &NoiseModel,
    n_paths: usize,
    p_list: &[f64],
    opts: &EnsembleOptions,
) -> Result<EnsembleMoments> {
    if n_paths < 2 {
        return Err(Error::InvalidConfig(format!("n_paths = {n_paths}, at least 2 are required")));
    }
    let kappa = resolve_kappa(
        &PathOptions {
            kappa: opts.kappa,
            thin: 0,
        },
        model,
        x0.basis(),
    )?;
    let norms: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let seed = if opts.identical_seeds { opts.seed } else { path_seed(opts.seed, i) };
            let sk = path_skeleton(seed, config)?;
            simulate_with_kappa(x0, config, model, &sk, 0, kappa).map(|t| t.kappa_norm)
        })
        .collect::<Result<_>>()?;
    let steps = config.steps + 1;
    let k = config.step_size();
    let mut mean = Vec::with_capacity(p_list.len());
    let mut stderr = Vec::with_capacity(p_list.len());
    for &p in p_list {
        let mut mrow = Vec::with_capacity(steps);
        let mut srow = Vec::with_capacity(steps);
        for m in 0..steps {
            let samples: Vec<f64> = norms.iter().map(|path| path[m].powf(p)).collect();
            let (mu, se) = jackknife_mean(&samples);
            mrow.push(mu);
            srow.push(se);
        }
        mean.push(mrow);
        stderr.push(srow);
    }
    Ok(EnsembleMoments {
        t: (0..steps).map(|m| m as f64 * k).collect(),
        kappa,
        n_paths,
        p_list: p_list.to_vec(),
        mean,
        stderr,
    })
}

/// Fitted time-regularity exponent of an ensemble.
#[derive(Debug, Clone, Serialize)]
pub struct HolderFit {
    pub beta: f64,
    pub p: f64,
    /// `slope / p`.
    pub exponent: f64,
    pub fit: RateFit,
    pub gaps: Vec<f64>,
    pub moments: Vec<f64>,
    pub stderr: Vec<f64>,
    pub decades: f64,
}

/// Regress `log E ||X(t) - X(s)||_beta^p` on `log (t - s)` over dyadic gaps.
///
/// Every pair of stored fields at the given gap contributes, on every path. Gaps run from
/// one storage stride up to half the stored horizon.
pub fn holder_probe(trajectories: &[Trajectory], beta: f64, p: f64) -> Result<HolderFit> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::InvalidConfig("holder probe needs at least one trajectory".into()))?;
    if first.thin == 0 || first.fields.len() < 3 {
        return Err(Error::InvalidConfig("trajectories carry no stored fields".into()));
    }
    if !(beta >= 0.0) {
        return Err(Error::InvalidConfig(format!("beta = {beta} must be nonnegative")));
    }
    let stored = first.fields.len();
    if trajectories
        .iter()
        .any(|t| t.fields.len() != stored || t.thin != first.thin || t.t.len() != first.t.len())
    {
        return Err(Error::InvalidConfig("trajectories have different grids".into()));
    }
    let stride_t = first.t[first.thin] - first.t[0];
    let mut lags = Vec::new();
    let mut lag = 1;
    while lag <= (stored - 1) / 2 {
        lags.push(lag);
        lag *= 2;
    }
    let decades = if lags.is_empty() {
        0.0
    } else {
        (*lags.last().expect("nonempty") as f64).log10()
    };
    if decades < 2.0 {
        return Err(Error::InsufficientGapDecades { decades });
    }

    let mut gaps = Vec::with_capacity(lags.len());
    let mut moments = Vec::with_capacity(lags.len());
    let mut stderr = Vec::with_capacity(lags.len());
    for &lag in &lags {
        // One sample per path: the average over all windows of that path.
        let per_path: Vec<f64> = trajectories
            .par_iter()
            .map(|tr| {
                let vals: Vec<f64> = (0..stored - lag)
                    .map(|s| {
                        let d = tr.fields[s + lag].sub(&tr.fields[s]).expect("shared basis");
                        d.sobolev_norm(beta).powf(p)
                    })
                    .collect();
                pairwise_sum(&vals) / vals.len() as f64
            })
            .collect();
        let (mu, se) = jackknife_mean(&per_path);
        gaps.push(lag as f64 * stride_t);
        moments.push(mu);
        stderr.push(if se.is_finite() { se } else { 0.0 });
    }
    let points: Vec<(f64, f64, f64)> = gaps
        .iter()
        .zip(&moments)
        .zip(&stderr)
        .map(|((g, m), s)| (*g, *m, *s))
        .collect();
    let fit = fit_rate(&points)?;
    Ok(HolderFit {
        beta,
        p,
        exponent: fit.slope / p,
        fit,
        gaps,
        moments,
        stderr,
        decades,
    })
}

/// Simulate an ensemble keeping every `thin`-th field, for [`holder_probe`].
pub fn simulate_ensemble(
    x0: &SpectralField,
    config: &SchemeConfig,
    model: &NoiseModel,
    n_paths: usize,
    seed: u64,
    thin: usize,
) -> Result<Vec<Trajectory>> {
    let kappa = resolve_kappa(&PathOptions::default(), model, x0.basis())?;
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let sk = path_skeleton(path_seed(seed, i), config)?;
            simulate_with_kappa(x0, config, model, &sk, thin, kappa)
        })
        .collect()
}

/// Ensemble of semidiscrete Galerkin paths `X^N = v^N + Z^N` on the time grid of `config`,
/// with `Z` the exact Ornstein-Uhlenbeck process and `v` advanced by implicit Euler. Unlike
/// the full scheme, the noise part carries no time-discretization damping, which makes these
/// paths the better proxy for the time regularity of the mild solution.
pub fn simulate_splitting_ensemble(
    x0: &SpectralField,
    config: &SchemeConfig,
    model: &NoiseModel,
    n_paths: usize,
    seed: u64,
    thin: usize,
) -> Result<Vec<Trajectory>> {
    let basis = Arc::clone(x0.basis());
    let kappa = resolve_kappa(&PathOptions::default(), model, &basis)?;
    let mut exp = Experiment::new(&basis, model.clone(), x0.clone(), config.t_final);
    exp.cubic = config.cubic;
    exp.solver = config.solver;
    exp.solver_tol = config.solver_tol;
    exp.solver_max_iters = config.solver_max_iters;
    let level = Level {
        m: config.steps,
        n: config.n_modes,
    };
    let k = config.step_size();
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let sk = path_skeleton(path_seed(seed, i), config)?;
            let noise = NoiseIncrements::from_model(&sk, model, &basis)?;
            let z = sample_stochastic_convolution(&noise, &basis, config.steps, config.n_modes, x0.mean_coeff())?;
            let mut nl = Nonlinearity::new(&basis);
            let mut traj = Trajectory::with_capacity(config.steps, thin, kappa);
            let mut failure = None;
            galerkin_path(&exp, level, &z, |m, c| {
                if failure.is_some() {
                    return;
                }
                let rec = SpectralField::from_coeffs(&basis, c.to_vec())
                    .and_then(|x| traj.record(&mut nl, m, m as f64 * k, &x, 0, 0.0));
                if let Err(e) = rec {
                    failure = Some(e);
                }
            })?;
            match failure {
                Some(e) => Err(e),
                None => Ok(traj),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jackknife_of_a_mean_is_the_classical_standard_error() {
        let v = [1.0, 2.0, 4.0, 7.0];
        let (m, se) = jackknife_mean(&v);
        assert_eq!(m, 3.5);
        let var: f64 = v.iter().map(|x| (x - 3.5f64).powi(2)).sum::<f64>() / 3.0;
        assert!((se - (var / 4.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn moment_index_caps_at_quarter_above_half_dimension() {
        assert_eq!(moment_index(4.0, 1), 0.75);
        assert_eq!(moment_index(0.6, 1), 0.6);
    }

    #[test]
    fn field_dump_round_trip() {
        let b = EigenBasis::new(2, 2, &[1.0, 2.0]).unwrap();
        let f1 = SpectralField::from_coeffs(&b, (0..b.len()).map(|i| i as f64).collect()).unwrap();
        let f2 = f1.scaled(-0.5);
        let mut buf = Vec::new();
        write_field_dump(&mut buf, &[0.0, 0.25], &[f1.clone(), f2.clone()]).unwrap();
        assert_eq!(&buf[..4], b"CHCF");
        assert_eq!(buf.len(), 32 + 16 + 2 * 8 * (1 + b.len()));
        let back = read_field_dump(&buf[..]).unwrap();
        assert_eq!(back.times, vec![0.0, 0.25]);
        assert_eq!(back.fields[1].coeffs(), f2.coeffs());
        assert_eq!(back.basis.lengths(), &[1.0, 2.0]);
        assert!(read_field_dump(&buf[..buf.len() - 3]).is_err());
    }
}
