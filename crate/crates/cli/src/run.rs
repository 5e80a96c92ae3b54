//! Command runners. Each writes its artifacts plus `config.toml` (the resolved config) and
//! `meta.json` (hash, seed, wall time) into the output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use chc_core::convergence::RateReport;
use chc_core::simulator::{
    path_skeleton, simulate_ensemble, EnsembleOptions, HolderFit, PathOptions,
};
use chc_core::spectral::verify_smoothing_bounds;
use chc_core::stepper::verify_discrete_smoothing;
use chc_core::{
    ensemble_moments, galerkin_rate_study, holder_probe, simulate_path, simulate_splitting_ensemble,
    strong_error_study, Experiment, LadderSpec, Level,
};

use crate::config::{Command, ExperimentConfig, HolderRoute};
use crate::CliError;

pub const META_SCHEMA_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// What a successful run produced.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub command: &'static str,
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub config_sha256: String,
}

struct Out {
    dir: PathBuf,
    files: Vec<String>,
}

impl Out {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

/// Run one resolved experiment.
pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<RunSummary, CliError> {
    let start = Instant::now();
    let dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&dir)?;
    let echo = cfg.to_toml();
    let hash = sha256_hex(echo.as_bytes());
    let mut out = Out { dir, files: Vec::new() };
    out.create("config.toml")?.write_all(echo.as_bytes())?;

    log::info!("{} with seed {} (config {})", cfg.command.as_str(), cfg.seed, &hash[..12]);
    match cfg.command {
        Command::Simulate => simulate(cfg, &mut out)?,
        Command::ConvergeTime | Command::ConvergeSpace | Command::ConvergeGalerkin => converge(cfg, &hash, &mut out)?,
        Command::Regularity => regularity(cfg, &mut out)?,
        Command::VerifyOperators => verify(cfg, &mut out)?,
    }

    let meta = serde_json::json!({
        "schema_version": META_SCHEMA_VERSION,
        "tool": "chclab",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cfg.command.as_str(),
        "status": "ok",
        "seed": cfg.seed,
        "config_sha256": hash,
        "workers": workers,
        "wall_time_seconds": start.elapsed().as_secs_f64(),
        "files": out.files,
    });
    out.json("meta.json", &meta)?;
    Ok(RunSummary {
        command: cfg.command.as_str(),
        out_dir: out.dir,
        files: out.files,
        config_sha256: hash,
    })
}

/// Best effort: record a failure next to the other artifacts.
pub fn write_error(dir: &Path, err: &CliError) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(&err.to_json()).map_err(std::io::Error::from)?;
    fs::write(dir.join("error.json"), text + "\n")
}

fn gamma(cfg: &ExperimentConfig, basis: &chc_core::EigenBasis) -> Result<f64, CliError> {
    let certified = cfg.noise.model().certify_gamma(basis)?.effective();
    Ok(cfg.study.gamma.unwrap_or(certified))
}

fn simulate(cfg: &ExperimentConfig, out: &mut Out) -> Result<(), CliError> {
    let basis = cfg.basis()?;
    let model = cfg.noise.model();
    let g = gamma(cfg, &basis)?;
    let x0 = cfg.initial.build(&basis, g)?;
    let scheme = cfg.scheme.scheme_config();
    let sk = path_skeleton(cfg.seed, &scheme)?;
    let opts = PathOptions {
        kappa: None,
        thin: cfg.output.thin,
    };
    let tr = simulate_path(&x0, &scheme, &model, &sk, &opts)?;
    tr.write_csv(out.create("trajectory.csv")?)?;
    if cfg.output.thin > 0 {
        tr.write_fields(out.create("fields.chcf")?)?;
    }
    if cfg.study.n_paths >= 2 {
        let eopts = EnsembleOptions {
            seed: cfg.seed,
            kappa: None,
            identical_seeds: false,
        };
        let mom = ensemble_moments(&x0, &scheme, &model, cfg.study.n_paths, &cfg.study.p_list, &eopts)?;
        let mut w = csv::Writer::from_writer(out.create("moments.csv")?);
        w.write_record(["step", "t", "p", "mean", "stderr"])?;
        for (i, p) in mom.p_list.iter().enumerate() {
            for (m, t) in mom.t.iter().enumerate() {
                w.write_record(&[
                    m.to_string(),
                    t.to_string(),
                    p.to_string(),
                    mom.mean[i][m].to_string(),
                    mom.stderr[i][m].to_string(),
                ])?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

fn converge(cfg: &ExperimentConfig, hash: &str, out: &mut Out) -> Result<(), CliError> {
    let basis = cfg.basis()?;
    let g = gamma(cfg, &basis)?;
    let x0 = cfg.initial.build(&basis, g)?;
    let s = &cfg.scheme;
    let exp = Experiment {
        basis: basis.clone(),
        noise: cfg.noise.model(),
        x0,
        t_final: cfg.t_final(),
        cubic: s.cubic,
        solver: s.solver,
        solver_tol: s.tol,
        solver_max_iters: s.max_iters,
    };
    let reference = Level { m: s.steps, n: s.modes };
    let st = &cfg.study;
    let mut spec = match cfg.command {
        Command::ConvergeTime => LadderSpec::time(&st.levels, reference, st.n_paths, g, cfg.seed),
        _ => LadderSpec::space(&st.levels, reference, st.n_paths, g, cfg.seed),
    };
    spec.p = st.p;
    let mut rep: RateReport = if cfg.command == Command::ConvergeGalerkin {
        galerkin_rate_study(&exp, &spec)?
    } else {
        strong_error_study(&exp, &spec)?
    };
    rep.config_hash = Some(hash.to_string());
    log::info!(
        "slope {:.3} +- {:.3} (expected {:.3})",
        rep.fit.slope,
        rep.fit.slope_se,
        rep.expected_slope
    );
    rep.write_csv(out.create("rate.csv")?)?;
    let mut w = out.create("rate.json")?;
    w.write_all(rep.to_json()?.as_bytes())?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RegularityReport {
    schema_version: u32,
    route: HolderRoute,
    gamma: f64,
    n_paths: usize,
    p: f64,
    probes: Vec<HolderProbeRow>,
}

#[derive(Serialize)]
struct HolderProbeRow {
    beta: f64,
    exponent: f64,
    expected: f64,
    exponent_se: f64,
    decades: f64,
}

fn regularity(cfg: &ExperimentConfig, out: &mut Out) -> Result<(), CliError> {
    let basis = cfg.basis()?;
    let model = cfg.noise.model();
    let g = gamma(cfg, &basis)?;
    let x0 = cfg.initial.build(&basis, g)?;
    let scheme = cfg.scheme.scheme_config();
    let st = &cfg.study;
    let paths = match st.route {
        HolderRoute::Splitting => simulate_splitting_ensemble(&x0, &scheme, &model, st.n_paths, cfg.seed, 1)?,
        HolderRoute::Scheme => simulate_ensemble(&x0, &scheme, &model, st.n_paths, cfg.seed, 1)?,
    };
    let betas = st.betas.clone().unwrap_or_else(|| vec![0.0, g / 2.0, g]);
    let fits: Vec<HolderFit> = betas
        .iter()
        .map(|&b| holder_probe(&paths, b, st.p))
        .collect::<Result<_, _>>()?;

    let mut w = csv::Writer::from_writer(out.create("holder.csv")?);
    w.write_record(["beta", "gap", "moment", "stderr"])?;
    for f in &fits {
        for ((gap, m), se) in f.gaps.iter().zip(&f.moments).zip(&f.stderr) {
            w.write_record(&[f.beta.to_string(), gap.to_string(), m.to_string(), se.to_string()])?;
        }
    }
    w.flush()?;
    let report = RegularityReport {
        schema_version: META_SCHEMA_VERSION,
        route: st.route,
        gamma: g,
        n_paths: st.n_paths,
        p: st.p,
        probes: fits
            .iter()
            .map(|f| HolderProbeRow {
                beta: f.beta,
                exponent: f.exponent,
                expected: (0.5f64).min((g - f.beta) / 4.0),
                exponent_se: f.fit.slope_se / f.p,
                decades: f.decades,
            })
            .collect(),
    };
    out.json("holder.json", &report)
}

fn verify(cfg: &ExperimentConfig, out: &mut Out) -> Result<(), CliError> {
    let basis = cfg.basis()?;
    let v = &cfg.verify;
    let cont = verify_smoothing_bounds(&basis, &v.mus, &v.step_sizes);
    let disc = verify_discrete_smoothing(&basis, &v.step_sizes, cfg.scheme.modes, &v.mus, v.m_max)?;

    let mut w = csv::Writer::from_writer(out.create("smoothing.csv")?);
    w.write_record(["family", "exponent", "t", "lhs", "scale", "constant"])?;
    for r in &cont.rows {
        w.write_record(&[
            format!("{:?}", r.family),
            r.exponent.to_string(),
            r.t.to_string(),
            r.lhs.to_string(),
            r.scale.to_string(),
            r.constant.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(out.create("discrete_smoothing.csv")?);
    w.write_record(["bound", "mu", "k", "n_modes", "m_max", "constant"])?;
    for r in &disc.rows {
        w.write_record(&[
            format!("{:?}", r.bound),
            r.mu.to_string(),
            r.k.to_string(),
            r.n_modes.to_string(),
            r.m_max.to_string(),
            r.constant.to_string(),
        ])?;
    }
    w.flush()?;

    let summary = serde_json::json!({
        "schema_version": META_SCHEMA_VERSION,
        "continuous_all_finite": cont.all_finite(),
        "discrete_all_finite": disc.all_finite(),
        "continuous": cont,
        "discrete": disc,
    });
    out.json("operators.json", &summary)
}
