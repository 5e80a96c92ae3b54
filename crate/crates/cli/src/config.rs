//! Experiment configuration: a versioned TOML schema with per-command defaults.
//!
//! Every section of the file is optional; a missing section takes the defaults of the
//! command being run. Unknown keys are rejected.

use std::path::Path;
use std::sync::Arc;

use clap::ValueEnum;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use chc_core::stepper::SolverKind;
use chc_core::{EigenBasis, NoiseModel, SpectralField};

use crate::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// One path (plus ensemble moments when `study.n_paths >= 2`).
    Simulate,
    /// Strong error against the step size at fixed modes.
    ConvergeTime,
    /// Strong error against the mode count at fixed step size.
    ConvergeSpace,
    /// Semidiscrete Galerkin error against the mode count.
    ConvergeGalerkin,
    /// Hölder exponents in time of an ensemble.
    Regularity,
    /// Smoothing-bound tables of the continuous and discrete solution operators.
    VerifyOperators,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::ConvergeTime => "converge-time",
            Command::ConvergeSpace => "converge-space",
            Command::ConvergeGalerkin => "converge-galerkin",
            Command::Regularity => "regularity",
            Command::VerifyOperators => "verify-operators",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub dim: usize,
    /// Modes per axis; axis indices run over `0..=modes`.
    pub modes: usize,
    #[serde(default)]
    pub lengths: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKindName {
    TraceClassPower,
    White,
    Custom,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: NoiseKindName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    #[serde(default)]
    pub q0: f64,
}

impl NoiseConfig {
    fn power(s: f64) -> Self {
        NoiseConfig {
            kind: NoiseKindName::TraceClassPower,
            s: Some(s),
            q: None,
            q0: 0.0,
        }
    }

    pub fn model(&self) -> NoiseModel {
        let base = match self.kind {
            NoiseKindName::TraceClassPower => NoiseModel::power(self.s.unwrap_or(f64::NAN)),
            NoiseKindName::White => NoiseModel::white(),
            NoiseKindName::Zero => NoiseModel::zero(),
            NoiseKindName::Custom => NoiseModel {
                kind: chc_core::NoiseKind::Custom {
                    q: self.q.clone().unwrap_or_default(),
                },
                q0: 0.0,
            },
        };
        base.with_q0(self.q0)
    }

    fn problems(&self, out: &mut Vec<String>) {
        match self.kind {
            NoiseKindName::TraceClassPower => match self.s {
                Some(s) if s.is_finite() => {}
                Some(s) => out.push(format!("noise.s = {s} must be finite")),
                None => out.push("noise.s is required for kind = \"trace-class-power\"".into()),
            },
            NoiseKindName::Custom => match &self.q {
                Some(q) if q.iter().all(|v| v.is_finite() && *v >= 0.0) => {}
                Some(_) => out.push("noise.q entries must be finite and nonnegative".into()),
                None => out.push("noise.q is required for kind = \"custom\"".into()),
            },
            _ => {}
        }
        if self.s.is_some() && self.kind != NoiseKindName::TraceClassPower {
            out.push("noise.s only applies to kind = \"trace-class-power\"".into());
        }
        if self.q.is_some() && self.kind != NoiseKindName::Custom {
            out.push("noise.q only applies to kind = \"custom\"".into());
        }
        if !(self.q0.is_finite() && self.q0 >= 0.0) {
            out.push(format!("noise.q0 = {} must be nonnegative", self.q0));
        }
    }
}

/// Initial data presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    Zero,
    SingleMode {
        j: usize,
        amp: f64,
    },
    /// `c_j = amp lambda_j^{-decay/2} xi_j` with standard normal `xi_j` and `c_0 = 0`.
    /// Without `decay` the exponent is `gamma + d/2 + 1/2`.
    SmoothRandom {
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        decay: Option<f64>,
        #[serde(default = "one")]
        amp: f64,
    },
    /// Whitespace- or comma-separated values on the basis quadrature grid.
    GridFile {
        path: String,
    },
}

fn one() -> f64 {
    1.0
}

impl InitialConfig {
    pub fn build(&self, basis: &Arc<EigenBasis>, gamma: f64) -> Result<SpectralField, CliError> {
        match self {
            InitialConfig::Zero => Ok(SpectralField::zeros(basis)),
            InitialConfig::SingleMode { j, amp } => Ok(SpectralField::unit(basis, *j)?.scaled(*amp)),
            InitialConfig::SmoothRandom { seed, decay, amp } => {
                let exponent = decay.unwrap_or(gamma + basis.dim() as f64 / 2.0 + 0.5);
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut c = vec![0.0; basis.len()];
                for (j, cj) in c.iter_mut().enumerate().skip(1) {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    *cj = amp * basis.eigenvalue(j).powf(-exponent / 2.0) * xi;
                }
                Ok(SpectralField::from_coeffs(basis, c)?)
            }
            InitialConfig::GridFile { path } => {
                let text = std::fs::read_to_string(path)?;
                let values = text
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| CliError::Config(vec![format!("initial.path {path}: {e}")]))?;
                Ok(SpectralField::from_grid(basis, &values)?)
            }
        }
    }

    fn problems(&self, max_index: usize, out: &mut Vec<String>) {
        match self {
            InitialConfig::SingleMode { j, amp } => {
                if *j > max_index {
                    out.push(format!("initial.j = {j} exceeds the largest mode index {max_index}"));
                }
                if !amp.is_finite() {
                    out.push("initial.amp must be finite".into());
                }
            }
            InitialConfig::SmoothRandom { decay, amp, .. } => {
                if decay.is_some_and(|d| !d.is_finite()) || !amp.is_finite() {
                    out.push("initial.decay and initial.amp must be finite".into());
                }
            }
            InitialConfig::GridFile { path } => {
                if !Path::new(path).is_file() {
                    out.push(format!("initial.path {path} is not a readable file"));
                }
            }
            InitialConfig::Zero => {}
        }
    }
}

/// The scheme run by `simulate` and the reference level of the studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub steps: usize,
    pub modes: usize,
    /// Omitted means the command default; `converge-space` then picks
    /// `T = steps / lambda_{max level}^2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(default = "default_solver")]
    pub solver: SolverKind,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "yes")]
    pub cubic: bool,
}

fn default_solver() -> SolverKind {
    SolverKind::FixedPoint
}

fn default_tol() -> f64 {
    1e-12
}

fn default_max_iters() -> usize {
    100
}

fn yes() -> bool {
    true
}

impl SchemeSection {
    fn new(steps: usize, modes: usize, t_final: Option<f64>) -> Self {
        SchemeSection {
            steps,
            modes,
            t_final,
            solver: default_solver(),
            tol: default_tol(),
            max_iters: default_max_iters(),
            cubic: true,
        }
    }

    pub fn scheme_config(&self) -> chc_core::SchemeConfig {
        chc_core::SchemeConfig {
            n_modes: self.modes,
            steps: self.steps,
            t_final: self.t_final.unwrap_or(f64::NAN),
            solver: self.solver,
            solver_tol: self.tol,
            solver_max_iters: self.max_iters,
            k0_guard: None,
            cubic: self.cubic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HolderRoute {
    /// Exact Ornstein-Uhlenbeck part plus implicit Euler for the remainder.
    Splitting,
    /// The fully discrete scheme.
    Scheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    /// Step counts (time axis) or mode counts (space axes).
    #[serde(default)]
    pub levels: Vec<usize>,
    pub n_paths: usize,
    #[serde(default = "two")]
    pub p: f64,
    /// Requested regularity index; omitted means the certified value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Moment orders reported by `simulate` ensembles.
    #[serde(default = "default_p_list")]
    pub p_list: Vec<f64>,
    /// Sobolev indices probed by `regularity`; omitted means `0, gamma/2, gamma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    #[serde(default = "default_route")]
    pub route: HolderRoute,
}

fn two() -> f64 {
    2.0
}

fn default_p_list() -> Vec<f64> {
    vec![2.0, 4.0, 6.0]
}

fn default_route() -> HolderRoute {
    HolderRoute::Splitting
}

impl StudySection {
    fn new(levels: &[usize], n_paths: usize) -> Self {
        StudySection {
            levels: levels.to_vec(),
            n_paths,
            p: 2.0,
            gamma: None,
            p_list: default_p_list(),
            betas: None,
            route: default_route(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub step_sizes: Vec<f64>,
    pub mus: Vec<f64>,
    pub m_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    /// Field storage stride of `simulate`; `0` writes no field dump.
    #[serde(default)]
    pub thin: usize,
}

/// A config file as written; every section may be missing.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub schema_version: Option<u32>,
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub domain: Option<DomainConfig>,
    pub noise: Option<NoiseConfig>,
    pub initial: Option<InitialConfig>,
    pub scheme: Option<SchemeSection>,
    pub study: Option<StudySection>,
    pub verify: Option<VerifySection>,
    pub output: Option<OutputSection>,
}

/// A fully resolved experiment. Its TOML form is the config echo and the hashed identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub command: Command,
    pub seed: u64,
    pub domain: DomainConfig,
    pub noise: NoiseConfig,
    pub initial: InitialConfig,
    pub scheme: SchemeSection,
    pub study: StudySection,
    pub verify: VerifySection,
    pub output: OutputSection,
}

/// CLI flags that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub out: Option<String>,
}

impl ExperimentConfig {
    /// Desk-scale defaults of one command.
    pub fn defaults(command: Command) -> Self {
        let smooth = NoiseConfig::power(2.6);
        let bump = InitialConfig::SingleMode { j: 1, amp: 0.25 };
        let (noise, initial, scheme, study) = match command {
            Command::Simulate => (smooth, bump, SchemeSection::new(512, 128, Some(0.05)), StudySection::new(&[], 1)),
            Command::ConvergeTime => (
                smooth,
                bump,
                SchemeSection::new(4096, 128, Some(0.05)),
                StudySection::new(&[16, 32, 64, 128, 256, 512], 64),
            ),
            Command::ConvergeSpace => (
                smooth,
                bump,
                SchemeSection::new(4096, 128, None),
                StudySection::new(&[4, 8, 16, 32, 64], 64),
            ),
            Command::ConvergeGalerkin => (
                smooth,
                bump,
                SchemeSection::new(4096, 128, Some(0.05)),
                StudySection::new(&[4, 8, 16, 32, 64], 64),
            ),
            Command::Regularity => (
                NoiseConfig::power(0.55),
                InitialConfig::Zero,
                SchemeSection::new(512, 128, Some(0.005)),
                StudySection::new(&[], 32),
            ),
            Command::VerifyOperators => (smooth, bump, SchemeSection::new(200, 128, Some(1.0)), StudySection::new(&[], 1)),
        };
        ExperimentConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            command,
            seed: DEFAULT_SEED,
            domain: DomainConfig {
                dim: 1,
                modes: 128,
                lengths: vec![1.0],
            },
            noise,
            initial,
            scheme,
            study,
            verify: VerifySection {
                step_sizes: vec![1e-1, 1e-2, 1e-3, 1e-4],
                mus: vec![0.0, 0.5, 1.0, 2.0],
                m_max: 200,
            },
            output: OutputSection {
                dir: "out".into(),
                thin: 0,
            },
        }
    }

    /// Merge a file with the defaults of its command and the CLI overrides, then validate.
    pub fn resolve(raw: RawConfig, over: &Overrides) -> Result<Self, CliError> {
        let command = match (over.command, raw.command) {
            (Some(a), Some(b)) if a != b => {
                return Err(CliError::Config(vec![format!(
                    "command {} on the command line conflicts with command = \"{}\" in the config",
                    a.as_str(),
                    b.as_str()
                )]))
            }
            (Some(c), _) | (None, Some(c)) => c,
            (None, None) => return Err(CliError::Config(vec!["no command given on the command line or in the config".into()])),
        };
        let d = Self::defaults(command);
        let mut cfg = ExperimentConfig {
            schema_version: raw.schema_version.unwrap_or(CONFIG_SCHEMA_VERSION),
            command,
            seed: over.seed.or(raw.seed).unwrap_or(d.seed),
            domain: raw.domain.unwrap_or(d.domain),
            noise: raw.noise.unwrap_or(d.noise),
            initial: raw.initial.unwrap_or(d.initial),
            scheme: raw.scheme.unwrap_or(d.scheme),
            study: raw.study.unwrap_or(d.study),
            verify: raw.verify.unwrap_or(d.verify),
            output: raw.output.unwrap_or(d.output),
        };
        if cfg.domain.lengths.is_empty() {
            cfg.domain.lengths = vec![1.0; cfg.domain.dim];
        }
        if let Some(p) = over.paths {
            cfg.study.n_paths = p;
        }
        if let Some(out) = &over.out {
            cfg.output.dir = out.clone();
        }
        cfg.validate()?;
        if cfg.scheme.t_final.is_none() {
            cfg.scheme.t_final = Some(cfg.default_horizon()?);
        }
        Ok(cfg)
    }

    /// Parse a TOML document (a file or an echo) and resolve it.
    pub fn from_toml(text: &str, over: &Overrides) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(vec![e.to_string()]))?;
        Self::resolve(raw, over)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn basis(&self) -> Result<Arc<EigenBasis>, CliError> {
        Ok(EigenBasis::new(self.domain.dim, self.domain.modes, &self.domain.lengths)?)
    }

    pub fn t_final(&self) -> f64 {
        self.scheme.t_final.expect("resolved config has a horizon")
    }

    /// `converge-space` keeps `k lambda_N^2 <= 1` on every level; elsewhere `T = 0.05`.
    fn default_horizon(&self) -> Result<f64, CliError> {
        if self.command != Command::ConvergeSpace {
            return Ok(0.05);
        }
        let basis = self.basis()?;
        let n_max = self.study.levels.iter().copied().max().unwrap_or(self.scheme.modes);
        let l = basis.eigenvalue(n_max.min(basis.max_index()));
        Ok(self.scheme.steps as f64 / (l * l))
    }

    /// Collect every problem instead of stopping at the first.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut p = Vec::new();
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            p.push(format!(
                "schema_version = {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let dom = &self.domain;
        if !(1..=3).contains(&dom.dim) {
            p.push(format!("domain.dim = {} must be 1, 2 or 3", dom.dim));
        }
        if dom.modes == 0 {
            p.push("domain.modes must be at least 1".into());
        }
        if dom.lengths.len() != dom.dim {
            p.push(format!("domain.lengths has {} entries for dim = {}", dom.lengths.len(), dom.dim));
        }
        if dom.lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            p.push("domain.lengths must be positive".into());
        }
        let max_index = if p.is_empty() {
            EigenBasis::new(dom.dim, dom.modes, &dom.lengths).map(|b| b.max_index()).ok()
        } else {
            None
        };

        self.noise.problems(&mut p);
        if self.noise.kind == NoiseKindName::White && dom.dim != 1 {
            p.push("noise.kind = \"white\" requires domain.dim = 1".into());
        }
        if let Some(m) = max_index {
            self.initial.problems(m, &mut p);
        }

        let s = &self.scheme;
        if s.steps == 0 {
            p.push("scheme.steps must be at least 1".into());
        }
        if s.modes == 0 {
            p.push("scheme.modes must be at least 1".into());
        }
        if let Some(m) = max_index.filter(|m| s.modes > *m) {
            p.push(format!("scheme.modes = {} exceeds the largest mode index {m}", s.modes));
        }
        if let Some(t) = s.t_final.filter(|t| !(t.is_finite() && *t > 0.0)) {
            p.push(format!("scheme.t_final = {t} must be positive"));
        }
        if !(s.tol.is_finite() && s.tol > 0.0) {
            p.push(format!("scheme.tol = {} must be positive", s.tol));
        }
        if s.max_iters == 0 {
            p.push("scheme.max_iters must be at least 1".into());
        }

        let st = &self.study;
        let converge = matches!(
            self.command,
            Command::ConvergeTime | Command::ConvergeSpace | Command::ConvergeGalerkin
        );
        if st.n_paths == 0 || ((converge || self.command == Command::Regularity) && st.n_paths < 2) {
            p.push(format!("study.n_paths = {} is too small for {}", st.n_paths, self.command.as_str()));
        }
        if !(st.p >= 1.0) {
            p.push(format!("study.p = {} must be at least 1", st.p));
        }
        if st.p_list.is_empty() || st.p_list.iter().any(|q| !(*q > 0.0)) {
            p.push("study.p_list must hold positive orders".into());
        }
        if st.gamma.is_some_and(|g| !(g > 0.0)) {
            p.push("study.gamma must be positive".into());
        }
        if converge {
            if st.levels.len() < 3 {
                p.push(format!("study.levels has {} entries, a fit needs at least 3", st.levels.len()));
            }
            if st.levels.contains(&0) {
                p.push("study.levels must be positive".into());
            }
        }
        if let Some(b) = &st.betas {
            if b.is_empty() || b.iter().any(|x| !(*x >= 0.0)) {
                p.push("study.betas must be nonnegative".into());
            }
        }

        let v = &self.verify;
        if v.step_sizes.is_empty() || v.step_sizes.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            p.push("verify.step_sizes must be positive".into());
        }
        if v.mus.iter().any(|m| !(0.0..=2.0).contains(m)) {
            p.push("verify.mus must lie in [0, 2]".into());
        }
        if v.m_max == 0 {
            p.push("verify.m_max must be at least 1".into());
        }
        if self.output.dir.is_empty() {
            p.push("output.dir must not be empty".into());
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(p))
        }
    }
}
