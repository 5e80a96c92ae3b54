use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use chc_cli::config::{Command, ExperimentConfig, Overrides, RawConfig};
use chc_cli::run::write_error;
use chc_cli::{run, CliError};

/// Strong-convergence and regularity experiments for the stochastic Cahn-Hilliard-Cook
/// equation.
///
/// Every flag can also be set through the environment variable named in its help.
#[derive(Debug, Parser)]
#[command(name = "chclab", version, about)]
struct Cli {
    /// Experiment to run; may instead be given as `command` in the config.
    #[arg(value_enum)]
    command: Option<Command>,

    /// TOML experiment config. Missing sections take the command defaults.
    #[arg(long, env = "CHCLAB_CONFIG")]
    config: Option<PathBuf>,

    /// Base seed; path `i` uses `seed ^ i`.
    #[arg(long, env = "CHCLAB_SEED")]
    seed: Option<u64>,

    /// Worker threads (default: all available cores). Results do not depend on it.
    #[arg(long, env = "CHCLAB_WORKERS")]
    workers: Option<usize>,

    /// Output directory.
    #[arg(long, env = "CHCLAB_OUT")]
    out: Option<String>,

    /// Override `study.n_paths`.
    #[arg(long, env = "CHCLAB_PATHS")]
    paths: Option<usize>,

    /// Print the resolved config and exit without running.
    #[arg(long)]
    dry_run: bool,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let raw = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
            toml::from_str::<RawConfig>(&text).map_err(|e| CliError::Config(vec![e.to_string()]))?
        }
        None => RawConfig::default(),
    };
    let over = Overrides {
        command: cli.command,
        seed: cli.seed,
        paths: cli.paths,
        out: cli.out.clone(),
    };
    ExperimentConfig::resolve(raw, &over)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();

    let workers = cli.workers.unwrap_or_else(rayon::current_num_threads);
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }

    let mut dir = cli.out.clone().unwrap_or_else(|| "out".into());
    let result = load(&cli).and_then(|cfg| {
        dir = cfg.output.dir.clone();
        if cli.dry_run {
            print!("{}", cfg.to_toml());
            return Ok(None);
        }
        run(&cfg, workers).map(Some)
    });
    match result {
        Ok(Some(summary)) => {
            println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(err) => {
            if let Err(e) = write_error(std::path::Path::new(&dir), &err) {
                log::warn!("could not write error.json: {e}");
            }
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
