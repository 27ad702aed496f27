//! `contextlab` batch front-end.

mod config;
mod recipes;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use contextlab::catalog::{load_set, load_state, SET_NAMES, STATE_NAMES};
use contextlab::hv::registry::MODEL_IDS;
use serde_json::Value;

use config::{CliError, ExperimentConfig, NoiseSpec};
use recipes::RECIPES;

#[derive(Parser)]
#[command(name = "contextlab", version, about = "Sequential-measurement contextuality experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and emit its JSON report (and CSV where available).
    Run(RunArgs),
    /// List registered experiments with their formulas.
    List,
    /// Print a catalog set or state as JSON.
    Inspect { kind: InspectKind, name: Option<String> },
}

#[derive(Clone, Copy, ValueEnum)]
enum InspectKind {
    Set,
    State,
    Model,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    state: Option<String>,
    #[arg(long)]
    set: Option<String>,
    /// Hidden-variable model id.
    #[arg(long)]
    model: Option<String>,
    /// JSON parameter block for `--model`.
    #[arg(long)]
    model_params: Option<String>,
    /// `default`, `ideal`, or a path to a JSON noise config.
    #[arg(long)]
    noise: Option<String>,
    /// Monte Carlo trials per sequence; without it exact results are used where available.
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for `<experiment>.json` and `<experiment>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn to_config(&self) -> Result<ExperimentConfig, CliError> {
        let base = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        let model_params = match &self.model_params {
            Some(text) => {
                Some(serde_json::from_str::<Value>(text).map_err(|e| CliError::Config(format!("model parameters: {e}")))?)
            }
            None => None,
        };
        Ok(base.merged(ExperimentConfig {
            experiment: self.experiment.clone(),
            set: self.set.clone(),
            state: self.state.clone(),
            model: self.model.clone(),
            model_params,
            noise: self.noise.clone().map(NoiseSpec::Named),
            n_trials: self.trials,
            seed: self.seed,
            out: self.out.clone(),
        }))
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("CONTEXTLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("CONTEXTLAB_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Runtime(e.to_string()))
}

fn pretty(v: &Value) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn run(args: &RunArgs) -> Result<(), CliError> {
    let resolved = args.to_config()?.resolve()?;
    init_threads()?;
    let (report, csv) = recipes::run(&resolved)?;
    let text = pretty(&report)?;
    match &resolved.out {
        None => {
            print!("{text}");
        }
        Some(dir) => {
            let io = |e: std::io::Error| CliError::Runtime(format!("{}: {e}", dir.display()));
            std::fs::create_dir_all(dir).map_err(io)?;
            let json_path = dir.join(format!("{}.json", resolved.recipe.id));
            std::fs::write(&json_path, text).map_err(io)?;
            println!("{}", json_path.display());
            if let Some(csv) = csv {
                let csv_path = dir.join(format!("{}.csv", resolved.recipe.id));
                std::fs::write(&csv_path, csv).map_err(io)?;
                println!("{}", csv_path.display());
            }
        }
    }
    Ok(())
}

fn list() -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    for r in &RECIPES {
        match writeln!(out, "{:<16} {}\n{:<16} {}", r.id, r.summary, "", r.anchor) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(()),
            r => r.map_err(|e| CliError::Runtime(e.to_string()))?,
        }
    }
    Ok(())
}

fn inspect(kind: InspectKind, name: Option<&str>) -> Result<(), CliError> {
    let names: &[&str] = match kind {
        InspectKind::Set => &SET_NAMES,
        InspectKind::State => &STATE_NAMES,
        InspectKind::Model => &MODEL_IDS,
    };
    let Some(name) = name else {
        println!("{}", names.join("\n"));
        return Ok(());
    };
    let doc = match kind {
        InspectKind::Set => serde_json::to_value(load_set(name)?),
        InspectKind::State => serde_json::to_value(load_state(name)?),
        InspectKind::Model => {
            let sys = contextlab::hv::registry::build_model(name, &Value::Null)?;
            serde_json::to_value(sys.distribution())
        }
    }
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    print!("{}", pretty(&doc)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.command {
        Command::Run(args) => run(args),
        Command::List => list(),
        Command::Inspect { kind, name } => inspect(*kind, name.as_deref()),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("contextlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
