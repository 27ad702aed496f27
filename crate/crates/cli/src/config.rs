//! Experiment configuration: flags merged over an optional JSON file.

use std::fmt;
use std::path::PathBuf;

use contextlab::noise::NoiseConfig;
use contextlab::system::Estimator;
use contextlab::Error;
use serde::Deserialize;
use serde_json::Value;

use crate::recipes::{find_recipe, Family, Recipe};

/// Trials used for sampled systems when `--trials` is absent.
pub const DEFAULT_TRIALS: u64 = 100_000;

#[derive(Debug)]
pub enum CliError {
    /// Bad names, parameters or files. Exit code 2.
    Config(String),
    /// Failures while running a valid config. Exit code 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::UnknownSetName(_)
            | Error::UnknownStateName(_)
            | Error::UnknownLabel(_)
            | Error::UnsupportedLabel { .. }
            | Error::UnknownModel(_)
            | Error::InvalidParameter(_)
            | Error::DimensionMismatch { .. }
            | Error::UnsupportedDimension(_)
            | Error::EmptyPreparationList
            | Error::CounterfactualUnavailable(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// `"default"`, `"ideal"`, a path to a JSON file, or an inline object.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    Named(String),
    Inline(NoiseConfig),
}

impl NoiseSpec {
    pub fn resolve(&self) -> Result<NoiseConfig, CliError> {
        match self {
            NoiseSpec::Inline(cfg) => {
                cfg.validate()?;
                Ok(*cfg)
            }
            NoiseSpec::Named(name) => match name.as_str() {
                "default" => Ok(NoiseConfig::default()),
                "ideal" => Ok(NoiseConfig::ideal()),
                path => {
                    let text =
                        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("noise file `{path}`: {e}")))?;
                    Ok(NoiseConfig::from_json(&text)?)
                }
            },
        }
    }
}

/// Everything needed to run one experiment. Every field may come from the
/// config file or from a flag; flags win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<String>,
    pub set: Option<String>,
    pub state: Option<String>,
    pub model: Option<String>,
    pub model_params: Option<Value>,
    pub noise: Option<NoiseSpec>,
    pub n_trials: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("config `{}`: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config `{}`: {e}", path.display())))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merged(self, over: ExperimentConfig) -> Self {
        Self {
            experiment: over.experiment.or(self.experiment),
            set: over.set.or(self.set),
            state: over.state.or(self.state),
            model: over.model.or(self.model),
            model_params: over.model_params.or(self.model_params),
            noise: over.noise.or(self.noise),
            n_trials: over.n_trials.or(self.n_trials),
            seed: over.seed.or(self.seed),
            out: over.out.or(self.out),
        }
    }

    pub fn resolve(self) -> Result<Resolved, CliError> {
        let id = self.experiment.ok_or_else(|| CliError::Config("no experiment given".into()))?;
        let recipe = find_recipe(&id).ok_or_else(|| CliError::Config(format!("unknown experiment `{id}`")))?;
        let seed = self.seed.ok_or_else(|| CliError::Config("a seed is required".into()))?;
        if self.n_trials == Some(0) {
            return Err(CliError::Config("trials must be positive".into()));
        }
        let estimator = match self.n_trials {
            Some(n_trials) => Estimator::MonteCarlo { n_trials, seed },
            None => Estimator::Auto { n_trials: DEFAULT_TRIALS, seed },
        };
        let noise = self.noise.as_ref().map(NoiseSpec::resolve).transpose()?;
        if self.model_params.is_some() && self.model.is_none() {
            return Err(CliError::Config("model parameters given without a model".into()));
        }
        if self.model.is_some() && noise.is_some() {
            return Err(CliError::Config("a hidden-variable model cannot be combined with a noise model".into()));
        }
        let system = if recipe.family == Family::Ion {
            if self.set.is_some() || self.state.is_some() || self.model.is_some() {
                return Err(CliError::Config(format!(
                    "`{}` uses fixed preparations; drop --set, --state and --model",
                    recipe.id
                )));
            }
            SystemSpec::Ion { noise: noise.unwrap_or_default() }
        } else {
            let (default_set, default_state) = recipe.family.defaults();
            let set = self.set.unwrap_or_else(|| default_set.to_string());
            let state = self.state.unwrap_or_else(|| default_state.to_string());
            match (self.model, noise) {
                (Some(id), _) => SystemSpec::Model { id, params: self.model_params, set, state },
                (None, Some(noise)) => SystemSpec::Noisy { set, state, noise },
                (None, None) => SystemSpec::Quantum { set, state },
            }
        };
        Ok(Resolved { recipe, system, estimator, seed, out: self.out })
    }
}

#[derive(Debug, Clone)]
pub enum SystemSpec {
    Quantum {
        set: String,
        state: String,
    },
    Noisy {
        set: String,
        state: String,
        noise: NoiseConfig,
    },
    Model {
        id: String,
        params: Option<Value>,
        set: String,
        state: String,
    },
    /// The ion recipes build their own systems from a noise model.
    Ion {
        noise: NoiseConfig,
    },
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub recipe: &'static Recipe,
    pub system: SystemSpec,
    pub estimator: Estimator,
    pub seed: u64,
    pub out: Option<PathBuf>,
}
