//! Run configuration: the TOML file layout and the flags that override it.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use rtgen_core::interaction::InteractionConfig;
use rtgen_core::search::SearchConfig;

/// Default output root when neither flag, file nor environment names one.
pub const DEFAULT_OUTPUT_ROOT: &str = "rtgen-runs";
/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "RTGEN_OUTPUT_ROOT";
pub const DEFAULT_BIND: &str = "127.0.0.1:8765";
/// Environment variable naming the default server address.
pub const BIND_ENV: &str = "RTGEN_BIND";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Scores come from the built-in length heuristic.
    #[default]
    Headless,
    /// Scores are typed at the terminal.
    InteractiveConsole,
    /// Scores are submitted over HTTP.
    InteractiveServer,
    /// Scores come from a recorded session log.
    Replay,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Headless => "headless",
            Mode::InteractiveConsole => "interactive-console",
            Mode::InteractiveServer => "interactive-server",
            Mode::Replay => "replay",
        }
    }
}

/// Search parameters without the seed, which lives at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub population: usize,
    /// Generations.
    pub budget: u32,
    pub crossover_rate: f64,
    pub tournament_size: usize,
    pub archive_probability: f64,
    /// Interpreter steps per test execution.
    pub step_budget: u64,
    pub max_length: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection::from_config(&SearchConfig::default())
    }
}

impl SearchSection {
    pub fn from_config(c: &SearchConfig) -> Self {
        SearchSection {
            population: c.population_size,
            budget: c.max_generations,
            crossover_rate: c.crossover_rate,
            tournament_size: c.tournament_size,
            archive_probability: c.archive_probability,
            step_budget: c.step_budget,
            max_length: c.max_length,
        }
    }

    pub fn with_seed(&self, seed: u64) -> SearchConfig {
        SearchConfig {
            population_size: self.population,
            max_generations: self.budget,
            crossover_rate: self.crossover_rate,
            tournament_size: self.tournament_size,
            archive_probability: self.archive_probability,
            step_budget: self.step_budget,
            max_length: self.max_length,
            seed,
        }
    }
}

/// Everything a run needs. The file form uses the same field names.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Subject source; the bundled ArrayIntList fixture when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_root: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay_log: Option<PathBuf>,
    pub search: SearchSection,
    pub interaction: InteractionConfig,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config file {path} is malformed: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("no seed given; pass --seed N or set `seed` in the config file")]
    MissingSeed,
    #[error("{0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.seed.ok_or(ConfigError::MissingSeed)
    }

    /// The search configuration, after checking both parameter groups.
    pub fn search_config(&self) -> Result<SearchConfig, ConfigError> {
        let config = self.search.with_seed(self.seed()?);
        config.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.interaction
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(config)
    }

    /// Flag, then file, then `RTGEN_OUTPUT_ROOT`, then `rtgen-runs`.
    pub fn resolved_output_root(&self) -> PathBuf {
        self.output_root
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
    }

    /// Flag, then file, then `RTGEN_BIND`, then `127.0.0.1:8765`.
    pub fn resolved_bind(&self) -> String {
        self.bind
            .clone()
            .or_else(|| std::env::var(BIND_ENV).ok())
            .unwrap_or_else(|| DEFAULT_BIND.to_string())
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SearchFlags {
    /// Population size.
    #[arg(long)]
    pub population: Option<usize>,
    /// Search budget in generations.
    #[arg(long)]
    pub budget: Option<u32>,
    #[arg(long)]
    pub crossover_rate: Option<f64>,
    #[arg(long)]
    pub tournament_size: Option<usize>,
    /// Chance of breeding from an archived test.
    #[arg(long)]
    pub archive_probability: Option<f64>,
    /// Interpreter steps allowed per test execution.
    #[arg(long)]
    pub step_budget: Option<u64>,
    /// Longest test, in statements.
    #[arg(long)]
    pub max_length: Option<usize>,
}

/// The interaction parameters, named after their documented names.
#[derive(Debug, Clone, Default, Args)]
pub struct InteractionFlags {
    /// Generations between interaction moments [default: budget / 5].
    #[arg(long)]
    pub revise_frequency: Option<u32>,
    /// Single interactions allowed per run; 0 disables interaction.
    #[arg(long)]
    pub max_times: Option<u32>,
    #[arg(long)]
    pub revise_after_percentage_coverage: Option<f64>,
    #[arg(long)]
    pub max_targets_interaction_moment: Option<u32>,
    #[arg(long)]
    pub percentage_to_revise: Option<f64>,
    #[arg(long)]
    pub max_readability_score: Option<u32>,
    #[arg(long)]
    pub readability_threshold: Option<u32>,
    #[arg(long)]
    pub p_preference_selection: Option<f64>,
    #[arg(long)]
    pub min_generation_for_interaction: Option<u32>,
    /// Ask again about tests that were already scored.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub revisit_candidates: Option<bool>,
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl SearchFlags {
    pub fn apply(&self, s: &mut SearchSection) {
        set(&mut s.population, self.population);
        set(&mut s.budget, self.budget);
        set(&mut s.crossover_rate, self.crossover_rate);
        set(&mut s.tournament_size, self.tournament_size);
        set(&mut s.archive_probability, self.archive_probability);
        set(&mut s.step_budget, self.step_budget);
        set(&mut s.max_length, self.max_length);
    }
}

impl InteractionFlags {
    pub fn apply(&self, c: &mut InteractionConfig) {
        if self.revise_frequency.is_some() {
            c.revise_frequency = self.revise_frequency;
        }
        set(&mut c.max_times, self.max_times);
        set(&mut c.revise_after_percentage_coverage, self.revise_after_percentage_coverage);
        set(&mut c.max_targets_interaction_moment, self.max_targets_interaction_moment);
        set(&mut c.percentage_to_revise, self.percentage_to_revise);
        set(&mut c.max_readability_score, self.max_readability_score);
        set(&mut c.readability_threshold, self.readability_threshold);
        set(&mut c.p_preference_selection, self.p_preference_selection);
        set(&mut c.min_generation_for_interaction, self.min_generation_for_interaction);
        set(&mut c.revisit_candidates, self.revisit_candidates);
    }
}
