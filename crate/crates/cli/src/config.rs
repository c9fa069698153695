//! Run configuration: one TOML file, `--set` overrides of dotted keys, then
//! the dedicated flags. Sub-seeds are always derived from the root `seed`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use session_planner::evaluation::EvalOptions;
use session_planner::pipeline::TrainConfig;
use session_planner::rng::{derive_seed, STREAM_TRAINING};
use session_planner::simulator::SimConfig;
use session_planner::{PlannerConfig, Strategy};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Probabilities {
    /// Calibrated models from `train` + `calibrate`.
    Trained,
    /// The simulator's hidden probabilities.
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuitModel {
    Mil,
    NoMil,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub probabilities: Probabilities,
    pub quit_model: QuitModel,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            probabilities: Probabilities::Trained,
            quit_model: QuitModel::Mil,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanSection {
    pub strategy: Strategy,
    pub beam_size: usize,
    pub dedup: bool,
}

impl Default for PlanSection {
    fn default() -> Self {
        Self {
            strategy: Strategy::Ssp,
            beam_size: 5,
            dedup: false,
        }
    }
}

impl PlanSection {
    pub fn planner(&self) -> PlannerConfig {
        PlannerConfig {
            beam_size: self.beam_size,
            dedup: self.dedup,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub sim: SimConfig,
    pub train: TrainConfig,
    pub plan: PlanSection,
    pub eval: EvalOptions,
    pub source: SourceSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out_dir: PathBuf::from("out"),
            sim: SimConfig::default(),
            train: TrainConfig::default(),
            plan: PlanSection::default(),
            eval: EvalOptions::default(),
            source: SourceSection::default(),
        }
    }
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub set: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub strategy: Option<Strategy>,
    pub beam_size: Option<usize>,
    pub dedup: bool,
    pub horizon: Option<usize>,
    pub noise_max: Option<u32>,
}

fn parse_value(raw: &str) -> toml::Value {
    // bare words such as `ssp` are taken as strings
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {assignment:?}")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed key {key:?}")));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut node = table;
    for part in parents {
        node = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("{key}: {part} is not a section")))?;
    }
    node.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for assignment in &overrides.set {
            set_dotted(&mut table, assignment)?;
        }
        let mut config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;

        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(out) = &overrides.out {
            config.out_dir = out.clone();
        }
        if let Some(strategy) = overrides.strategy {
            config.plan.strategy = strategy;
        }
        if let Some(s) = overrides.beam_size {
            config.plan.beam_size = s;
            config.eval.beam_size = s;
        }
        if overrides.dedup {
            config.plan.dedup = true;
            config.eval.dedup = true;
        }
        if let Some(t) = overrides.horizon {
            config.sim.horizon = t;
            config.eval.horizons = vec![t];
            config.eval.noise_horizon = t;
        }
        if let Some(m) = overrides.noise_max {
            config.eval.noise_max = m;
        }
        config.derive_seeds();
        config.validate()?;
        Ok(config)
    }

    fn derive_seeds(&mut self) {
        self.sim.seed = self.seed;
        let training = derive_seed(self.seed, STREAM_TRAINING);
        self.train.click.seed = training;
        self.train.quit.seed = training;
    }

    pub fn validate(&self) -> CliResult<()> {
        self.sim.validate()?;
        self.train.validate()?;
        self.plan.planner().validate()?;
        self.eval.validate()?;
        Ok(())
    }

    /// SHA-256 of the resolved configuration, output location excluded.
    pub fn hash(&self) -> String {
        let mut content = self.clone();
        content.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&content).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}
