//! Batch command surface for the session planner:
//! `simulate → train → calibrate → plan → evaluate → noise-sweep → stats`,
//! driven by one TOML config and one root seed.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use session_planner::Strategy;

use crate::artifact::Workspace;
use crate::commands::PlanOutput;
use crate::config::{Overrides, RunConfig};
pub use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "splan", version, about = "Plan browse sessions that keep users engaged")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override any config key, e.g. `--set sim.rho=0.5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_strategy)]
    pub strategy: Option<Strategy>,
    #[arg(long, global = true, value_name = "S")]
    pub beam_size: Option<usize>,
    /// Plan without repeating items.
    #[arg(long, global = true)]
    pub dedup: bool,
    #[arg(long, global = true, value_name = "T")]
    pub horizon: Option<usize>,
    #[arg(long, global = true, value_name = "M")]
    pub noise_max: Option<u32>,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: session_planner::Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate ground truth, users and session logs.
    Simulate,
    /// Fit the click model and both quit models.
    Train {
        #[arg(long, value_name = "PATH")]
        logs: Option<PathBuf>,
    },
    /// Platt-calibrate the trained models on held-out sessions.
    Calibrate {
        #[arg(long, value_name = "PATH")]
        holdout: Option<PathBuf>,
    },
    /// Plan one MDP file, or every user.
    Plan {
        /// A model file with `horizon`, `item_ids`, `reward` and `quit`.
        #[arg(long, value_name = "PATH")]
        mdp: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        users: Option<PathBuf>,
    },
    /// Compare strategies across users.
    Evaluate {
        #[arg(long, value_name = "PATH")]
        users: Option<PathBuf>,
    },
    /// Plan on perturbed models, score on clean ones.
    NoiseSweep {
        #[arg(long, value_name = "PATH")]
        users: Option<PathBuf>,
    },
    /// Discrimination and weak-relatedness statistics.
    Stats {
        #[arg(long, value_name = "PATH")]
        users: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        logs: Option<PathBuf>,
    },
    /// simulate, train, calibrate, evaluate, noise-sweep and stats in order.
    Run,
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            set: self.set.clone(),
            seed: self.seed,
            out: self.out.clone(),
            strategy: self.strategy,
            beam_size: self.beam_size,
            dedup: self.dedup,
            horizon: self.horizon,
            noise_max: self.noise_max,
        }
    }
}

fn out(ws: &Workspace, name: &str) -> String {
    ws.path(name).display().to_string()
}

/// Runs one command; returns the lines to print on success.
pub fn execute(cli: &Cli) -> CliResult<Vec<String>> {
    let config = RunConfig::load(cli.global.config.as_deref(), &cli.global.overrides())?;
    let mut ws = Workspace::open(config)?;
    ws.write_resolved_config()?;
    let mut lines = Vec::new();
    match &cli.command {
        Command::Simulate => {
            let s = commands::simulate(&mut ws)?;
            lines.push(format!("simulated {} sessions ({} pages) -> {}", s.sessions, s.bags, ws.dir.display()));
        }
        Command::Train { logs } => {
            let r = commands::train(&mut ws, logs.as_deref())?;
            lines.push(format!(
                "trained on {} sessions; MIL bag AUC {:.4} vs {:.4} without MIL ({} rounds) -> {}",
                r.train.sessions,
                r.mil_bag_auc,
                r.no_mil_bag_auc,
                r.mil_outer_iterations,
                out(&ws, commands::TRAIN_REPORT)
            ));
        }
        Command::Calibrate { holdout } => {
            let r = commands::calibrate(&mut ws, holdout.as_deref())?;
            lines.push(format!(
                "click RMSE {:.4} -> {:.4}, quit RMSE {:.4} -> {:.4} -> {}",
                r.click.rmse_before,
                r.click.rmse_after,
                r.quit.rmse_before,
                r.quit.rmse_after,
                out(&ws, commands::CALIBRATION_REPORT)
            ));
        }
        Command::Plan { mdp, users } => match commands::plan_cmd(&mut ws, mdp.as_deref(), users.as_deref())? {
            PlanOutput::Single(record) => {
                lines.push(serde_json::to_string(&record).map_err(|e| CliError::Other(e.to_string()))?)
            }
            PlanOutput::PerUser(n) => lines.push(format!("planned {n} users -> {}", out(&ws, commands::PLANS))),
        },
        Command::Evaluate { users } => {
            let r = commands::evaluate(&mut ws, users.as_deref())?;
            lines.push(r.to_table().trim_end().to_string());
            lines.push(format!("-> {}", out(&ws, commands::EVAL_JSON)));
        }
        Command::NoiseSweep { users } => {
            let c = commands::noise_sweep(&mut ws, users.as_deref())?;
            lines.push(format!("{} points -> {}", c.points.len(), out(&ws, commands::NOISE_CSV)));
        }
        Command::Stats { users, logs } => {
            let s = commands::stats(&mut ws, users.as_deref(), logs.as_deref())?;
            let d = s.characteristics.discrimination;
            let r = s.characteristics.relatedness;
            lines.push(format!(
                "quit std {:.4} mean {:.4} std/mean {:.4}; top-{} jaccard {:.4} ndcg {:.4}",
                d.std, d.mean, d.std_over_mean, r.top_l, r.jaccard, r.ndcg
            ));
        }
        Command::Run => {
            commands::simulate(&mut ws)?;
            commands::train(&mut ws, None)?;
            commands::calibrate(&mut ws, None)?;
            let r = commands::evaluate(&mut ws, None)?;
            commands::noise_sweep(&mut ws, None)?;
            commands::stats(&mut ws, None, None)?;
            lines.push(r.to_table().trim_end().to_string());
            lines.push(format!("-> {}", ws.dir.display()));
        }
    }
    ws.finish()?;
    Ok(lines)
}
