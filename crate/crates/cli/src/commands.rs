use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use session_planner::evaluation::{
    characteristic_stats, run_noise_sweep, run_offline_comparison, CharacteristicStats, EvalMode, EvalOptions,
    Scenario,
};
use session_planner::mdp::PlanRecord;
use session_planner::models::{auc, bag_level_auc, ScoredModel, SessionLog};
use session_planner::pipeline::{calibrate_models, split_sessions, train_models, TrainedModels};
use session_planner::planner::plan;
use session_planner::simulator::{
    generate_ground_truth, generate_sessions, generate_users, produce_mdp, GroundTruth, ScoreSource, UserContext,
};
use session_planner::MdpModel;

use crate::artifact::{read_artifact, read_sessions, Workspace};
use crate::config::{Probabilities, QuitModel};
use crate::error::{CliError, CliResult};

pub const GROUND_TRUTH: &str = "ground_truth.json";
pub const USERS: &str = "users.json";
pub const SESSIONS: &str = "sessions.jsonl";
pub const HOLDOUT: &str = "holdout.jsonl";
pub const TRAIN_REPORT: &str = "train_report.json";
pub const CALIBRATION_REPORT: &str = "calibration_report.json";
pub const EVAL_JSON: &str = "eval_report.json";
pub const EVAL_TABLE: &str = "eval_report.txt";
pub const NOISE_JSON: &str = "noise_curves.json";
pub const NOISE_CSV: &str = "noise_curves.csv";
pub const STATS: &str = "stats.json";
pub const PLAN: &str = "plan.json";
pub const PLANS: &str = "plans.json";

const MODEL_NAMES: [&str; 3] = ["click", "quit_mil", "quit_no_mil"];

fn model_file(name: &str, calibrated: bool) -> String {
    if calibrated {
        format!("models/{name}.calibrated.json")
    } else {
        format!("models/{name}.json")
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LogSummary {
    pub sessions: usize,
    pub bags: usize,
    pub instances: usize,
    pub negative_bag_fraction: f64,
    pub mean_bags_per_session: f64,
    pub click_rate: f64,
}

impl LogSummary {
    pub fn of(sessions: &[SessionLog]) -> Self {
        let bags: usize = sessions.iter().map(|s| s.bags.len()).sum();
        let negatives = sessions
            .iter()
            .flat_map(|s| &s.bags)
            .filter(|b| !b.label.is_positive())
            .count();
        let instances: usize = sessions.iter().flat_map(|s| &s.bags).map(|b| b.instances.len()).sum();
        let clicks = sessions.iter().flat_map(|s| s.instances()).filter(|i| i.clicked()).count();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self {
            sessions: sessions.len(),
            bags,
            instances,
            negative_bag_fraction: ratio(negatives, bags),
            mean_bags_per_session: ratio(bags, sessions.len()),
            click_rate: ratio(clicks, instances),
        }
    }
}

pub fn simulate(ws: &mut Workspace) -> CliResult<LogSummary> {
    let sim = &ws.config.sim;
    let gt = generate_ground_truth(sim)?;
    let users = generate_users(&gt, sim)?;
    let sessions = generate_sessions(&gt, sim)?;
    ws.write_json(GROUND_TRUTH, "ground_truth", &gt)?;
    ws.write_json(USERS, "users", &users)?;
    ws.write_sessions(SESSIONS, &sessions)?;
    Ok(LogSummary::of(&sessions))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub train: LogSummary,
    pub holdout: LogSummary,
    pub mil_outer_iterations: usize,
    pub mil_converged: bool,
    /// Bag-level AUC on the holdout pages.
    pub mil_bag_auc: f64,
    pub no_mil_bag_auc: f64,
    /// Instance-level click AUC on the holdout.
    pub click_auc: f64,
}

pub fn train(ws: &mut Workspace, logs: Option<&Path>) -> CliResult<TrainReport> {
    let logs = logs.map_or_else(|| ws.path(SESSIONS), Path::to_path_buf);
    let sessions = read_sessions(&logs)?;
    let (train, holdout) = split_sessions(&sessions, ws.config.train.holdout_fraction, ws.config.seed);
    let models = train_models(&train, &ws.config.train)?;

    let bags = || holdout.iter().flat_map(|s| &s.bags);
    let (scores, clicks): (Vec<f64>, Vec<bool>) = holdout
        .iter()
        .flat_map(SessionLog::instances)
        .map(|i| (models.click.score(&i.features), i.clicked()))
        .unzip();
    let report = TrainReport {
        train: LogSummary::of(&train),
        holdout: LogSummary::of(&holdout),
        mil_outer_iterations: models.mil_outer_iterations,
        mil_converged: models.mil_converged,
        mil_bag_auc: bag_level_auc(&models.quit.linear(), bags())?,
        no_mil_bag_auc: bag_level_auc(&models.quit_no_mil.linear(), bags())?,
        click_auc: auc(&scores, &clicks)?,
    };
    ws.write_sessions(HOLDOUT, &holdout)?;
    write_models(ws, &models, false)?;
    ws.write_json(TRAIN_REPORT, "train_report", &report)?;
    Ok(report)
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainingMeta {
    mil_outer_iterations: usize,
    mil_converged: bool,
}

fn write_models(ws: &mut Workspace, models: &TrainedModels, calibrated: bool) -> CliResult<()> {
    for (name, model) in MODEL_NAMES.iter().zip([&models.click, &models.quit, &models.quit_no_mil]) {
        ws.write_json(&model_file(name, calibrated), "scored_model", model)?;
    }
    Ok(())
}

fn read_models(ws: &Workspace, calibrated: bool) -> CliResult<TrainedModels> {
    let load = |name: &str| read_artifact::<ScoredModel>(&ws.path(&model_file(name, calibrated)), "scored_model");
    let report: TrainingMeta = read_artifact(&ws.path(TRAIN_REPORT), "train_report")?;
    Ok(TrainedModels {
        click: load(MODEL_NAMES[0])?,
        quit: load(MODEL_NAMES[1])?,
        quit_no_mil: load(MODEL_NAMES[2])?,
        mil_outer_iterations: report.mil_outer_iterations,
        mil_converged: report.mil_converged,
    })
}

pub fn calibrate(ws: &mut Workspace, holdout: Option<&Path>) -> CliResult<session_planner::pipeline::CalibrationReport> {
    let holdout_path = holdout.map_or_else(|| ws.path(HOLDOUT), Path::to_path_buf);
    let holdout = read_sessions(&holdout_path)?;
    let models = read_models(ws, false)?;
    let (calibrated, report) = calibrate_models(&models, &holdout, ws.config.train.calibration_bins)?;
    write_models(ws, &calibrated, true)?;
    ws.write_json(CALIBRATION_REPORT, "calibration_report", &report)?;
    Ok(report)
}

/// Inputs for the per-user commands, owned so a [`Scenario`] can borrow them.
struct Loaded {
    gt: GroundTruth,
    users: Vec<UserContext>,
    click: Option<ScoredModel>,
    quit: Option<ScoredModel>,
}

impl Loaded {
    fn read(ws: &Workspace, users: Option<&Path>, probabilities: Probabilities) -> CliResult<Self> {
        let gt: GroundTruth = read_artifact(&ws.path(GROUND_TRUTH), "ground_truth")?;
        let users_path = users.map_or_else(|| ws.path(USERS), Path::to_path_buf);
        let users: Vec<UserContext> = read_artifact(&users_path, "users")?;
        let (click, quit) = match probabilities {
            Probabilities::Truth => (None, None),
            Probabilities::Trained => {
                let models = read_models(ws, true)?;
                let quit = match ws.config.source.quit_model {
                    QuitModel::Mil => models.quit,
                    QuitModel::NoMil => models.quit_no_mil,
                };
                (Some(models.click), Some(quit))
            }
        };
        Ok(Self { gt, users, click, quit })
    }

    fn scenario(&self) -> Scenario<'_> {
        let source = match (&self.click, &self.quit) {
            (Some(click), Some(quit)) => ScoreSource::Trained { click, quit },
            _ => ScoreSource::Truth(&self.gt),
        };
        Scenario {
            catalog: &self.gt.catalog,
            users: &self.users,
            source,
            truth: Some(&self.gt),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UserPlan {
    pub user_id: String,
    #[serde(flatten)]
    pub plan: PlanRecord,
}

pub enum PlanOutput {
    Single(PlanRecord),
    PerUser(usize),
}

pub fn plan_cmd(ws: &mut Workspace, mdp: Option<&Path>, users: Option<&Path>) -> CliResult<PlanOutput> {
    let section = ws.config.plan.clone();
    let planner = section.planner();
    let beam = (section.strategy == session_planner::Strategy::Beam).then_some(section.beam_size);
    let name = if section.dedup {
        format!("{}-dedup", section.strategy)
    } else {
        section.strategy.to_string()
    };
    if let Some(path) = mdp {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let model: MdpModel =
            serde_json::from_slice(&bytes).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
        let p = plan(&model, section.strategy, &planner)?;
        let record = p.to_record(&model, &name, beam);
        ws.write_json(PLAN, "plan", &record)?;
        return Ok(PlanOutput::Single(record));
    }
    let loaded = Loaded::read(ws, users, ws.config.source.probabilities)?;
    let scenario = loaded.scenario();
    let horizon = ws.config.sim.horizon;
    let plans = scenario
        .users
        .iter()
        .map(|user| {
            let model = produce_mdp(scenario.catalog, user, scenario.source, horizon)?;
            let p = plan(&model, section.strategy, &planner)?;
            Ok(UserPlan {
                user_id: user.user_id.clone(),
                plan: p.to_record(&model, &name, beam),
            })
        })
        .collect::<Result<Vec<_>, session_planner::Error>>()?;
    ws.write_json(PLANS, "plans", &plans)?;
    Ok(PlanOutput::PerUser(plans.len()))
}

pub fn evaluate(ws: &mut Workspace, users: Option<&Path>) -> CliResult<session_planner::evaluation::EvalReport> {
    let loaded = Loaded::read(ws, users, ws.config.source.probabilities)?;
    let scenario = loaded.scenario();
    let mut report = run_offline_comparison(&scenario, &ws.config.eval, ws.config.seed)?;
    report.stats = Some(characteristic_stats(&scenario, ws.config.eval.top_l)?);
    report.config = ws.config_snapshot();
    ws.write_json(EVAL_JSON, "eval_report", &report)?;
    ws.write_text(EVAL_TABLE, &report.to_table())?;
    Ok(report)
}

/// Noise sweeps plan on perturbed true models and score on the clean ones.
pub fn noise_sweep(ws: &mut Workspace, users: Option<&Path>) -> CliResult<session_planner::evaluation::NoiseCurves> {
    let loaded = Loaded::read(ws, users, Probabilities::Truth)?;
    let options = EvalOptions {
        mode: EvalMode::GroundTruth,
        ..ws.config.eval.clone()
    };
    let curves = run_noise_sweep(&loaded.scenario(), &options, ws.config.seed)?;
    ws.write_json(NOISE_JSON, "noise_curves", &curves)?;
    ws.write_text(NOISE_CSV, &curves.to_csv())?;
    Ok(curves)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatsReport {
    pub probabilities: Probabilities,
    pub characteristics: CharacteristicStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log: Option<LogSummary>,
}

pub fn stats(ws: &mut Workspace, users: Option<&Path>, logs: Option<&Path>) -> CliResult<StatsReport> {
    let probabilities = ws.config.source.probabilities;
    let loaded = Loaded::read(ws, users, probabilities)?;
    let characteristics = characteristic_stats(&loaded.scenario(), ws.config.eval.top_l)?;
    let log_path: PathBuf = logs.map_or_else(|| ws.path(SESSIONS), Path::to_path_buf);
    let log = match logs {
        Some(p) => Some(LogSummary::of(&read_sessions(p)?)),
        None if log_path.exists() => Some(LogSummary::of(&read_sessions(&log_path)?)),
        None => None,
    };
    let report = StatsReport {
        probabilities,
        characteristics,
        log,
    };
    ws.write_json(STATS, "stats", &report)?;
    Ok(report)
}
