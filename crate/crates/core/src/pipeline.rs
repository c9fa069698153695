//! Log split, model training and calibration as one reproducible step.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::data::feature_dim;
use crate::models::{
    apply_platt, binned_calibration_rmse, fit_platt, fit_platt_bags, train_click_model, train_quit_model_mil,
    train_quit_model_no_mil, Calibration, LogisticParams, MilParams, ScoredModel, SessionLog,
};
use crate::rng::{derive_seed, rng_from, STREAM_SPLIT};
use crate::simulator::feature_schema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub click: LogisticParams,
    pub quit: MilParams,
    /// Share of sessions held out for calibration.
    pub holdout_fraction: f64,
    pub calibration_bins: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            click: LogisticParams::default(),
            quit: MilParams::default(),
            holdout_fraction: 0.2,
            calibration_bins: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config("holdout_fraction must lie in (0, 1)".into()));
        }
        if self.calibration_bins < 2 {
            return Err(Error::Config("calibration_bins must be at least 2".into()));
        }
        if self.click.epochs == 0 || self.quit.epochs == 0 || self.quit.max_outer_iters == 0 {
            return Err(Error::Config("epochs and max_outer_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Shuffles sessions with a seed derived from `root` and holds out the
/// first `fraction` of them. Both parts keep log order.
pub fn split_sessions(sessions: &[SessionLog], fraction: f64, root: u64) -> (Vec<SessionLog>, Vec<SessionLog>) {
    let mut order: Vec<usize> = (0..sessions.len()).collect();
    order.shuffle(&mut rng_from(derive_seed(root, STREAM_SPLIT)));
    let cut = ((sessions.len() as f64) * fraction).round() as usize;
    let mut held: Vec<usize> = order[..cut].to_vec();
    let mut kept: Vec<usize> = order[cut..].to_vec();
    held.sort_unstable();
    kept.sort_unstable();
    let pick = |idx: &[usize]| idx.iter().map(|&i| sessions[i].clone()).collect();
    (pick(&kept), pick(&held))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModels {
    pub click: ScoredModel,
    /// MI-SVM continue scorer.
    pub quit: ScoredModel,
    /// Bag-label baseline continue scorer.
    pub quit_no_mil: ScoredModel,
    pub mil_outer_iterations: usize,
    pub mil_converged: bool,
}

/// Click model on instance clicks, both quit models on page labels.
pub fn train_models(sessions: &[SessionLog], config: &TrainConfig) -> Result<TrainedModels> {
    config.validate()?;
    let instances: Vec<_> = sessions.iter().flat_map(SessionLog::instances).collect();
    let dim = feature_dim(instances.iter().copied())?;
    if dim < 2 {
        return Err(Error::Schema(format!("{dim} features cannot hold the interactive pair")));
    }
    let schema = feature_schema(dim - 2);
    let rows: Vec<&[f64]> = instances.iter().map(|i| i.features.as_slice()).collect();
    let clicks: Vec<bool> = instances.iter().map(|i| i.clicked()).collect();
    let (click, _) = train_click_model(&rows, &clicks, &config.click)?;
    let fit = train_quit_model_mil(sessions, &config.quit)?;
    let baseline = train_quit_model_no_mil(sessions, &config.quit)?;
    Ok(TrainedModels {
        click: ScoredModel::new(click, schema.clone())?,
        quit: ScoredModel::new(fit.model, schema.clone())?,
        quit_no_mil: ScoredModel::new(baseline, schema)?,
        mil_outer_iterations: fit.outer_iterations,
        mil_converged: fit.converged,
    })
}

/// Binned RMSE of one scorer before and after calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub calibration: Calibration,
    pub rmse_before: f64,
    pub rmse_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub bins: usize,
    /// Against instance click labels.
    pub click: CalibrationOutcome,
    /// Against page labels, with page probability `1 − Π(1 − p)`.
    pub quit: CalibrationOutcome,
    pub quit_no_mil: CalibrationOutcome,
}

fn page_probability(cal: &Calibration, scores: &[f64]) -> f64 {
    1.0 - scores.iter().map(|&s| 1.0 - apply_platt(cal, s)).product::<f64>()
}

fn calibrate_quit(model: &ScoredModel, holdout: &[SessionLog], bins: usize) -> Result<CalibrationOutcome> {
    let (scores, labels): (Vec<Vec<f64>>, Vec<bool>) = holdout
        .iter()
        .flat_map(|s| &s.bags)
        .map(|b| {
            let scores = b.instances.iter().map(|i| model.score(&i.features)).collect();
            (scores, b.label.is_positive())
        })
        .unzip();
    let before = model.calibration.unwrap_or(Calibration::identity());
    let calibration = fit_platt_bags(&scores, &labels)?;
    let rmse = |cal: &Calibration| {
        let p: Vec<f64> = scores.iter().map(|s| page_probability(cal, s)).collect();
        binned_calibration_rmse(&p, &labels, bins)
    };
    Ok(CalibrationOutcome {
        calibration,
        rmse_before: rmse(&before)?,
        rmse_after: rmse(&calibration)?,
    })
}

/// Fits Platt parameters on the held-out sessions and attaches them.
pub fn calibrate_models(
    models: &TrainedModels,
    holdout: &[SessionLog],
    bins: usize,
) -> Result<(TrainedModels, CalibrationReport)> {
    let instances: Vec<_> = holdout.iter().flat_map(SessionLog::instances).collect();
    let click_scores: Vec<f64> = instances.iter().map(|i| models.click.score(&i.features)).collect();
    let clicks: Vec<bool> = instances.iter().map(|i| i.clicked()).collect();
    let click_cal = fit_platt(&click_scores, &clicks)?;
    let click_rmse = |cal: &Calibration| {
        let p: Vec<f64> = click_scores.iter().map(|&s| apply_platt(cal, s)).collect();
        binned_calibration_rmse(&p, &clicks, bins)
    };
    let click = CalibrationOutcome {
        calibration: click_cal,
        rmse_before: click_rmse(&models.click.calibration.unwrap_or(Calibration::identity()))?,
        rmse_after: click_rmse(&click_cal)?,
    };
    let quit = calibrate_quit(&models.quit, holdout, bins)?;
    let quit_no_mil = calibrate_quit(&models.quit_no_mil, holdout, bins)?;
    let calibrated = TrainedModels {
        click: models.click.clone().with_calibration(click.calibration),
        quit: models.quit.clone().with_calibration(quit.calibration),
        quit_no_mil: models.quit_no_mil.clone().with_calibration(quit_no_mil.calibration),
        ..models.clone()
    };
    Ok((
        calibrated,
        CalibrationReport {
            bins,
            click,
            quit,
            quit_no_mil,
        },
    ))
}
