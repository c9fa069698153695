use serde::{Deserialize, Serialize};

use super::calibration::{apply_platt, Calibration};
use super::linear::LinearModel;
use crate::error::{Error, Result};

/// A trained linear scorer as stored on disk, optionally calibrated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoredModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// `None` until calibrated; probabilities then fall back to `σ(score)`.
    pub calibration: Option<Calibration>,
    pub feature_schema: Vec<String>,
}

impl ScoredModel {
    pub fn new(model: LinearModel, feature_schema: Vec<String>) -> Result<Self> {
        if model.weights.len() != feature_schema.len() {
            return Err(Error::Schema(format!(
                "{} weights for {} named features",
                model.weights.len(),
                feature_schema.len()
            )));
        }
        Ok(Self {
            weights: model.weights,
            bias: model.bias,
            calibration: None,
            feature_schema,
        })
    }

    pub fn linear(&self) -> LinearModel {
        LinearModel {
            weights: self.weights.clone(),
            bias: self.bias,
        }
    }

    pub fn score(&self, features: &[f64]) -> f64 {
        self.weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    pub fn probability(&self, features: &[f64]) -> f64 {
        let cal = self.calibration.unwrap_or(Calibration::identity());
        apply_platt(&cal, self.score(features))
    }

    pub fn with_calibration(mut self, calibration: Calibration) -> Self {
        self.calibration = Some(calibration);
        self
    }

    pub fn check_schema(&self, expected: &[String]) -> Result<()> {
        if self.feature_schema != expected {
            return Err(Error::Schema(format!(
                "model features {:?} do not match {:?}",
                self.feature_schema, expected
            )));
        }
        if self.weights.len() != expected.len() {
            return Err(Error::Schema(format!(
                "{} weights for {} features",
                self.weights.len(),
                expected.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_layout_and_schema_check() {
        let model = ScoredModel::new(
            LinearModel {
                weights: vec![0.5, -1.0],
                bias: 0.1,
            },
            vec!["x0".into(), "x1".into()],
        )
        .unwrap()
        .with_calibration(Calibration { a: -2.0, b: 0.5 });
        let json = serde_json::to_value(&model).unwrap();
        assert_eq!(json["calibration"]["A"], -2.0);
        assert_eq!(json["feature_schema"][1], "x1");
        let back: ScoredModel = serde_json::from_value(json).unwrap();
        assert_eq!(back, model);
        assert!(model.check_schema(&["x0".into(), "x1".into()]).is_ok());
        assert!(matches!(model.check_schema(&["x0".into()]), Err(Error::Schema(_))));
        assert!(ScoredModel::new(LinearModel::zeros(3), vec!["a".into()]).is_err());
    }

    #[test]
    fn uncalibrated_probability_is_sigmoid() {
        let model = ScoredModel::new(LinearModel::zeros(1), vec!["x".into()]).unwrap();
        assert_eq!(model.probability(&[3.0]), 0.5);
    }
}
