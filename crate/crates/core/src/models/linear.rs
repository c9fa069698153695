//! Linear scorers and their two full-batch trainers.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    #[inline]
    pub fn score(&self, features: &[f64]) -> f64 {
        self.weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticParams {
    /// Initial step; epoch `k` uses `learning_rate / sqrt(k)`.
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 200,
            l2: 1e-4,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HingeParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for HingeParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 200,
            l2: 1e-4,
            seed: 7,
        }
    }
}

/// Objective value at the start of every epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub losses: Vec<f64>,
}

fn check_rows(rows: &[&[f64]], labels: &[bool]) -> Result<usize> {
    if rows.len() != labels.len() {
        return Err(Error::InvalidData(format!(
            "{} rows for {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let dim = rows
        .first()
        .map(|r| r.len())
        .ok_or_else(|| Error::InvalidData("empty training set".into()))?;
    for row in rows {
        if row.len() != dim {
            return Err(Error::InvalidData(format!(
                "row of dimension {} in a {dim}-dimensional dataset",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite feature value".into()));
        }
    }
    Ok(dim)
}

fn require_both_classes(labels: &[bool]) -> Result<()> {
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::DegenerateData(
            "training labels contain a single class".into(),
        ));
    }
    Ok(())
}

fn initial_model(dim: usize, seed: u64) -> LinearModel {
    let mut rng = rng_from(seed);
    let normal = Normal::new(0.0, 0.01).expect("valid sigma");
    LinearModel {
        weights: (0..dim).map(|_| normal.sample(&mut rng)).collect(),
        bias: 0.0,
    }
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// L2-regularized logistic regression by full-batch gradient descent.
/// Accepts single-class data; see [`train_click_model`] for the checked entry point.
pub fn train_logistic(
    rows: &[&[f64]],
    labels: &[bool],
    params: &LogisticParams,
) -> Result<(LinearModel, TrainTrace)> {
    let dim = check_rows(rows, labels)?;
    let n = rows.len() as f64;
    let mut model = initial_model(dim, params.seed);
    let mut trace = TrainTrace::default();
    let mut grad = vec![0.0; dim];
    for epoch in 1..=params.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_bias = 0.0;
        let mut loss = 0.0;
        for (row, &label) in rows.iter().zip(labels) {
            let margin = if label { 1.0 } else { -1.0 } * model.score(row);
            loss += softplus(-margin);
            let coef = -sigmoid(-margin) * if label { 1.0 } else { -1.0 };
            for (g, x) in grad.iter_mut().zip(row.iter()) {
                *g += coef * x;
            }
            grad_bias += coef;
        }
        let reg: f64 = model.weights.iter().map(|w| w * w).sum::<f64>() * params.l2 / 2.0;
        trace.losses.push(loss / n + reg);

        let step = params.learning_rate / (epoch as f64).sqrt();
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= step * (g / n + params.l2 * *w);
        }
        model.bias -= step * grad_bias / n;
    }
    Ok((model, trace))
}

/// Click model: logistic regression on instance click labels.
pub fn train_click_model(
    rows: &[&[f64]],
    labels: &[bool],
    params: &LogisticParams,
) -> Result<(LinearModel, TrainTrace)> {
    check_rows(rows, labels)?;
    require_both_classes(labels)?;
    train_logistic(rows, labels, params)
}

/// Class-balanced linear SVM: minimizes
/// `Σ_i c_i · max(0, 1 − y_i (w·x_i + b)) + l2/2 · ‖w‖²`, where each class
/// carries half the total weight. Full-batch subgradient descent; the
/// iterate with the lowest objective is returned.
pub fn train_hinge(
    rows: &[&[f64]],
    labels: &[bool],
    params: &HingeParams,
) -> Result<(LinearModel, TrainTrace)> {
    let dim = check_rows(rows, labels)?;
    require_both_classes(labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let (c_pos, c_neg) = (0.5 / n_pos, 0.5 / n_neg);

    let mut model = initial_model(dim, params.seed);
    let mut best = (f64::INFINITY, model.clone());
    let mut trace = TrainTrace::default();
    let mut grad = vec![0.0; dim];
    for epoch in 1..=params.epochs + 1 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_bias = 0.0;
        let mut loss = 0.0;
        for (row, &label) in rows.iter().zip(labels) {
            let (y, c) = if label { (1.0, c_pos) } else { (-1.0, c_neg) };
            let slack = 1.0 - y * model.score(row);
            if slack > 0.0 {
                loss += c * slack;
                for (g, x) in grad.iter_mut().zip(row.iter()) {
                    *g -= c * y * x;
                }
                grad_bias -= c * y;
            }
        }
        let objective = loss + params.l2 / 2.0 * model.weights.iter().map(|w| w * w).sum::<f64>();
        trace.losses.push(objective);
        if objective < best.0 {
            best = (objective, model.clone());
        }
        if epoch > params.epochs {
            break;
        }
        let step = params.learning_rate / (epoch as f64).sqrt();
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= step * (g + params.l2 * *w);
        }
        model.bias -= step * grad_bias;
    }
    Ok((best.1, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::metrics::auc;

    fn separable() -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..100 {
            rows.push(vec![-1.0]);
            labels.push(false);
            rows.push(vec![1.0]);
            labels.push(true);
        }
        (rows, labels)
    }

    fn refs(rows: &[Vec<f64>]) -> Vec<&[f64]> {
        rows.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn logistic_separable_case() {
        let (rows, labels) = separable();
        let (model, trace) = train_click_model(&refs(&rows), &labels, &LogisticParams::default()).unwrap();
        assert!(model.weights[0] > 0.0);
        let scores: Vec<f64> = rows.iter().map(|r| model.score(r)).collect();
        assert_eq!(auc(&scores, &labels).unwrap(), 1.0);
        assert!(trace.losses.windows(2).all(|w| w[1] <= w[0] + 1e-6));
    }

    #[test]
    fn logistic_all_negative_collapses_below_half() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64 / 25.0) - 1.0, 0.3]).collect();
        let labels = vec![false; rows.len()];
        let params = LogisticParams {
            l2: 1e-2,
            ..Default::default()
        };
        let (model, _) = train_logistic(&refs(&rows), &labels, &params).unwrap();
        assert!(rows.iter().all(|r| sigmoid(model.score(r)) < 0.5));
        assert!(matches!(
            train_click_model(&refs(&rows), &labels, &params),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn invalid_inputs() {
        let rows = [vec![f64::NAN], vec![1.0]];
        assert!(matches!(
            train_click_model(&refs(&rows), &[true, false], &LogisticParams::default()),
            Err(Error::InvalidData(_))
        ));
        let ragged = [vec![1.0, 2.0], vec![1.0]];
        assert!(train_hinge(&refs(&ragged), &[true, false], &HingeParams::default()).is_err());
    }

    #[test]
    fn hinge_separates_and_is_reproducible() {
        let (rows, labels) = separable();
        let (a, _) = train_hinge(&refs(&rows), &labels, &HingeParams::default()).unwrap();
        let (b, _) = train_hinge(&refs(&rows), &labels, &HingeParams::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.score(&[1.0]) > 0.0 && a.score(&[-1.0]) < 0.0);
    }

    #[test]
    fn stable_softplus() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }
}
