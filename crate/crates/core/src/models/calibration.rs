//! Platt scaling: `P(y = 1 | f) = 1 / (1 + exp(A·f + B))`.
//!
//! With this sign convention a score that grows with the positive class
//! fits a negative `A`. The raw logistic squash `σ(f)` is the special case
//! `A = −1, B = 0`, which is what an uncalibrated model reports.

use serde::{Deserialize, Serialize};

use super::linear::{sigmoid, softplus};
use crate::error::{Error, Result};

pub const PROBABILITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
}

impl Calibration {
    /// Plain logistic squash of the raw score.
    pub const fn identity() -> Self {
        Self { a: -1.0, b: 0.0 }
    }
}

pub fn apply_platt(cal: &Calibration, score: f64) -> f64 {
    sigmoid(-(cal.a * score + cal.b)).clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
}

fn check_scores(scores: &[f64], n_labels: usize) -> Result<()> {
    if scores.len() != n_labels {
        return Err(Error::InvalidData(format!(
            "{} scores for {n_labels} labels",
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidData("non-finite score".into()));
    }
    Ok(())
}

/// Platt's smoothed targets `(n₊+1)/(n₊+2)` and `1/(n₋+2)`.
fn smoothed_targets(labels: &[bool]) -> Result<(Vec<f64>, f64, f64)> {
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(Error::DegenerateData(
            "calibration needs both classes".into(),
        ));
    }
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    Ok((
        labels.iter().map(|&l| if l { hi } else { lo }).collect(),
        n_pos,
        n_neg,
    ))
}

const MIN_POINTS: usize = 10;
const MAX_ITER: usize = 100;
const MIN_STEP: f64 = 1e-10;
const HESSIAN_RIDGE: f64 = 1e-12;

/// Fits `(A, B)` by Newton's method with backtracking line search on the
/// label-smoothed Bernoulli likelihood.
pub fn fit_platt(scores: &[f64], labels: &[bool]) -> Result<Calibration> {
    check_scores(scores, labels.len())?;
    if scores.len() < MIN_POINTS {
        return Err(Error::InvalidData(format!(
            "need at least {MIN_POINTS} points, got {}",
            scores.len()
        )));
    }
    let (targets, n_pos, n_neg) = smoothed_targets(labels)?;

    let nll = |a: f64, b: f64| -> f64 {
        scores
            .iter()
            .zip(&targets)
            .map(|(&f, &t)| {
                let z = a * f + b;
                // −[t·log p + (1−t)·log(1−p)] with p = σ(−z)
                t * softplus(z) + (1.0 - t) * softplus(-z)
            })
            .sum()
    };

    let (mut a, mut b) = (0.0, ((n_neg + 1.0) / (n_pos + 1.0)).ln());
    let mut fval = nll(a, b);
    for _ in 0..MAX_ITER {
        let (mut h11, mut h22, mut h21) = (HESSIAN_RIDGE, HESSIAN_RIDGE, 0.0);
        let (mut g1, mut g2) = (0.0, 0.0);
        for (&f, &t) in scores.iter().zip(&targets) {
            let p = sigmoid(-(a * f + b));
            let d2 = p * (1.0 - p);
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = t - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let slope = g1 * da + g2 * db;

        let mut step = 1.0;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = nll(na, nb);
            if nf < fval + 1e-4 * step * slope {
                (a, b, fval) = (na, nb, nf);
                break;
            }
            step /= 2.0;
        }
        if step < MIN_STEP {
            break;
        }
    }
    Ok(Calibration { a, b })
}

/// Per-bag negative log-likelihood and gradient when a bag is positive iff
/// any of its instances is, each independently with probability
/// `p_j = 1 / (1 + exp(A·f_j + B))`.
fn noisy_or_objective(bags: &[Vec<f64>], targets: &[f64], a: f64, b: f64) -> (f64, f64, f64) {
    let (mut value, mut ga, mut gb) = (0.0, 0.0, 0.0);
    for (scores, &t) in bags.iter().zip(targets) {
        // log Q where Q = Π (1 − p_j)
        let log_q: f64 = scores.iter().map(|&f| -softplus(-(a * f + b))).sum();
        let p_bag = (-log_q.exp_m1()).max(1e-300);
        value -= t * p_bag.ln() + (1.0 - t) * log_q;
        let q_over_p = log_q.exp() / p_bag;
        for &f in scores {
            let p = sigmoid(-(a * f + b));
            let d = -p * ((1.0 - t) - t * q_over_p);
            ga += d * f;
            gb += d;
        }
    }
    (value, ga, gb)
}

/// Platt scaling for instance scores when only bag labels are observed.
///
/// Maximizes the noisy-OR likelihood `P(bag positive) = 1 − Π_j (1 − p_j)`
/// with the same label smoothing as [`fit_platt`]. For singleton bags this
/// is ordinary Platt scaling.
pub fn fit_platt_bags(bags: &[Vec<f64>], labels: &[bool]) -> Result<Calibration> {
    if bags.len() != labels.len() {
        return Err(Error::InvalidData(format!(
            "{} bags for {} labels",
            bags.len(),
            labels.len()
        )));
    }
    if bags.len() < MIN_POINTS {
        return Err(Error::InvalidData(format!(
            "need at least {MIN_POINTS} bags, got {}",
            bags.len()
        )));
    }
    if bags.iter().any(|b| b.is_empty() || b.iter().any(|s| !s.is_finite())) {
        return Err(Error::InvalidData("empty bag or non-finite score".into()));
    }
    let (targets, _, _) = smoothed_targets(labels)?;

    // start from ordinary Platt on the max score of each bag
    let maxima: Vec<f64> = bags.iter().map(|b| b.iter().copied().fold(f64::MIN, f64::max)).collect();
    let start = fit_platt(&maxima, labels)?;
    let (mut a, mut b) = (start.a, start.b);
    let (mut fval, mut ga, mut gb) = noisy_or_objective(bags, &targets, a, b);

    for _ in 0..MAX_ITER {
        if ga.abs() < 1e-6 && gb.abs() < 1e-6 {
            break;
        }
        // Newton direction from a finite-difference Hessian of the analytic gradient
        let h = 1e-6;
        let (_, ga_a, gb_a) = noisy_or_objective(bags, &targets, a + h, b);
        let (_, ga_b, gb_b) = noisy_or_objective(bags, &targets, a, b + h);
        let (h11, h21, h22) = ((ga_a - ga) / h, ((gb_a - gb) + (ga_b - ga)) / (2.0 * h), (gb_b - gb) / h);
        let det = h11 * h22 - h21 * h21;
        let (mut da, mut db) = if h11 > 0.0 && det > 0.0 {
            (-(h22 * ga - h21 * gb) / det, -(h11 * gb - h21 * ga) / det)
        } else {
            (-ga, -gb)
        };
        let mut slope = ga * da + gb * db;
        if slope >= 0.0 {
            (da, db, slope) = (-ga, -gb, -(ga * ga + gb * gb));
        }

        let mut step = 1.0;
        let mut accepted = false;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let (nf, nga, ngb) = noisy_or_objective(bags, &targets, na, nb);
            if nf.is_finite() && nf < fval + 1e-4 * step * slope {
                (a, b, fval, ga, gb) = (na, nb, nf, nga, ngb);
                accepted = true;
                break;
            }
            step /= 2.0;
        }
        if !accepted {
            break;
        }
    }
    Ok(Calibration { a, b })
}

/// Sorts by prediction, splits into `num_bins` equal-count bins and returns
/// the RMSE between each bin's mean prediction and its positive rate.
pub fn binned_calibration_rmse(predicted: &[f64], labels: &[bool], num_bins: usize) -> Result<f64> {
    check_scores(predicted, labels.len())?;
    if num_bins < 2 {
        return Err(Error::InvalidData(format!("need at least 2 bins, got {num_bins}")));
    }
    let n = predicted.len();
    if n < num_bins {
        return Err(Error::InvalidData(format!(
            "{n} points cannot fill {num_bins} bins"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| predicted[i].total_cmp(&predicted[j]));
    let mut sq = 0.0;
    for bin in 0..num_bins {
        let members = &order[bin * n / num_bins..(bin + 1) * n / num_bins];
        let len = members.len() as f64;
        let mean_pred = members.iter().map(|&i| predicted[i]).sum::<f64>() / len;
        let rate = members.iter().filter(|&&i| labels[i]).count() as f64 / len;
        sq += (mean_pred - rate).powi(2);
    }
    Ok((sq / num_bins as f64).sqrt())
}
