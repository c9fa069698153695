//! Multi-instance quit model.
//!
//! A session is a run of pages `(B1+, …, Bi+, …, Bleave−)`: every page but
//! the last kept the user browsing. Under the standard MIL assumption a
//! positive page holds at least one "keeps the user" item and a negative
//! page holds none. MI-SVM alternates between picking the top-scoring item
//! (the witness) of each positive page and refitting a linear SVM on
//! witnesses versus every item of every negative page, until the witness
//! choice repeats.

use serde::{Deserialize, Serialize};

use super::data::{feature_dim, Bag, SessionLog};
use super::linear::{train_hinge, HingeParams, LinearModel};
use super::metrics::auc;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MilParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub max_outer_iters: usize,
    pub seed: u64,
}

impl Default for MilParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 200,
            l2: 1e-4,
            max_outer_iters: 50,
            seed: 7,
        }
    }
}

impl MilParams {
    fn hinge(&self) -> HingeParams {
        HingeParams {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            l2: self.l2,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilFit {
    pub model: LinearModel,
    /// Witness-selection rounds performed (at most `max_outer_iters`).
    pub outer_iterations: usize,
    /// True when the last round reproduced the previous witness set.
    pub converged: bool,
    /// Witness position for every positive bag, in log order.
    pub witnesses: Vec<usize>,
}

/// Normalized set kernel embedding with a linear base kernel: the sum of the
/// bag's feature vectors scaled to unit length. A zero sum stays zero.
pub fn nsk_bag_representation(bag: &Bag) -> Vec<f64> {
    let dim = bag.instances.first().map_or(0, |i| i.features.len());
    let mut sum = vec![0.0; dim];
    for inst in &bag.instances {
        for (s, x) in sum.iter_mut().zip(&inst.features) {
            *s += x;
        }
    }
    let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        sum.iter_mut().for_each(|v| *v /= norm);
    }
    sum
}

/// Max instance score: a page keeps the user if any of its items does.
pub fn bag_score(model: &LinearModel, bag: &Bag) -> f64 {
    bag.instances
        .iter()
        .map(|i| model.score(&i.features))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn bag_level_auc<'a>(model: &LinearModel, bags: impl IntoIterator<Item = &'a Bag>) -> Result<f64> {
    let (scores, labels): (Vec<f64>, Vec<bool>) = bags
        .into_iter()
        .map(|b| (bag_score(model, b), b.label.is_positive()))
        .unzip();
    auc(&scores, &labels)
}

fn collect_bags(sessions: &[SessionLog]) -> Result<Vec<&Bag>> {
    if sessions.is_empty() {
        return Err(Error::InvalidData("no sessions to train on".into()));
    }
    for s in sessions {
        s.validate()?;
    }
    let bags: Vec<&Bag> = sessions.iter().flat_map(|s| s.bags.iter()).collect();
    feature_dim(bags.iter().flat_map(|b| b.instances.iter()))?;
    if !bags.iter().any(|b| !b.label.is_positive()) {
        return Err(Error::DegenerateData("no negative bags in the log".into()));
    }
    if !bags.iter().any(|b| b.label.is_positive()) {
        return Err(Error::DegenerateData("no positive bags in the log".into()));
    }
    Ok(bags)
}

fn select_witnesses(model: &LinearModel, bags: &[&Bag]) -> Vec<usize> {
    bags.iter()
        .filter(|b| b.label.is_positive())
        .map(|b| {
            let mut best = (0, f64::NEG_INFINITY);
            for (j, inst) in b.instances.iter().enumerate() {
                let s = model.score(&inst.features);
                if s > best.1 {
                    best = (j, s);
                }
            }
            best.0
        })
        .collect()
}

/// Witnesses of positive bags as positives, every instance of negative bags
/// as negatives, in log order.
fn witness_training_set<'a>(bags: &[&'a Bag], witnesses: &[usize]) -> (Vec<&'a [f64]>, Vec<bool>) {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut next_witness = witnesses.iter();
    for bag in bags {
        if bag.label.is_positive() {
            let j = *next_witness.next().expect("one witness per positive bag");
            rows.push(bag.instances[j].features.as_slice());
            labels.push(true);
        } else {
            for inst in &bag.instances {
                rows.push(inst.features.as_slice());
                labels.push(false);
            }
        }
    }
    (rows, labels)
}

/// MI-SVM quit model. The returned scorer rates how likely an item is to
/// keep the user browsing.
pub fn train_quit_model_mil(sessions: &[SessionLog], params: &MilParams) -> Result<MilFit> {
    let bags = collect_bags(sessions)?;
    let hinge = params.hinge();

    // initial model on bag-level NSK embeddings; its weights rank instances directly
    let embedded: Vec<Vec<f64>> = bags.iter().map(|b| nsk_bag_representation(b)).collect();
    let rows: Vec<&[f64]> = embedded.iter().map(Vec::as_slice).collect();
    let labels: Vec<bool> = bags.iter().map(|b| b.label.is_positive()).collect();
    let (mut model, _) = train_hinge(&rows, &labels, &hinge)?;

    let mut previous: Option<Vec<usize>> = None;
    let mut outer_iterations = 0;
    let mut converged = false;
    while outer_iterations < params.max_outer_iters.max(1) {
        outer_iterations += 1;
        let witnesses = select_witnesses(&model, &bags);
        if previous.as_ref() == Some(&witnesses) {
            converged = true;
            break;
        }
        let (rows, labels) = witness_training_set(&bags, &witnesses);
        model = train_hinge(&rows, &labels, &hinge)?.0;
        previous = Some(witnesses);
    }
    Ok(MilFit {
        model,
        outer_iterations,
        converged,
        witnesses: previous.unwrap_or_default(),
    })
}

/// Baseline: every instance inherits its bag's label.
pub fn train_quit_model_no_mil(sessions: &[SessionLog], params: &MilParams) -> Result<LinearModel> {
    let bags = collect_bags(sessions)?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for bag in &bags {
        for inst in &bag.instances {
            rows.push(inst.features.as_slice());
            labels.push(bag.label.is_positive());
        }
    }
    Ok(train_hinge(&rows, &labels, &params.hinge())?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::data::{BagLabel, Instance};
    use crate::rng::rng_from;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn inst(features: Vec<f64>) -> Instance {
        Instance {
            item_id: "i".into(),
            category_id: "c".into(),
            features,
            click: 0,
            true_continue: None,
        }
    }

    fn bag(label: BagLabel, rows: Vec<Vec<f64>>) -> Bag {
        Bag {
            label,
            instances: rows.into_iter().map(inst).collect(),
        }
    }

    #[test]
    fn nsk_examples() {
        let single = bag(BagLabel::Positive, vec![vec![3.0, 4.0]]);
        assert_eq!(nsk_bag_representation(&single), vec![0.6, 0.8]);
        let twice = bag(BagLabel::Positive, vec![vec![3.0, 4.0], vec![3.0, 4.0]]);
        assert_eq!(nsk_bag_representation(&twice), vec![0.6, 0.8]);
        let axes = bag(BagLabel::Positive, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let r = nsk_bag_representation(&axes);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((r[0] - h).abs() < 1e-15 && (r[1] - h).abs() < 1e-15);
        let cancel = bag(BagLabel::Positive, vec![vec![1.0, -2.0], vec![-1.0, 2.0]]);
        assert_eq!(nsk_bag_representation(&cancel), vec![0.0, 0.0]);
    }

    #[test]
    fn bag_score_is_max() {
        let model = LinearModel {
            weights: vec![1.0],
            bias: 0.0,
        };
        let mut b = bag(BagLabel::Positive, vec![vec![-1.0]]);
        assert_eq!(bag_score(&model, &b), -1.0);
        b.instances.push(inst(vec![2.0]));
        assert_eq!(bag_score(&model, &b), 2.0);
        b.instances.push(inst(vec![0.5]));
        assert_eq!(bag_score(&model, &b), 2.0);
    }

    #[test]
    fn bag_auc_extremes() {
        let model = LinearModel {
            weights: vec![1.0],
            bias: 0.0,
        };
        let bags = vec![
            bag(BagLabel::Positive, vec![vec![2.0], vec![-3.0]]),
            bag(BagLabel::Negative, vec![vec![0.5]]),
        ];
        assert_eq!(bag_level_auc(&model, &bags).unwrap(), 1.0);
        let flipped = LinearModel {
            weights: vec![-1.0],
            bias: 0.0,
        };
        let rev = vec![
            bag(BagLabel::Positive, vec![vec![2.0]]),
            bag(BagLabel::Negative, vec![vec![0.5]]),
        ];
        assert_eq!(bag_level_auc(&flipped, &rev).unwrap(), 0.0);
        assert!(matches!(
            bag_level_auc(&model, &bags[..1]),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn random_scores_give_chance_auc() {
        let mut rng = rng_from(7);
        let scores: Vec<f64> = (0..20_000).map(|_| rng.random()).collect();
        let labels: Vec<bool> = (0..20_000).map(|_| rng.random::<bool>()).collect();
        assert!((auc(&scores, &labels).unwrap() - 0.5).abs() < 0.05);
    }

    fn singleton_sessions(seed: u64) -> Vec<SessionLog> {
        let mut rng = rng_from(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        (0..40)
            .map(|u| {
                let pages = 1 + u % 4;
                let bags = (0..pages)
                    .map(|p| {
                        let positive = p + 1 < pages;
                        let shift = if positive { 1.0 } else { -1.0 };
                        let x = vec![shift + normal.sample(&mut rng), normal.sample(&mut rng)];
                        let label = if positive { BagLabel::Positive } else { BagLabel::Negative };
                        bag(label, vec![x])
                    })
                    .collect();
                SessionLog {
                    user_id: format!("u{u}"),
                    bags,
                }
            })
            .collect()
    }

    #[test]
    fn singleton_bags_converge_fast_and_match_baseline() {
        let sessions = singleton_sessions(3);
        let params = MilParams::default();
        let fit = train_quit_model_mil(&sessions, &params).unwrap();
        assert!(fit.converged);
        assert!(fit.outer_iterations <= 2);
        assert!(fit.witnesses.iter().all(|&w| w == 0));
        let baseline = train_quit_model_no_mil(&sessions, &params).unwrap();
        assert_eq!(fit.model, baseline);
    }

    #[test]
    fn degenerate_logs() {
        assert!(matches!(
            train_quit_model_mil(&[], &MilParams::default()),
            Err(Error::InvalidData(_))
        ));
        let all_positive = vec![SessionLog {
            user_id: "u".into(),
            bags: vec![bag(BagLabel::Positive, vec![vec![1.0]])],
        }];
        assert!(matches!(
            train_quit_model_mil(&all_positive, &MilParams::default()),
            Err(Error::DegenerateData(_))
        ));
        assert!(matches!(
            train_quit_model_no_mil(&all_positive, &MilParams::default()),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn respects_outer_iteration_cap() {
        let sessions = singleton_sessions(5);
        let params = MilParams {
            max_outer_iters: 1,
            ..Default::default()
        };
        let fit = train_quit_model_mil(&sessions, &params).unwrap();
        assert_eq!(fit.outer_iterations, 1);
        assert!(!fit.converged);
    }
}
