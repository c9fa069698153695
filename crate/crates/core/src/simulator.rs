//! Synthetic users, items and bag-structured browse logs.
//!
//! Every item has observed features `x ∈ R^d` and one hidden latent factor
//! `h`. True click and continue probabilities are logistic in linear scores
//! over `(x, h)`, shifted by two interactive features: how far into the
//! session the item is shown and how often the user has already seen its
//! category. The continue direction is built as `ρ·ĉ + √(1−ρ²)·ô`, with
//! `ĉ` the unit click direction and `ô` a random orthogonal unit vector, so
//! `ρ` controls how strongly "clicky" and "sticky" items coincide.
//!
//! Logs show pages of `m` items. Each item independently keeps the user
//! with its true continue probability; a page is positive iff at least one
//! of its items does, and a session ends at its first negative page.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{MdpModel, Plan};
use crate::models::calibration::PROBABILITY_FLOOR;
use crate::models::data::{Bag, BagLabel, Instance, SessionLog};
use crate::models::linear::sigmoid;
use crate::models::ScoredModel;
use crate::rng::{derive_seed, entity_seed, rng_from, STREAM_CATALOG, STREAM_SESSIONS, STREAM_USERS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Users in the evaluation population.
    pub num_users: usize,
    /// Sessions in the training log (one fresh user each).
    pub num_log_sessions: usize,
    pub catalog_size: usize,
    pub num_categories: usize,
    pub feature_dim: usize,
    /// Items per logged page.
    pub bag_size: usize,
    pub max_pages: usize,
    pub horizon: usize,
    /// Candidate items per evaluation user (the MDP action space).
    pub candidates_per_user: usize,
    /// Correlation knob between click and continue scores, in `[−1, 1]`.
    pub rho: f64,
    /// Weight of the hidden latent factor in the click score.
    pub noise_scale: f64,
    pub click_scale: f64,
    pub click_bias: f64,
    pub continue_scale: f64,
    pub continue_bias: f64,
    pub click_step: f64,
    pub continue_step: f64,
    pub click_exposure: f64,
    pub continue_exposure: f64,
    /// Mean pre-session exposure count per category.
    pub mean_exposure: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_users: 500,
            num_log_sessions: 2000,
            catalog_size: 2000,
            num_categories: 10,
            feature_dim: 8,
            bag_size: 6,
            max_pages: 30,
            horizon: 20,
            candidates_per_user: 100,
            rho: 0.2,
            noise_scale: 0.3,
            click_scale: 1.0,
            click_bias: -1.5,
            continue_scale: 1.5,
            continue_bias: -0.8,
            click_step: -0.05,
            continue_step: -0.15,
            click_exposure: 0.15,
            continue_exposure: -0.1,
            mean_exposure: 3.0,
            seed: 7,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_users", self.num_users),
            ("num_log_sessions", self.num_log_sessions),
            ("catalog_size", self.catalog_size),
            ("num_categories", self.num_categories),
            ("feature_dim", self.feature_dim),
            ("bag_size", self.bag_size),
            ("max_pages", self.max_pages),
            ("horizon", self.horizon),
            ("candidates_per_user", self.candidates_per_user),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho = {} outside [-1, 1]", self.rho)));
        }
        if self.bag_size > self.catalog_size || self.candidates_per_user > self.catalog_size {
            return Err(Error::Config(
                "bag_size and candidates_per_user cannot exceed catalog_size".into(),
            ));
        }
        if [self.mean_exposure, self.noise_scale].iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("mean_exposure and noise_scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// Names of the model-visible features: the item features, then the two
/// interactive features.
pub fn feature_schema(feature_dim: usize) -> Vec<String> {
    (0..feature_dim)
        .map(|i| format!("x{i}"))
        .chain(["log_step".to_string(), "log_category_exposure".to_string()])
        .collect()
}

/// Model-visible features of `item` shown as the `step`-th item (0-based)
/// of a session, to a user who has seen `exposure` items of its category.
pub fn instance_features(item_features: &[f64], step: usize, exposure: u32) -> Vec<f64> {
    let mut f = Vec::with_capacity(item_features.len() + 2);
    f.extend_from_slice(item_features);
    f.push((step as f64).ln_1p());
    f.push(f64::from(exposure).ln_1p());
    f
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogItem {
    pub id: String,
    pub category: usize,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub feature_dim: usize,
    pub num_categories: usize,
    pub items: Vec<CatalogItem>,
}

impl Catalog {
    pub fn category_id(&self, item: usize) -> String {
        format!("cat{}", self.items[item].category)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        // ids are generated as item{index}
        id.strip_prefix("item")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&i| self.items.get(i).is_some_and(|it| it.id == id))
            .or_else(|| self.items.iter().position(|it| it.id == id))
    }
}

/// Linear score over `(x, h)` plus interactive-feature coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueScore {
    /// Weights over the observed features followed by the hidden factor.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub step_coef: f64,
    pub exposure_coef: f64,
}

impl TrueScore {
    fn logit(&self, features: &[f64], hidden: f64, step: usize, exposure: u32) -> f64 {
        let (w_obs, w_hidden) = self.weights.split_at(features.len());
        self.bias
            + w_obs.iter().zip(features).map(|(w, x)| w * x).sum::<f64>()
            + w_hidden[0] * hidden
            + self.step_coef * (step as f64).ln_1p()
            + self.exposure_coef * f64::from(exposure).ln_1p()
    }
}

/// The simulator's hidden world: catalog plus the true probability maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub catalog: Catalog,
    /// Hidden latent factor per item.
    pub hidden: Vec<f64>,
    pub click: TrueScore,
    pub cont: TrueScore,
    pub rho: f64,
    pub seed: u64,
}

impl GroundTruth {
    pub fn click_prob(&self, item: usize, step: usize, exposure: u32) -> f64 {
        let it = &self.catalog.items[item];
        sigmoid(self.click.logit(&it.features, self.hidden[item], step, exposure))
    }

    pub fn continue_prob(&self, item: usize, step: usize, exposure: u32) -> f64 {
        let it = &self.catalog.items[item];
        sigmoid(self.cont.logit(&it.features, self.hidden[item], step, exposure))
    }
}

fn unit(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn generate_ground_truth(config: &SimConfig) -> Result<GroundTruth> {
    config.validate()?;
    let mut rng = rng_from(derive_seed(config.seed, STREAM_CATALOG));
    let d = config.feature_dim;

    let mut observed_dir = gaussian_vec(&mut rng, d);
    unit(&mut observed_dir);
    let mut click_w: Vec<f64> = observed_dir.iter().map(|x| x * config.click_scale).collect();
    click_w.push(config.noise_scale);
    let click_norm = click_w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let click_dir: Vec<f64> = click_w.iter().map(|x| x / click_norm).collect();

    // random direction orthogonal to the click direction in (x, h) space
    let mut orth = gaussian_vec(&mut rng, d + 1);
    let proj: f64 = orth.iter().zip(&click_dir).map(|(a, b)| a * b).sum();
    orth.iter_mut().zip(&click_dir).for_each(|(o, c)| *o -= proj * c);
    unit(&mut orth);
    let side = (1.0 - config.rho * config.rho).max(0.0).sqrt();
    let cont_w: Vec<f64> = click_dir
        .iter()
        .zip(&orth)
        .map(|(c, o)| config.continue_scale * (config.rho * c + side * o))
        .collect();

    let items: Vec<CatalogItem> = (0..config.catalog_size)
        .map(|i| CatalogItem {
            id: format!("item{i}"),
            category: rng.random_range(0..config.num_categories),
            features: gaussian_vec(&mut rng, d),
        })
        .collect();
    let hidden = gaussian_vec(&mut rng, config.catalog_size);

    Ok(GroundTruth {
        catalog: Catalog {
            feature_dim: d,
            num_categories: config.num_categories,
            items,
        },
        hidden,
        click: TrueScore {
            weights: click_w,
            bias: config.click_bias,
            step_coef: config.click_step,
            exposure_coef: config.click_exposure,
        },
        cont: TrueScore {
            weights: cont_w,
            bias: config.continue_bias,
            step_coef: config.continue_step,
            exposure_coef: config.continue_exposure,
        },
        rho: config.rho,
        seed: config.seed,
    })
}

/// Pre-session state of one user plus their candidate items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserContext {
    pub user_id: String,
    /// Items of each category seen before this session.
    pub exposure: Vec<u32>,
    /// Candidate item ids, in MDP column order.
    pub candidates: Vec<String>,
}

impl UserContext {
    pub fn candidate_indices(&self, catalog: &Catalog) -> Result<Vec<usize>> {
        self.candidates
            .iter()
            .map(|id| {
                catalog
                    .index_of(id)
                    .ok_or_else(|| Error::Schema(format!("candidate {id} not in catalog")))
            })
            .collect()
    }
}

fn sample_exposure(rng: &mut ChaCha8Rng, config: &SimConfig) -> Vec<u32> {
    if config.mean_exposure == 0.0 {
        return vec![0; config.num_categories];
    }
    let poisson = Poisson::new(config.mean_exposure).expect("positive mean");
    (0..config.num_categories)
        .map(|_| poisson.sample(rng) as u32)
        .collect()
}

/// Evaluation users; user `i` draws from seed `base + i`.
pub fn generate_users(gt: &GroundTruth, config: &SimConfig) -> Result<Vec<UserContext>> {
    config.validate()?;
    Ok((0..config.num_users)
        .map(|i| {
            let mut rng = rng_from(entity_seed(config.seed, STREAM_USERS, i as u64));
            let exposure = sample_exposure(&mut rng, config);
            let candidates = sample(&mut rng, gt.catalog.items.len(), config.candidates_per_user)
                .into_iter()
                .map(|j| gt.catalog.items[j].id.clone())
                .collect();
            UserContext {
                user_id: format!("user{i}"),
                exposure,
                candidates,
            }
        })
        .collect())
}

/// One logged session: pages of random catalog items until the first
/// negative page or `max_pages`.
pub fn generate_session(gt: &GroundTruth, config: &SimConfig, index: usize) -> SessionLog {
    let mut rng = rng_from(entity_seed(config.seed, STREAM_SESSIONS, index as u64));
    let mut exposure = sample_exposure(&mut rng, config);
    let mut bags = Vec::new();
    let mut step = 0;
    for _ in 0..config.max_pages {
        let page = sample(&mut rng, gt.catalog.items.len(), config.bag_size);
        let mut instances = Vec::with_capacity(config.bag_size);
        for item in page {
            let cat = gt.catalog.items[item].category;
            let seen = exposure[cat];
            let keeps = rng.random::<f64>() < gt.continue_prob(item, step, seen);
            let clicked = rng.random::<f64>() < gt.click_prob(item, step, seen);
            instances.push(Instance {
                item_id: gt.catalog.items[item].id.clone(),
                category_id: gt.catalog.category_id(item),
                features: instance_features(&gt.catalog.items[item].features, step, seen),
                click: u8::from(clicked),
                true_continue: Some(u8::from(keeps)),
            });
            exposure[cat] += 1;
            step += 1;
        }
        let positive = instances.iter().any(|i| i.true_continue == Some(1));
        bags.push(Bag {
            label: if positive { BagLabel::Positive } else { BagLabel::Negative },
            instances,
        });
        if !positive {
            break;
        }
    }
    SessionLog {
        user_id: format!("log{index}"),
        bags,
    }
}

pub fn generate_sessions(gt: &GroundTruth, config: &SimConfig) -> Result<Vec<SessionLog>> {
    config.validate()?;
    Ok((0..config.num_log_sessions)
        .map(|i| generate_session(gt, config, i))
        .collect())
}

/// Settings for logs with planted witnesses: every positive page holds
/// exactly one item from the "keeps the user" cluster, all other items come
/// from the background cluster. The witness mean is shifted equally along
/// every axis, and half of the axes carry extra noise, so the raw mean
/// difference is not the best linear separator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantedConfig {
    pub num_sessions: usize,
    pub bag_size: usize,
    pub feature_dim: usize,
    pub max_pages: usize,
    /// Probability that a page keeps the user.
    pub continue_rate: f64,
    /// Distance between the witness and background cluster means.
    pub separation: f64,
    /// Standard deviation of the second half of the feature dimensions;
    /// the first half has unit scale.
    pub noisy_feature_scale: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            num_sessions: 2000,
            bag_size: 6,
            feature_dim: 8,
            max_pages: 20,
            continue_rate: 0.8,
            separation: 3.0,
            noisy_feature_scale: 3.0,
            seed: 7,
        }
    }
}

pub fn generate_planted_sessions(config: &PlantedConfig) -> Result<Vec<SessionLog>> {
    if config.num_sessions == 0 || config.bag_size == 0 || config.feature_dim == 0 || config.max_pages == 0 {
        return Err(Error::Config("planted-witness sizes must be positive".into()));
    }
    if !(0.0..1.0).contains(&config.continue_rate) {
        return Err(Error::Config("continue_rate must lie in [0, 1)".into()));
    }
    let d = config.feature_dim;
    let mut direction = vec![1.0; d];
    unit(&mut direction);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let scales: Vec<f64> = (0..d)
        .map(|k| if 2 * k < d { 1.0 } else { config.noisy_feature_scale })
        .collect();

    let mut item = 0usize;
    let mut make = |rng: &mut ChaCha8Rng, witness: bool| {
        let shift = if witness { config.separation } else { 0.0 };
        let features = direction
            .iter()
            .zip(&scales)
            .map(|(u, s)| shift * u + s * normal.sample(rng))
            .collect();
        item += 1;
        Instance {
            item_id: format!("p{item}"),
            category_id: "cat0".into(),
            features,
            click: 0,
            true_continue: Some(u8::from(witness)),
        }
    };

    Ok((0..config.num_sessions)
        .map(|s| {
            let mut rng = rng_from(entity_seed(config.seed, STREAM_SESSIONS, s as u64));
            let mut bags = Vec::new();
            for _ in 0..config.max_pages {
                let positive = rng.random::<f64>() < config.continue_rate;
                let witness_at = if positive { Some(rng.random_range(0..config.bag_size)) } else { None };
                let instances = (0..config.bag_size)
                    .map(|j| make(&mut rng, witness_at == Some(j)))
                    .collect();
                bags.push(Bag {
                    label: if positive { BagLabel::Positive } else { BagLabel::Negative },
                    instances,
                });
                if !positive {
                    break;
                }
            }
            SessionLog {
                user_id: format!("planted{s}"),
                bags,
            }
        })
        .collect())
}

/// Where [`produce_mdp`] gets its probabilities from.
#[derive(Debug, Clone, Copy)]
pub enum ScoreSource<'a> {
    Truth(&'a GroundTruth),
    Trained {
        click: &'a ScoredModel,
        /// Scores the probability of continuing; quit is its complement.
        quit: &'a ScoredModel,
    },
}

/// Builds the user's MDP over their candidates. Interactive features are
/// frozen at session start except the step index, so every entry depends
/// only on `(t, a)`.
pub fn produce_mdp(
    catalog: &Catalog,
    user: &UserContext,
    source: ScoreSource<'_>,
    horizon: usize,
) -> Result<MdpModel> {
    let candidates = user.candidate_indices(catalog)?;
    if user.exposure.len() != catalog.num_categories {
        return Err(Error::Schema(format!(
            "user {} has exposure for {} categories, catalog has {}",
            user.user_id,
            user.exposure.len(),
            catalog.num_categories
        )));
    }
    if let ScoreSource::Trained { click, quit } = source {
        let schema = feature_schema(catalog.feature_dim);
        click.check_schema(&schema)?;
        quit.check_schema(&schema)?;
    }
    let k = candidates.len();
    let mut reward = Vec::with_capacity(horizon * k);
    let mut quit_probs = Vec::with_capacity(horizon * k);
    let clamp = |p: f64| p.clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR);
    for t in 0..horizon {
        for &item in &candidates {
            let seen = user.exposure[catalog.items[item].category];
            let (click_p, cont_p) = match source {
                ScoreSource::Truth(gt) => (gt.click_prob(item, t, seen), gt.continue_prob(item, t, seen)),
                ScoreSource::Trained { click, quit } => {
                    let f = instance_features(&catalog.items[item].features, t, seen);
                    (click.probability(&f), quit.probability(&f))
                }
            };
            reward.push(clamp(click_p));
            quit_probs.push(clamp(1.0 - cont_p));
        }
    }
    MdpModel::from_flat(horizon, user.candidates.clone(), reward, quit_probs)
}

/// Walks the plan for a simulated user: at each step a click and a continue
/// decision are drawn from the true probabilities. Returns
/// `(clicks, items viewed)`.
pub fn rollout(gt: &GroundTruth, user: &UserContext, plan: &Plan, seed: u64) -> Result<(u32, u32)> {
    let items = plan_items(&gt.catalog, user, &plan.path)?;
    Ok(rollout_items(gt, user, &items, &mut rng_from(seed)))
}

/// Catalog indices of the plan's columns.
pub fn plan_items(catalog: &Catalog, user: &UserContext, path: &[usize]) -> Result<Vec<usize>> {
    if path.is_empty() {
        return Err(Error::InvalidPath("empty plan".into()));
    }
    let candidates = user.candidate_indices(catalog)?;
    path.iter()
        .map(|&a| {
            candidates
                .get(a)
                .copied()
                .ok_or_else(|| Error::InvalidPath(format!("column {a} outside {} candidates", candidates.len())))
        })
        .collect()
}

/// [`rollout`] over catalog indices with a caller-owned generator.
pub fn rollout_items<R: Rng>(gt: &GroundTruth, user: &UserContext, items: &[usize], rng: &mut R) -> (u32, u32) {
    let (mut clicks, mut viewed) = (0, 0);
    for (t, &item) in items.iter().enumerate() {
        let seen = user.exposure[gt.catalog.items[item].category];
        viewed += 1;
        if rng.random::<f64>() < gt.click_prob(item, t, seen) {
            clicks += 1;
        }
        if rng.random::<f64>() >= gt.continue_prob(item, t, seen) {
            break;
        }
    }
    (clicks, viewed)
}
