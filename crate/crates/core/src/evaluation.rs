//! Offline evaluation: strategy comparisons, noise sweeps and the dataset
//! statistics that say whether planning with quit probabilities can matter.

use std::fmt::Write as _;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{ipv_bl_unchecked, MdpModel};
use crate::models::{bag_level_auc, train_quit_model_mil, train_quit_model_no_mil, MilParams, SessionLog};
use crate::planner::{perturb_model, plan, PlannerConfig, Strategy, MAX_NOISE_LEVEL};
use crate::rng::{derive_seed, entity_seed, STREAM_NOISE};
use crate::simulator::{produce_mdp, Catalog, GroundTruth, ScoreSource, UserContext};

/// Which model scores a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// The model the plan was made with.
    PlanningModel,
    /// The simulator's true probabilities.
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub horizons: Vec<usize>,
    pub strategies: Vec<Strategy>,
    pub beam_size: usize,
    /// Also run the no-repeat variants of every strategy.
    pub dedup: bool,
    pub mode: EvalMode,
    pub noise_max: u32,
    pub noise_horizon: usize,
    /// List length for the weak-relatedness statistics.
    pub top_l: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            horizons: vec![20, 50],
            strategies: vec![Strategy::Ssp, Strategy::Beam, Strategy::Greedy],
            beam_size: 5,
            dedup: false,
            mode: EvalMode::PlanningModel,
            noise_max: MAX_NOISE_LEVEL,
            noise_horizon: 20,
            top_l: 20,
        }
    }
}

impl EvalOptions {
    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::Config("horizons must be non-empty and positive".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("no strategies selected".into()));
        }
        if self.noise_max > MAX_NOISE_LEVEL {
            return Err(Error::Config(format!("noise_max above {MAX_NOISE_LEVEL}")));
        }
        if self.noise_horizon == 0 || self.top_l == 0 {
            return Err(Error::Config("noise_horizon and top_l must be positive".into()));
        }
        PlannerConfig {
            beam_size: self.beam_size,
            dedup: false,
        }
        .validate()
    }

    fn planner(&self, dedup: bool) -> PlannerConfig {
        PlannerConfig {
            beam_size: self.beam_size,
            dedup,
        }
    }
}

/// The users to evaluate and where their probabilities come from.
#[derive(Debug, Clone, Copy)]
pub struct Scenario<'a> {
    pub catalog: &'a Catalog,
    pub users: &'a [UserContext],
    /// Source the planners see.
    pub source: ScoreSource<'a>,
    /// Needed for [`EvalMode::GroundTruth`].
    pub truth: Option<&'a GroundTruth>,
}

impl Scenario<'_> {
    fn models(&self, user: &UserContext, horizon: usize, mode: EvalMode) -> Result<(MdpModel, Option<MdpModel>)> {
        let planning = produce_mdp(self.catalog, user, self.source, horizon)?;
        let scoring = match (mode, self.source) {
            (EvalMode::PlanningModel, _) | (EvalMode::GroundTruth, ScoreSource::Truth(_)) => None,
            (EvalMode::GroundTruth, ScoreSource::Trained { .. }) => {
                let gt = self
                    .truth
                    .ok_or_else(|| Error::Config("ground-truth evaluation without ground truth".into()))?;
                Some(produce_mdp(self.catalog, user, ScoreSource::Truth(gt), horizon)?)
            }
        };
        Ok((planning, scoring))
    }
}

/// Aggregate of one strategy at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: Strategy,
    pub horizon: usize,
    pub dedup: bool,
    pub users: usize,
    pub sum_ipv: f64,
    pub sum_bl: f64,
    pub mean_ipv: f64,
    pub mean_bl: f64,
    /// `sum_ipv / sum_bl`.
    pub ctr: f64,
    /// Every evaluated path repeats no item.
    pub all_injective: bool,
}

impl StrategyRow {
    pub fn label(&self, beam_size: usize) -> String {
        let base = match self.strategy {
            Strategy::Ssp => "SSP".to_string(),
            Strategy::Greedy => "Greedy".to_string(),
            Strategy::Beam => format!("Beam(S={beam_size})"),
        };
        if self.dedup {
            format!("{base}-dedup")
        } else {
            base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserFailure {
    pub user_id: String,
    pub horizon: usize,
    pub strategy: Option<Strategy>,
    pub dedup: bool,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePoint {
    pub m: u32,
    pub strategy: Strategy,
    /// Mean expected IPV of plans made on the noisy model, scored on the clean one.
    pub revenue: f64,
    pub users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCurves {
    pub horizon: usize,
    pub seed: u64,
    pub points: Vec<NoisePoint>,
    pub failures: Vec<UserFailure>,
}

impl NoiseCurves {
    pub fn revenue(&self, strategy: Strategy, m: u32) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.strategy == strategy && p.m == m)
            .map(|p| p.revenue)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,strategy,revenue\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.m, p.strategy, p.revenue);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationStats {
    pub std: f64,
    pub mean: f64,
    /// Mean over users of each user's std / mean.
    pub std_over_mean: f64,
    /// Mean std divided by mean mean.
    pub ratio_of_means: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelatednessStats {
    pub top_l: usize,
    pub jaccard: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicStats {
    pub discrimination: DiscriminationStats,
    pub relatedness: RelatednessStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub seed: u64,
    pub beam_size: usize,
    pub rows: Vec<StrategyRow>,
    pub failures: Vec<UserFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseCurves>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<CharacteristicStats>,
    /// Resolved configuration the report was produced from.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn row(&self, strategy: Strategy, horizon: usize, dedup: bool) -> Option<&StrategyRow> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.horizon == horizon && r.dedup == dedup)
    }

    /// Aligned table: one line per method, IPV | BL | CTR per horizon.
    pub fn to_table(&self) -> String {
        let mut horizons: Vec<usize> = self.rows.iter().map(|r| r.horizon).collect();
        horizons.sort_unstable();
        horizons.dedup();
        let mut methods: Vec<(Strategy, bool)> = Vec::new();
        for r in &self.rows {
            if !methods.contains(&(r.strategy, r.dedup)) {
                methods.push((r.strategy, r.dedup));
            }
        }

        let mut header = vec!["Method".to_string()];
        for t in &horizons {
            header.extend([format!("IPV@{t}"), format!("BL@{t}"), format!("CTR@{t}")]);
        }
        let mut lines = vec![header];
        for &(strategy, dedup) in &methods {
            let mut line = Vec::new();
            for &t in &horizons {
                match self.row(strategy, t, dedup) {
                    Some(r) => {
                        if line.is_empty() {
                            line.push(r.label(self.beam_size));
                        }
                        line.extend([
                            format!("{:.4}", r.mean_ipv),
                            format!("{:.4}", r.mean_bl),
                            format!("{:.4}", r.ctr),
                        ]);
                    }
                    None => line.extend(["-".into(), "-".into(), "-".into()]),
                }
            }
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|c| lines.iter().map(|l| l.get(c).map_or(0, String::len)).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, line) in lines.iter().enumerate() {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, &w))| if c == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
                .collect();
            out.push_str(cells.join(" | ").trim_end());
            out.push('\n');
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
                out.push_str(&rule.join("-+-"));
                out.push('\n');
            }
        }
        out
    }
}

fn population_std(values: &[f64], mean: f64) -> f64 {
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Spread of candidate quit probabilities, per user then averaged.
pub fn discrimination_stats(quit_lists: &[Vec<f64>]) -> Result<DiscriminationStats> {
    if quit_lists.is_empty() {
        return Err(Error::InvalidData("no quit lists".into()));
    }
    let (mut std_sum, mut mean_sum, mut ratio_sum) = (0.0, 0.0, 0.0);
    for list in quit_lists {
        if list.is_empty() {
            return Err(Error::InvalidData("empty quit list".into()));
        }
        let mean = list.iter().sum::<f64>() / list.len() as f64;
        let std = population_std(list, mean);
        std_sum += std;
        mean_sum += mean;
        ratio_sum += if std == 0.0 { 0.0 } else { std / mean };
    }
    let n = quit_lists.len() as f64;
    Ok(DiscriminationStats {
        std: std_sum / n,
        mean: mean_sum / n,
        std_over_mean: ratio_sum / n,
        ratio_of_means: if std_sum == 0.0 { 0.0 } else { std_sum / mean_sum },
    })
}

/// Indices of the `l` largest values; ties keep the lower index first.
fn top_l(values: &[f64], l: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(l);
    idx
}

/// Overlap of one user's top-`l` lists by reward and by continue probability.
/// NDCG uses binary gain: an item of the continue list earns
/// `1/log₂(position+1)` if it also appears in the reward list.
pub fn list_relatedness(reward: &[f64], continue_prob: &[f64], l: usize) -> Result<(f64, f64)> {
    if reward.len() != continue_prob.len() {
        return Err(Error::InvalidData("reward and continue lists differ in length".into()));
    }
    if l == 0 || l > reward.len() {
        return Err(Error::InvalidData(format!("L = {l} with {} candidates", reward.len())));
    }
    let by_reward = top_l(reward, l);
    let by_continue = top_l(continue_prob, l);
    let shared = by_continue.iter().filter(|i| by_reward.contains(i)).count();
    let jaccard = shared as f64 / (2 * l - shared) as f64;
    let discount = |pos: usize| 1.0 / ((pos + 2) as f64).log2();
    let dcg: f64 = by_continue
        .iter()
        .enumerate()
        .filter(|(_, i)| by_reward.contains(i))
        .map(|(pos, _)| discount(pos))
        .sum();
    let ideal: f64 = (0..l).map(discount).sum();
    Ok((jaccard, dcg / ideal))
}

/// Across-user means of [`list_relatedness`].
pub fn weak_relatedness(lists: &[(Vec<f64>, Vec<f64>)], l: usize) -> Result<RelatednessStats> {
    if lists.is_empty() {
        return Err(Error::InvalidData("no users".into()));
    }
    let (mut j, mut n) = (0.0, 0.0);
    for (reward, cont) in lists {
        let (a, b) = list_relatedness(reward, cont, l)?;
        j += a;
        n += b;
    }
    let users = lists.len() as f64;
    Ok(RelatednessStats {
        top_l: l,
        jaccard: j / users,
        ndcg: n / users,
    })
}

/// Both statistic families on the first-step rows of every user's model.
pub fn characteristic_stats(scenario: &Scenario<'_>, l: usize) -> Result<CharacteristicStats> {
    let mut quit_lists = Vec::with_capacity(scenario.users.len());
    let mut lists = Vec::with_capacity(scenario.users.len());
    for user in scenario.users {
        let m = produce_mdp(scenario.catalog, user, scenario.source, 1)?;
        quit_lists.push(m.quit_row(0).to_vec());
        let cont = (0..m.num_items()).map(|a| m.continue_prob(0, a)).collect();
        lists.push((m.reward_row(0).to_vec(), cont));
    }
    Ok(CharacteristicStats {
        discrimination: discrimination_stats(&quit_lists)?,
        relatedness: weak_relatedness(&lists, l)?,
    })
}

fn map_users<T: Send>(users: &[UserContext], f: impl Fn(usize, &UserContext) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        users.par_iter().enumerate().map(|(i, u)| f(i, u)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        users.iter().enumerate().map(|(i, u)| f(i, u)).collect()
    }
}

type Outcome = std::result::Result<(f64, f64, bool), String>;

/// Plans every user with every strategy and aggregates expected engagement
/// under the model chosen by `options.mode`.
pub fn run_offline_comparison(scenario: &Scenario<'_>, options: &EvalOptions, seed: u64) -> Result<EvalReport> {
    options.validate()?;
    let dedup_flags: &[bool] = if options.dedup { &[false, true] } else { &[false] };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &horizon in &options.horizons {
        // per user: model error, or one outcome per (dedup, strategy)
        let per_user = map_users(scenario.users, |_, user| -> std::result::Result<Vec<Outcome>, String> {
            let (planning, scoring) = scenario.models(user, horizon, options.mode).map_err(|e| e.to_string())?;
            let scorer = scoring.as_ref().unwrap_or(&planning);
            Ok(dedup_flags
                .iter()
                .flat_map(|&dedup| options.strategies.iter().map(move |&s| (dedup, s)))
                .map(|(dedup, strategy)| {
                    let p = plan(&planning, strategy, &options.planner(dedup)).map_err(|e| e.to_string())?;
                    let (ipv, bl) = ipv_bl_unchecked(scorer, &p.path);
                    Ok((ipv, bl, p.is_injective()))
                })
                .collect())
        });

        let combos: Vec<(bool, Strategy)> = dedup_flags
            .iter()
            .flat_map(|&d| options.strategies.iter().map(move |&s| (d, s)))
            .collect();
        let mut acc = vec![(0usize, 0.0, 0.0, true); combos.len()];
        for (user, outcome) in scenario.users.iter().zip(per_user) {
            match outcome {
                Err(error) => failures.push(UserFailure {
                    user_id: user.user_id.clone(),
                    horizon,
                    strategy: None,
                    dedup: false,
                    error,
                }),
                Ok(results) => {
                    for (slot, ((dedup, strategy), r)) in acc.iter_mut().zip(combos.iter().zip(results)) {
                        match r {
                            Ok((ipv, bl, injective)) => {
                                slot.0 += 1;
                                slot.1 += ipv;
                                slot.2 += bl;
                                slot.3 &= injective;
                            }
                            Err(error) => failures.push(UserFailure {
                                user_id: user.user_id.clone(),
                                horizon,
                                strategy: Some(*strategy),
                                dedup: *dedup,
                                error,
                            }),
                        }
                    }
                }
            }
        }
        for (&(dedup, strategy), (users, sum_ipv, sum_bl, all_injective)) in combos.iter().zip(acc) {
            let n = users.max(1) as f64;
            rows.push(StrategyRow {
                strategy,
                horizon,
                dedup,
                users,
                sum_ipv,
                sum_bl,
                mean_ipv: sum_ipv / n,
                mean_bl: sum_bl / n,
                ctr: if sum_bl > 0.0 { sum_ipv / sum_bl } else { 0.0 },
                all_injective,
            });
        }
    }
    Ok(EvalReport {
        mode: options.mode,
        seed,
        beam_size: options.beam_size,
        rows,
        failures,
        noise: None,
        stats: None,
        config: serde_json::Value::Null,
    })
}

/// Seed of the perturbation applied to user `index` at level `m`; shared by
/// all strategies so their curves see the same noise.
pub fn noise_seed(root: u64, index: usize, m: u32) -> u64 {
    derive_seed(entity_seed(root, STREAM_NOISE, index as u64), u64::from(m))
}

/// For each level `m`, perturbs every user's model, plans on the noisy copy
/// and scores the plan on the clean model chosen by `options.mode`.
pub fn run_noise_sweep(scenario: &Scenario<'_>, options: &EvalOptions, seed: u64) -> Result<NoiseCurves> {
    options.validate()?;
    let horizon = options.noise_horizon;
    let planner = options.planner(false);
    let levels: Vec<u32> = (0..=options.noise_max).collect();
    let per_user = map_users(scenario.users, |index, user| -> std::result::Result<Vec<Option<f64>>, String> {
        let (clean, scoring) = scenario.models(user, horizon, options.mode).map_err(|e| e.to_string())?;
        let scorer = scoring.as_ref().unwrap_or(&clean);
        let mut out = Vec::with_capacity(levels.len() * options.strategies.len());
        for &m in &levels {
            let noisy = perturb_model(&clean, m, noise_seed(seed, index, m)).map_err(|e| e.to_string())?;
            for &strategy in &options.strategies {
                out.push(plan(&noisy, strategy, &planner).ok().map(|p| ipv_bl_unchecked(scorer, &p.path).0));
            }
        }
        Ok(out)
    });

    let slots = levels.len() * options.strategies.len();
    let mut sums = vec![(0usize, 0.0); slots];
    let mut failures = Vec::new();
    for (user, outcome) in scenario.users.iter().zip(per_user) {
        match outcome {
            Ok(values) => {
                for (slot, v) in sums.iter_mut().zip(values) {
                    if let Some(v) = v {
                        slot.0 += 1;
                        slot.1 += v;
                    }
                }
            }
            Err(error) => failures.push(UserFailure {
                user_id: user.user_id.clone(),
                horizon,
                strategy: None,
                dedup: false,
                error,
            }),
        }
    }
    let mut points = Vec::with_capacity(slots);
    let mut it = sums.into_iter();
    for &m in &levels {
        for &strategy in &options.strategies {
            let (users, total) = it.next().expect("one slot per level and strategy");
            points.push(NoisePoint {
                m,
                strategy,
                revenue: total / users.max(1) as f64,
                users,
            });
        }
    }
    Ok(NoiseCurves {
        horizon,
        seed,
        points,
        failures,
    })
}

/// Bag-level AUC of the MIL quit model and of the bag-label baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MilComparison {
    pub mil_auc: f64,
    pub no_mil_auc: f64,
    pub outer_iterations: usize,
    pub converged: bool,
}

/// Trains both quit models on `train` and scores bags of `test`.
pub fn compare_mil(train: &[SessionLog], test: &[SessionLog], params: &MilParams) -> Result<MilComparison> {
    let fit = train_quit_model_mil(train, params)?;
    let baseline = train_quit_model_no_mil(train, params)?;
    let bags = || test.iter().flat_map(|s| &s.bags);
    Ok(MilComparison {
        mil_auc: bag_level_auc(&fit.model, bags())?,
        no_mil_auc: bag_level_auc(&baseline, bags())?,
        outer_iterations: fit.outer_iterations,
        converged: fit.converged,
    })
}
