//! Path planners over an [`MdpModel`].
//!
//! [`ssp_plan`] is the exact optimum by backward induction. Because every
//! state can only move to the next step or to the absorbing state, the value
//! of step `t + 1` is final before step `t` is touched, and one sweep from
//! the last step to the first suffices:
//!
//! ```text
//! V(s_A) = 0
//! V(s_T) = max_a R[T][a]
//! V(s_t) = max_a R[t][a] + (1 − quit[t][a]) · V(s_{t+1})
//! ```
//!
//! Greedy and beam search are the usual baselines; the `*_dedup` variants
//! forbid showing an item twice. Ties are always broken toward the lowest
//! item index (beam: the lexicographically smallest prefix) so plans are
//! reproducible.

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{ipv_bl_unchecked, MdpModel, Plan, StateValueTable};
use crate::rng::rng_from;

/// Upper bound on the number of paths the brute-force oracle will enumerate.
pub const BRUTE_FORCE_LIMIT: u64 = 1_000_000;

/// Largest noise level accepted by [`perturb_model`].
pub const MAX_NOISE_LEVEL: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Ssp,
    Greedy,
    Beam,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Greedy, Strategy::Beam, Strategy::Ssp];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Ssp => "ssp",
            Strategy::Greedy => "greedy",
            Strategy::Beam => "beam",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ssp" => Ok(Strategy::Ssp),
            "greedy" => Ok(Strategy::Greedy),
            "beam" => Ok(Strategy::Beam),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub beam_size: usize,
    pub dedup: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            beam_size: 5,
            dedup: false,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::Config("beam_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Runs `strategy` on `model` under `config`.
pub fn plan(model: &MdpModel, strategy: Strategy, config: &PlannerConfig) -> Result<Plan> {
    config.validate()?;
    match (strategy, config.dedup) {
        (Strategy::Ssp, false) => ssp_plan(model).map(|(p, _)| p),
        (Strategy::Ssp, true) => ssp_plan_dedup(model),
        (Strategy::Greedy, false) => greedy_plan(model),
        (Strategy::Greedy, true) => greedy_dedup_plan(model),
        (Strategy::Beam, false) => beam_search_plan(model, config.beam_size),
        (Strategy::Beam, true) => beam_search_dedup_plan(model, config.beam_size),
    }
}

/// Index of the first maximum of `values`.
fn argmax(values: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    values.enumerate().fold(None, |best, (i, v)| match best {
        Some((_, bv)) if v <= bv => best,
        _ => Some((i, v)),
    })
}

/// First index attaining the maximum of `r[a] + c[a]·next` with
/// `c = 1 − quit`. Each lane keeps its first maximum, so the smallest index
/// among lanes holding the overall maximum is the first one in the row.
fn row_argmax(reward: &[f64], quit: &[f64], next: f64) -> (usize, f64) {
    const LANES: usize = 8;
    let value = |r: f64, q: f64| r + (1.0 - q) * next;
    let mut best = [f64::NEG_INFINITY; LANES];
    let mut at = [0usize; LANES];
    let mut r_chunks = reward.chunks_exact(LANES);
    let mut q_chunks = quit.chunks_exact(LANES);
    for (c, (rc, qc)) in (&mut r_chunks).zip(&mut q_chunks).enumerate() {
        for i in 0..LANES {
            let v = value(rc[i], qc[i]);
            let better = v > best[i];
            best[i] = if better { v } else { best[i] };
            at[i] = if better { c * LANES + i } else { at[i] };
        }
    }
    let mut result = (at[0], best[0]);
    for (&v, &a) in best.iter().zip(&at).skip(1) {
        if v > result.1 || (v == result.1 && a < result.0) {
            result = (a, v);
        }
    }
    // shorter rows leave every lane at -inf, so the tail scan starts from index 0
    let tail = reward.len() - r_chunks.remainder().len();
    for (j, (&r, &q)) in r_chunks.remainder().iter().zip(q_chunks.remainder()).enumerate() {
        let v = value(r, q);
        if v > result.1 {
            result = (tail + j, v);
        }
    }
    result
}

/// Backward induction over all steps.
pub fn state_values(model: &MdpModel) -> StateValueTable {
    let horizon = model.horizon();
    let mut values = vec![0.0; horizon + 1];
    let mut argmax_actions = vec![0; horizon];
    for t in (0..horizon).rev() {
        // the last step has no successor; V(s_{T+1}) = 0 makes the row reduce to R
        let (a, v) = row_argmax(model.reward_row(t), model.quit_row(t), values[t + 1]);
        values[t] = v;
        argmax_actions[t] = a;
    }
    StateValueTable {
        values,
        argmax_actions,
    }
}

/// Exact maximizer of expected cumulative reward.
pub fn ssp_plan(model: &MdpModel) -> Result<(Plan, StateValueTable)> {
    let table = state_values(model);
    let plan = Plan::evaluate(model, table.argmax_actions.clone())?;
    Ok((plan, table))
}

/// Per-step argmax of immediate reward; quit probabilities are ignored.
pub fn greedy_plan(model: &MdpModel) -> Result<Plan> {
    let path = (0..model.horizon())
        .map(|t| argmax(model.reward_row(t).iter().copied()).map(|(a, _)| a).unwrap())
        .collect();
    Plan::evaluate(model, path)
}

pub fn greedy_dedup_plan(model: &MdpModel) -> Result<Plan> {
    check_dedup_feasible(model)?;
    let mut used = vec![false; model.num_items()];
    let mut path = Vec::with_capacity(model.horizon());
    for t in 0..model.horizon() {
        let (a, _) = argmax(
            model
                .reward_row(t)
                .iter()
                .zip(&used)
                .map(|(&r, &u)| if u { f64::NEG_INFINITY } else { r }),
        )
        .unwrap();
        used[a] = true;
        path.push(a);
    }
    Plan::evaluate(model, path)
}

struct Prefix {
    path: Vec<usize>,
    score: f64,
    alive: f64,
}

/// A one-item extension of `beam[parent]`, materialized only if it survives.
struct Expansion {
    parent: usize,
    item: usize,
    score: f64,
    alive: f64,
}

fn beam_search(model: &MdpModel, beam_size: usize, dedup: bool) -> Result<Plan> {
    if beam_size == 0 {
        return Err(Error::Config("beam_size must be at least 1".into()));
    }
    if dedup {
        check_dedup_feasible(model)?;
    }
    let mut beam = vec![Prefix {
        path: Vec::new(),
        score: 0.0,
        alive: 1.0,
    }];
    for t in 0..model.horizon() {
        let mut expanded = Vec::with_capacity(beam.len() * model.num_items());
        for (parent, prefix) in beam.iter().enumerate() {
            for a in 0..model.num_items() {
                if dedup && prefix.path.contains(&a) {
                    continue;
                }
                expanded.push(Expansion {
                    parent,
                    item: a,
                    score: prefix.score + prefix.alive * model.reward(t, a),
                    alive: prefix.alive * model.continue_prob(t, a),
                });
            }
        }
        // best score first, then lexicographically smallest path
        expanded.sort_by(|x, y| {
            y.score
                .partial_cmp(&x.score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| beam[x.parent].path.cmp(&beam[y.parent].path))
                .then_with(|| x.item.cmp(&y.item))
        });
        expanded.truncate(beam_size);
        beam = expanded
            .into_iter()
            .map(|e| {
                let mut path = Vec::with_capacity(t + 1);
                path.extend_from_slice(&beam[e.parent].path);
                path.push(e.item);
                Prefix {
                    path,
                    score: e.score,
                    alive: e.alive,
                }
            })
            .collect();
    }
    let best = beam.swap_remove(0);
    Plan::evaluate(model, best.path)
}

/// Left-to-right beam search scoring each prefix by its expected reward.
pub fn beam_search_plan(model: &MdpModel, beam_size: usize) -> Result<Plan> {
    beam_search(model, beam_size, false)
}

pub fn beam_search_dedup_plan(model: &MdpModel, beam_size: usize) -> Result<Plan> {
    beam_search(model, beam_size, true)
}

fn check_dedup_feasible(model: &MdpModel) -> Result<()> {
    if model.num_items() < model.horizon() {
        return Err(Error::InfeasibleDedup {
            horizon: model.horizon(),
            items: model.num_items(),
        });
    }
    Ok(())
}

/// Duplicate-free compromise built on the unconstrained value function.
///
/// Backward phase: with `V` from [`state_values`], each step keeps its
/// `T` best items by `q_t(a) = R[t][a] + (1 − quit[t][a]) · V(s_{t+1})`.
/// Forward phase: each step takes its best candidate not already used.
/// Step `t` keeps `T` candidates and only `t < T` items are used before it,
/// so a candidate always remains. Not optimal under the no-repeat
/// constraint.
pub fn ssp_plan_dedup(model: &MdpModel) -> Result<Plan> {
    check_dedup_feasible(model)?;
    let horizon = model.horizon();
    let table = state_values(model);
    let q_row = |t: usize| -> Vec<f64> {
        let next = table.values[t + 1];
        model
            .reward_row(t)
            .iter()
            .zip(model.quit_row(t))
            .map(|(&r, &quit)| if t + 1 == horizon { r } else { r + (1.0 - quit) * next })
            .collect()
    };

    let ranked: Vec<Vec<usize>> = (0..horizon)
        .map(|t| {
            let q = q_row(t);
            let mut order: Vec<usize> = (0..model.num_items()).collect();
            // stable sort keeps lowest index first among equal q
            order.sort_by(|&a, &b| q[b].partial_cmp(&q[a]).unwrap_or(Ordering::Equal));
            order.truncate(horizon);
            order
        })
        .collect();

    let mut used = vec![false; model.num_items()];
    let mut path = Vec::with_capacity(horizon);
    for order in &ranked {
        let pick = order
            .iter()
            .copied()
            .find(|&a| !used[a])
            .expect("fewer than T items used before this step");
        used[pick] = true;
        path.push(pick);
    }
    Plan::evaluate(model, path)
}

fn checked_path_count(model: &MdpModel, injective: bool) -> Result<u64> {
    let k = model.num_items() as u64;
    let mut count: u64 = 1;
    for t in 0..model.horizon() as u64 {
        let factor = if injective { k.saturating_sub(t) } else { k };
        count = count
            .checked_mul(factor)
            .filter(|&c| c <= BRUTE_FORCE_LIMIT)
            .ok_or_else(|| {
                Error::Size(format!(
                    "{}^{} paths exceed the enumeration limit of {BRUTE_FORCE_LIMIT}",
                    k,
                    model.horizon()
                ))
            })?;
    }
    Ok(count)
}

/// Exhaustive search over all `K^T` paths; first maximum in lexicographic order wins.
pub fn brute_force_plan(model: &MdpModel) -> Result<Plan> {
    checked_path_count(model, false)?;
    enumerate_best(model, false)
}

/// Exhaustive search over paths without repeated items.
pub fn brute_force_dedup_plan(model: &MdpModel) -> Result<Plan> {
    check_dedup_feasible(model)?;
    checked_path_count(model, true)?;
    enumerate_best(model, true)
}

fn enumerate_best(model: &MdpModel, injective: bool) -> Result<Plan> {
    let (t_len, k) = (model.horizon(), model.num_items());
    let mut path = vec![0usize; t_len];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let valid = !injective || {
            let mut seen = vec![false; k];
            path.iter().all(|&a| !std::mem::replace(&mut seen[a], true))
        };
        if valid {
            let (ipv, _) = ipv_bl_unchecked(model, &path);
            if best.as_ref().is_none_or(|(b, _)| ipv > *b) {
                best = Some((ipv, path.clone()));
            }
        }
        // odometer increment, last position fastest => lexicographic order
        let mut pos = t_len;
        loop {
            if pos == 0 {
                let (_, best_path) = best.expect("at least one path enumerated");
                return Plan::evaluate(model, best_path);
            }
            pos -= 1;
            path[pos] += 1;
            if path[pos] < k {
                break;
            }
            path[pos] = 0;
        }
    }
}

/// Adds independent `Uniform(−0.02·m, 0.02·m)` noise to every reward and
/// quit entry, clamping back into `[0, 1]`. `m = 0` returns an exact copy.
pub fn perturb_model(model: &MdpModel, level: u32, seed: u64) -> Result<MdpModel> {
    if level > MAX_NOISE_LEVEL {
        return Err(Error::Domain(format!(
            "noise level {level} outside 0..={MAX_NOISE_LEVEL}"
        )));
    }
    if level == 0 {
        return Ok(model.clone());
    }
    let half_width = 0.02 * f64::from(level);
    let noise = Uniform::new(-half_width, half_width).expect("positive width");
    let mut rng = rng_from(seed);
    Ok(model.map_entries(|v| v + rng.sample(noise)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::expected_ipv;
    use crate::mdp::fixtures::two_step;
    use proptest::prelude::*;
    use super::Strategy;
    use proptest::strategy::Strategy as _;
    use rand::Rng;

    const A: usize = 0;
    const B: usize = 1;

    #[test]
    fn row_argmax_takes_the_first_maximum_across_lanes_and_tail() {
        let quit = vec![0.0; 19];
        let row = |hits: &[usize]| {
            let mut r = vec![0.1; 19];
            for &h in hits {
                r[h] = 0.9;
            }
            r
        };
        // 8 sits in lane 0, ahead of lane 5 in lane order but later in the row
        assert_eq!(row_argmax(&row(&[5, 8]), &quit, 0.5).0, 5);
        assert_eq!(row_argmax(&row(&[11, 3, 17]), &quit, 0.5).0, 3);
        assert_eq!(row_argmax(&row(&[17, 18]), &quit, 0.5).0, 17);
        assert_eq!(row_argmax(&row(&[15, 16]), &quit, 0.5).0, 15);
        assert_eq!(row_argmax(&[0.2, 0.2, 0.1], &[0.0; 3], 0.0), (0, 0.2));
        for k in 1..40 {
            let r: Vec<f64> = (0..k).map(|i| ((i * 7) % 5) as f64 / 10.0).collect();
            let expected = argmax(r.iter().copied()).unwrap().0;
            assert_eq!(row_argmax(&r, &vec![0.3; k], 1.0).0, expected, "k = {k}");
        }
    }

    fn random_model(seed: u64, horizon: usize, items: usize) -> MdpModel {
        let mut rng = rng_from(seed);
        let reward = (0..horizon * items).map(|_| rng.random::<f64>()).collect();
        let quit = (0..horizon * items).map(|_| rng.random::<f64>()).collect();
        MdpModel::from_flat(horizon, (0..items).map(|i| format!("i{i}")).collect(), reward, quit).unwrap()
    }

    #[test]
    fn two_step_worked_example() {
        let m = two_step();
        let (ssp, table) = ssp_plan(&m).unwrap();
        assert_eq!(ssp.path, vec![B, A]);
        assert!((ssp.expected_ipv - 0.75).abs() < 1e-12);
        assert!((table.values[0] - 0.75).abs() < 1e-12);
        assert_eq!(table.values[1], 0.5);
        assert_eq!(table.absorbing_value(), 0.0);

        let greedy = greedy_plan(&m).unwrap();
        assert_eq!(greedy.path, vec![A, A]);
        assert!((greedy.expected_ipv - 0.70).abs() < 1e-12);

        let brute = brute_force_plan(&m).unwrap();
        assert_eq!(brute.path, vec![B, A]);

        let beam = beam_search_plan(&m, 2).unwrap();
        assert_eq!(beam.path, vec![B, A]);
        assert!((beam.expected_ipv - 0.75).abs() < 1e-12);
    }

    #[test]
    fn two_step_expansion_scores() {
        let m = two_step();
        let scores: Vec<f64> = [[A, A], [A, B], [B, A], [B, B]]
            .iter()
            .map(|p| expected_ipv(&m, p).unwrap())
            .collect();
        for (got, want) in scores.iter().zip([0.70, 0.64, 0.75, 0.63]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn certain_quit_reduces_to_per_step_argmax() {
        let m = MdpModel::with_index_ids(
            &[vec![0.1, 0.7, 0.3], vec![0.9, 0.2, 0.4], vec![0.3, 0.3, 0.8]],
            &vec![vec![1.0; 3]; 3],
        )
        .unwrap();
        let (plan, _) = ssp_plan(&m).unwrap();
        assert_eq!(plan.path, vec![1, 0, 2]);
        assert_eq!(plan.expected_ipv, 0.7);
    }

    #[test]
    fn single_item_is_forced() {
        let m = MdpModel::with_index_ids(&[vec![0.3], vec![0.6], vec![0.2]], &vec![vec![0.5]; 3]).unwrap();
        let (plan, _) = ssp_plan(&m).unwrap();
        assert_eq!(plan.path, vec![0, 0, 0]);
        assert!((plan.expected_ipv - expected_ipv(&m, &[0, 0, 0]).unwrap()).abs() < 1e-12);
        assert_eq!(brute_force_plan(&m).unwrap().path, vec![0, 0, 0]);
    }

    #[test]
    fn greedy_matches_ssp_when_quit_is_item_independent() {
        let mut rng = rng_from(11);
        let reward: Vec<Vec<f64>> = (0..4).map(|_| (0..5).map(|_| rng.random()).collect()).collect();
        let quit: Vec<Vec<f64>> = (0..4).map(|_| vec![rng.random(); 5]).collect();
        let m = MdpModel::with_index_ids(&reward, &quit).unwrap();
        let greedy = greedy_plan(&m).unwrap();
        let (ssp, _) = ssp_plan(&m).unwrap();
        assert_eq!(greedy.path, ssp.path);
        assert_eq!(greedy.expected_ipv, ssp.expected_ipv);
    }

    #[test]
    fn equal_rewards_pick_lowest_index() {
        let m = MdpModel::with_index_ids(&vec![vec![0.4; 3]; 3], &vec![vec![0.2, 0.5, 0.1]; 3]).unwrap();
        let greedy = greedy_plan(&m).unwrap();
        assert_eq!(greedy.path, vec![0, 0, 0]);
        assert!((greedy.expected_ipv - expected_ipv(&m, &[0, 0, 0]).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn beam_width_one_is_greedy() {
        for seed in 0..20 {
            let m = random_model(seed, 5, 6);
            assert_eq!(beam_search_plan(&m, 1).unwrap().path, greedy_plan(&m).unwrap().path);
        }
    }

    #[test]
    fn exhaustive_beam_matches_brute_force() {
        for seed in 0..30 {
            let (t, k) = (2 + (seed as usize % 3), 2 + (seed as usize % 3));
            let m = random_model(100 + seed, t, k);
            let width = k.pow(t as u32);
            let beam = beam_search_plan(&m, width).unwrap();
            let brute = brute_force_plan(&m).unwrap();
            assert_eq!(beam.expected_ipv, brute.expected_ipv);
            assert_eq!(beam.path, brute.path);
        }
    }

    #[test]
    fn brute_force_guard() {
        let m = random_model(1, 10, 5);
        assert!(matches!(brute_force_plan(&m), Err(Error::Size(_))));
    }

    #[test]
    fn zero_beam_rejected() {
        assert!(matches!(beam_search_plan(&two_step(), 0), Err(Error::Config(_))));
    }

    #[test]
    fn dedup_infeasible_when_too_few_items() {
        let m = random_model(3, 4, 3);
        for result in [
            ssp_plan_dedup(&m),
            greedy_dedup_plan(&m),
            beam_search_dedup_plan(&m, 3),
            brute_force_dedup_plan(&m),
        ] {
            assert!(matches!(result, Err(Error::InfeasibleDedup { horizon: 4, items: 3 })));
        }
    }

    #[test]
    fn greedy_dedup_forced_exclusion() {
        let m = MdpModel::with_index_ids(&vec![vec![0.9, 0.1]; 2], &vec![vec![0.3, 0.3]; 2]).unwrap();
        assert_eq!(greedy_dedup_plan(&m).unwrap().path, vec![0, 1]);
    }

    #[test]
    fn dedup_ssp_when_one_item_dominates() {
        // item 0 is best at both steps; step 2 must settle for its runner-up
        let m = MdpModel::with_index_ids(
            &[vec![0.8, 0.3, 0.5], vec![0.9, 0.6, 0.2]],
            &[vec![0.1, 0.4, 0.5], vec![1.0; 3]],
        )
        .unwrap();
        let (unconstrained, _) = ssp_plan(&m).unwrap();
        assert_eq!(unconstrained.path, vec![0, 0]);
        let dedup = ssp_plan_dedup(&m).unwrap();
        assert_eq!(dedup.path, vec![0, 1]);
        let brute = brute_force_dedup_plan(&m).unwrap();
        assert_eq!(dedup.path, brute.path);
        assert!((dedup.expected_ipv - brute.expected_ipv).abs() < 1e-12);
    }

    #[test]
    fn dedup_symmetric_items() {
        let m = MdpModel::with_index_ids(&vec![vec![0.3; 4]; 3], &vec![vec![0.4; 4]; 3]).unwrap();
        let plan = ssp_plan_dedup(&m).unwrap();
        assert!(plan.is_injective());
        assert_eq!(plan.expected_ipv, brute_force_dedup_plan(&m).unwrap().expected_ipv);
    }

    #[test]
    fn dedup_ssp_beats_dedup_greedy_on_average() {
        let (mut ssp_total, mut greedy_total) = (0.0, 0.0);
        for i in 0..200 {
            let m = random_model(crate::rng::entity_seed(7, 99, i), 3, 5);
            ssp_total += ssp_plan_dedup(&m).unwrap().expected_ipv;
            greedy_total += greedy_dedup_plan(&m).unwrap().expected_ipv;
        }
        assert!(ssp_total > greedy_total, "{ssp_total} <= {greedy_total}");
    }

    #[test]
    fn exhaustive_dedup_beam_matches_dedup_brute_force() {
        for seed in 0..20 {
            let m = random_model(500 + seed, 3, 4);
            let beam = beam_search_dedup_plan(&m, 24).unwrap();
            let brute = brute_force_dedup_plan(&m).unwrap();
            assert_eq!(beam.path, brute.path);
        }
    }

    #[test]
    fn dedup_plans_are_injective() {
        for seed in 0..200 {
            let m = random_model(1_000 + seed, 1 + seed as usize % 6, 6 + seed as usize % 4);
            assert!(ssp_plan_dedup(&m).unwrap().is_injective());
            assert!(greedy_dedup_plan(&m).unwrap().is_injective());
            assert!(beam_search_dedup_plan(&m, 3).unwrap().is_injective());
        }
    }

    #[test]
    fn perturbation_levels() {
        let m = random_model(5, 4, 6);
        assert_eq!(perturb_model(&m, 0, 9).unwrap(), m);
        let noisy = perturb_model(&m, 10, 9).unwrap();
        for (a, b) in m.reward_flat().iter().zip(noisy.reward_flat()) {
            assert!((a - b).abs() <= 0.2 + 1e-12);
            assert!((0.0..=1.0).contains(b));
        }
        for (a, b) in m.quit_flat().iter().zip(noisy.quit_flat()) {
            assert!((a - b).abs() <= 0.2 + 1e-12);
        }
        assert_ne!(noisy, m);
        assert_eq!(perturb_model(&m, 10, 9).unwrap(), noisy);
        assert!(perturb_model(&m, 11, 9).is_err());
    }

    #[test]
    fn perturbation_clamps() {
        let m = MdpModel::with_index_ids(&[vec![0.99]], &[vec![0.01]]).unwrap();
        let bumped = m.map_entries(|v| v + 0.05);
        assert_eq!(bumped.reward(0, 0), 1.0);
        let lowered = m.map_entries(|v| v - 0.05);
        assert_eq!(lowered.quit(0, 0), 0.0);
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("SSP".parse::<Strategy>().unwrap(), Strategy::Ssp);
        assert!("dp".parse::<Strategy>().is_err());
        assert_eq!(serde_json::to_string(&Strategy::Beam).unwrap(), "\"beam\"");
    }

    fn arb_model() -> impl proptest::strategy::Strategy<Value = MdpModel> {
        (1usize..6, 1usize..5, any::<u64>()).prop_map(|(t, k, seed)| random_model(seed, t, k))
    }

    proptest! {
        #[test]
        fn ssp_is_exact_and_dominates(m in arb_model()) {
            let (ssp, table) = ssp_plan(&m).unwrap();
            let brute = brute_force_plan(&m).unwrap();
            prop_assert!((ssp.expected_ipv - brute.expected_ipv).abs() < 1e-9);
            prop_assert!((ssp.expected_ipv - table.values[0]).abs() < 1e-9);
            let beam = beam_search_plan(&m, 3).unwrap();
            prop_assert!(ssp.expected_ipv >= beam.expected_ipv - 1e-9);
            prop_assert!(ssp.expected_ipv >= greedy_plan(&m).unwrap().expected_ipv - 1e-9);
        }

        #[test]
        fn bellman_consistency(m in arb_model()) {
            let table = state_values(&m);
            let last = m.horizon() - 1;
            let best_last = m.reward_row(last).iter().copied().fold(f64::MIN, f64::max);
            prop_assert_eq!(table.values[last], best_last);
            for t in 0..last {
                let a = table.argmax_actions[t];
                let rhs = m.reward(t, a) + m.continue_prob(t, a) * table.values[t + 1];
                prop_assert!((table.values[t] - rhs).abs() < 1e-12);
            }
            prop_assert!(table.values.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn policy_invariant_under_reward_scaling(m in arb_model(), scale in 0.05f64..1.0) {
            let scaled = MdpModel::from_flat(
                m.horizon(), m.item_ids().to_vec(),
                m.reward_flat().iter().map(|v| v * scale).collect(),
                m.quit_flat().to_vec(),
            ).unwrap();
            prop_assert_eq!(state_values(&m).argmax_actions, state_values(&scaled).argmax_actions);
        }
    }
}
