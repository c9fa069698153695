//! The personalized session MDP and its closed-form expectations.
//!
//! States are the step indices `1..=T` plus an absorbing state. From step
//! `t < T` the user either moves to `t + 1` or is absorbed; from `T` the
//! user is always absorbed. The transition structure is therefore fully
//! described by one quit probability per `(step, item)` and is never
//! materialized as a dense tensor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-user MDP: `reward[t][a]` and `quit[t][a]` for `t < T`, `a < K`.
///
/// Both matrices are stored row-major. The last quit row is kept for
/// uniformity but never enters a survival product, since step `T` always
/// terminates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpModelRepr", into = "MdpModelRepr")]
pub struct MdpModel {
    horizon: usize,
    num_items: usize,
    item_ids: Vec<String>,
    reward: Vec<f64>,
    quit: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpModelRepr {
    horizon: usize,
    num_items: usize,
    item_ids: Vec<String>,
    reward: Vec<Vec<f64>>,
    quit: Vec<Vec<f64>>,
}

impl TryFrom<MdpModelRepr> for MdpModel {
    type Error = Error;

    fn try_from(repr: MdpModelRepr) -> Result<Self> {
        let model = MdpModel::from_rows(repr.item_ids, &repr.reward, &repr.quit)?;
        if model.horizon != repr.horizon || model.num_items != repr.num_items {
            return Err(Error::InvalidModel(format!(
                "declared shape {}x{} does not match matrices {}x{}",
                repr.horizon, repr.num_items, model.horizon, model.num_items
            )));
        }
        Ok(model)
    }
}

impl From<MdpModel> for MdpModelRepr {
    fn from(m: MdpModel) -> Self {
        MdpModelRepr {
            horizon: m.horizon,
            num_items: m.num_items,
            reward: m.reward.chunks(m.num_items).map(<[f64]>::to_vec).collect(),
            quit: m.quit.chunks(m.num_items).map(<[f64]>::to_vec).collect(),
            item_ids: m.item_ids,
        }
    }
}

fn check_probabilities(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(Error::InvalidModel(format!(
            "{name} entry {i} = {} is not a probability",
            values[i]
        ))),
        None => Ok(()),
    }
}

impl MdpModel {
    /// Builds a model from row-major flat matrices of shape `horizon × item_ids.len()`.
    pub fn from_flat(
        horizon: usize,
        item_ids: Vec<String>,
        reward: Vec<f64>,
        quit: Vec<f64>,
    ) -> Result<Self> {
        let num_items = item_ids.len();
        if horizon == 0 || num_items == 0 {
            return Err(Error::InvalidModel(format!(
                "horizon ({horizon}) and item count ({num_items}) must be positive"
            )));
        }
        let cells = horizon * num_items;
        if reward.len() != cells || quit.len() != cells {
            return Err(Error::InvalidModel(format!(
                "expected {cells} entries per matrix, got reward={} quit={}",
                reward.len(),
                quit.len()
            )));
        }
        check_probabilities("reward", &reward)?;
        check_probabilities("quit", &quit)?;
        Ok(Self {
            horizon,
            num_items,
            item_ids,
            reward,
            quit,
        })
    }

    pub fn from_rows(item_ids: Vec<String>, reward: &[Vec<f64>], quit: &[Vec<f64>]) -> Result<Self> {
        let k = item_ids.len();
        if reward.len() != quit.len() {
            return Err(Error::InvalidModel(format!(
                "reward has {} rows but quit has {}",
                reward.len(),
                quit.len()
            )));
        }
        if let Some(row) = reward.iter().chain(quit).find(|r| r.len() != k) {
            return Err(Error::InvalidModel(format!(
                "row of length {} does not match {k} item ids",
                row.len()
            )));
        }
        Self::from_flat(reward.len(), item_ids, reward.concat(), quit.concat())
    }

    /// Convenience constructor naming items `0..K`.
    pub fn with_index_ids(reward: &[Vec<f64>], quit: &[Vec<f64>]) -> Result<Self> {
        let k = reward.first().map_or(0, Vec::len);
        Self::from_rows((0..k).map(|i| i.to_string()).collect(), reward, quit)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    /// Zero-based step `t`.
    #[inline]
    pub fn reward(&self, t: usize, a: usize) -> f64 {
        self.reward[t * self.num_items + a]
    }

    #[inline]
    pub fn quit(&self, t: usize, a: usize) -> f64 {
        self.quit[t * self.num_items + a]
    }

    #[inline]
    pub fn continue_prob(&self, t: usize, a: usize) -> f64 {
        1.0 - self.quit(t, a)
    }

    pub fn reward_row(&self, t: usize) -> &[f64] {
        &self.reward[t * self.num_items..(t + 1) * self.num_items]
    }

    pub fn quit_row(&self, t: usize) -> &[f64] {
        &self.quit[t * self.num_items..(t + 1) * self.num_items]
    }

    pub fn reward_flat(&self) -> &[f64] {
        &self.reward
    }

    pub fn quit_flat(&self) -> &[f64] {
        &self.quit
    }

    /// Applies `f` to every reward and quit entry (reward first, row-major),
    /// clamping results into `[0, 1]`.
    pub fn map_entries(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let mut clamp = |v: f64| f(v).clamp(0.0, 1.0);
        let reward = self.reward.iter().map(|&v| clamp(v)).collect();
        let quit = self.quit.iter().map(|&v| clamp(v)).collect();
        Self {
            reward,
            quit,
            ..self.clone()
        }
    }

    pub fn validate_path(&self, path: &[usize]) -> Result<()> {
        if path.is_empty() {
            return Err(Error::InvalidPath("path is empty".into()));
        }
        if path.len() > self.horizon {
            return Err(Error::InvalidPath(format!(
                "path length {} exceeds horizon {}",
                path.len(),
                self.horizon
            )));
        }
        if let Some(&a) = path.iter().find(|&&a| a >= self.num_items) {
            return Err(Error::InvalidPath(format!(
                "item index {a} out of range for {} items",
                self.num_items
            )));
        }
        Ok(())
    }

    /// Maps item ids back to column indices.
    pub fn path_from_ids<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| {
                self.item_ids
                    .iter()
                    .position(|x| x == id.as_ref())
                    .ok_or_else(|| Error::InvalidPath(format!("unknown item id {:?}", id.as_ref())))
            })
            .collect()
    }
}

/// `P(τ ≥ t)` for `t = 1..=L`: the probability the user is still browsing
/// when the `t`-th item is shown.
pub fn survival_distribution(model: &MdpModel, path: &[usize]) -> Result<Vec<f64>> {
    model.validate_path(path)?;
    let mut alive = 1.0;
    Ok(path
        .iter()
        .enumerate()
        .map(|(t, &a)| {
            let here = alive;
            alive *= model.continue_prob(t, a);
            here
        })
        .collect())
}

/// Expected cumulative reward: `Σ_t R[t][a_t] · Π_{i<t} (1 − quit[i][a_i])`.
pub fn expected_ipv(model: &MdpModel, path: &[usize]) -> Result<f64> {
    model.validate_path(path)?;
    Ok(ipv_bl_unchecked(model, path).0)
}

/// Expected browse length: `Σ_t Π_{i<t} (1 − quit[i][a_i])`.
pub fn expected_bl(model: &MdpModel, path: &[usize]) -> Result<f64> {
    model.validate_path(path)?;
    Ok(ipv_bl_unchecked(model, path).1)
}

pub fn expected_ctr(ipv: f64, bl: f64) -> Result<f64> {
    if bl > 0.0 {
        Ok(ipv / bl)
    } else {
        Err(Error::Domain(format!("browse length must be positive, got {bl}")))
    }
}

pub(crate) fn ipv_bl_unchecked(model: &MdpModel, path: &[usize]) -> (f64, f64) {
    let (mut ipv, mut bl, mut alive) = (0.0, 0.0, 1.0);
    for (t, &a) in path.iter().enumerate() {
        ipv += alive * model.reward(t, a);
        bl += alive;
        alive *= model.continue_prob(t, a);
    }
    (ipv, bl)
}

/// An item path with its expected engagement under the generating model.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub path: Vec<usize>,
    pub expected_ipv: f64,
    pub expected_bl: f64,
    pub expected_ctr: f64,
}

impl Plan {
    /// Scores `path` under `model`.
    pub fn evaluate(model: &MdpModel, path: Vec<usize>) -> Result<Self> {
        model.validate_path(&path)?;
        let (ipv, bl) = ipv_bl_unchecked(model, &path);
        Ok(Self {
            path,
            expected_ipv: ipv,
            expected_bl: bl,
            expected_ctr: expected_ctr(ipv, bl)?,
        })
    }

    pub fn is_injective(&self) -> bool {
        let mut seen = self.path.clone();
        seen.sort_unstable();
        seen.windows(2).all(|w| w[0] != w[1])
    }

    pub fn to_record(&self, model: &MdpModel, strategy: &str, beam_size: Option<usize>) -> PlanRecord {
        PlanRecord {
            path: self.path.iter().map(|&a| model.item_ids[a].clone()).collect(),
            expected_ipv: self.expected_ipv,
            expected_bl: self.expected_bl,
            expected_ctr: self.expected_ctr,
            strategy: strategy.to_string(),
            beam_size,
        }
    }
}

/// Serialized plan: item ids instead of column indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub path: Vec<String>,
    pub expected_ipv: f64,
    pub expected_bl: f64,
    pub expected_ctr: f64,
    pub strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam_size: Option<usize>,
}

/// Optimal state values `V*(s_1..s_T)` followed by `V*(s_A) = 0`, and the
/// optimal action at each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateValueTable {
    pub values: Vec<f64>,
    pub argmax_actions: Vec<usize>,
}

impl StateValueTable {
    pub fn absorbing_value(&self) -> f64 {
        *self.values.last().expect("table always holds the absorbing state")
    }

    /// `V*(s_{t+1})` for zero-based step `t`.
    pub fn value(&self, t: usize) -> f64 {
        self.values[t]
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::MdpModel;

    /// Two steps, two items: A = (0.5 reward, 0.6 quit), B = (0.35, 0.2).
    pub fn two_step() -> MdpModel {
        MdpModel::from_rows(
            vec!["A".into(), "B".into()],
            &[vec![0.5, 0.35], vec![0.5, 0.35]],
            &[vec![0.6, 0.2], vec![1.0, 1.0]],
        )
        .unwrap()
    }
}
