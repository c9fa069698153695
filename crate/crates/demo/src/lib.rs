//! Browser bindings for the session planner. Every export takes plain numbers
//! or a JSON string and returns a JSON string; `www/index.html` draws the result.

use serde_json::{json, Value};
use session_planner::evaluation::{run_noise_sweep, run_offline_comparison, EvalMode, EvalOptions, Scenario};
use session_planner::mdp::survival_distribution;
use session_planner::planner::{plan, PlannerConfig, Strategy};
use session_planner::simulator::{generate_ground_truth, generate_users, produce_mdp, GroundTruth, ScoreSource, SimConfig, UserContext};
use session_planner::MdpModel;
use wasm_bindgen::prelude::*;

/// Kept small so a page interaction stays well under a second.
fn world(seed: u64, num_users: usize, rho: f64) -> Result<(GroundTruth, Vec<UserContext>), String> {
    let cfg = SimConfig {
        seed,
        num_users,
        rho,
        catalog_size: 400,
        candidates_per_user: 60,
        ..Default::default()
    };
    let gt = generate_ground_truth(&cfg).map_err(|e| e.to_string())?;
    let users = generate_users(&gt, &cfg).map_err(|e| e.to_string())?;
    Ok((gt, users))
}

fn scenario<'a>(gt: &'a GroundTruth, users: &'a [UserContext]) -> Scenario<'a> {
    Scenario {
        catalog: &gt.catalog,
        users,
        source: ScoreSource::Truth(gt),
        truth: Some(gt),
    }
}

/// Strategy table plus the mean survival curve `P(τ ≥ t)` of each strategy.
pub fn strategy_comparison(seed: u64, num_users: usize, horizon: usize, rho: f64, beam_size: usize) -> Result<Value, String> {
    let (gt, users) = world(seed, num_users, rho)?;
    let options = EvalOptions {
        horizons: vec![horizon],
        beam_size,
        mode: EvalMode::GroundTruth,
        ..Default::default()
    };
    let report = run_offline_comparison(&scenario(&gt, &users), &options, seed).map_err(|e| e.to_string())?;

    let config = PlannerConfig { beam_size, dedup: false };
    let mut curves = Vec::new();
    for strategy in options.strategies.iter().copied() {
        let mut mean = vec![0.0; horizon];
        for user in &users {
            let model = produce_mdp(&gt.catalog, user, ScoreSource::Truth(&gt), horizon).map_err(|e| e.to_string())?;
            let p = plan(&model, strategy, &config).map_err(|e| e.to_string())?;
            let survival = survival_distribution(&model, &p.path).map_err(|e| e.to_string())?;
            for (m, s) in mean.iter_mut().zip(survival) {
                *m += s;
            }
        }
        mean.iter_mut().for_each(|m| *m /= users.len() as f64);
        curves.push(json!({ "strategy": strategy.name(), "survival": mean }));
    }
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| json!({ "label": r.label(beam_size), "ipv": r.mean_ipv, "bl": r.mean_bl, "ctr": r.ctr }))
        .collect();
    Ok(json!({ "rows": rows, "curves": curves }))
}

/// Revenue of each strategy as the planning model gets noisier.
pub fn noise_curves(seed: u64, num_users: usize, horizon: usize, noise_max: u32) -> Result<Value, String> {
    let (gt, users) = world(seed, num_users, SimConfig::default().rho)?;
    let options = EvalOptions {
        mode: EvalMode::GroundTruth,
        noise_horizon: horizon,
        noise_max,
        ..Default::default()
    };
    let curves = run_noise_sweep(&scenario(&gt, &users), &options, seed).map_err(|e| e.to_string())?;
    let series: Vec<Value> = options
        .strategies
        .iter()
        .map(|&s| {
            let revenue: Vec<f64> = (0..=noise_max).filter_map(|m| curves.revenue(s, m)).collect();
            json!({ "strategy": s.name(), "revenue": revenue })
        })
        .collect();
    Ok(json!({ "m": (0..=noise_max).collect::<Vec<_>>(), "series": series }))
}

/// Plans a hand-written model with every strategy.
pub fn plan_model(model_json: &str, beam_size: usize) -> Result<Value, String> {
    let model: MdpModel = serde_json::from_str(model_json).map_err(|e| e.to_string())?;
    let config = PlannerConfig { beam_size, dedup: false };
    config.validate().map_err(|e| e.to_string())?;
    let plans = Strategy::ALL
        .iter()
        .map(|&s| {
            let p = plan(&model, s, &config).map_err(|e| e.to_string())?;
            let survival = survival_distribution(&model, &p.path).map_err(|e| e.to_string())?;
            let record = p.to_record(&model, s.name(), (s == Strategy::Beam).then_some(beam_size));
            Ok(json!({ "plan": record, "survival": survival }))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(json!({ "plans": plans }))
}

fn to_js(result: Result<Value, String>) -> Result<String, JsValue> {
    result.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = compareStrategies)]
pub fn compare_strategies_js(seed: u32, num_users: u32, horizon: u32, rho: f64, beam_size: u32) -> Result<String, JsValue> {
    to_js(strategy_comparison(seed.into(), num_users as usize, horizon as usize, rho, beam_size as usize))
}

#[wasm_bindgen(js_name = noiseSweep)]
pub fn noise_sweep_js(seed: u32, num_users: u32, horizon: u32, noise_max: u32) -> Result<String, JsValue> {
    to_js(noise_curves(seed.into(), num_users as usize, horizon as usize, noise_max))
}

#[wasm_bindgen(js_name = planModel)]
pub fn plan_model_js(model_json: &str, beam_size: u32) -> Result<String, JsValue> {
    to_js(plan_model(model_json, beam_size as usize))
}
