//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export takes and returns JSON strings. The `*_json` functions hold
//! the logic and are callable natively; the `#[wasm_bindgen]` wrappers turn
//! errors into JavaScript exceptions.

use oran_core::environment::ActionSpace;
use oran_core::evaluator::{evaluate, Allocation};
use oran_core::oracle::{enumerate_optimal, search_size};
use oran_core::splitmodel::{catalog, CostParams, SplitId};
use oran_core::substrate::{generate_topology, parse_topology, serialize_topology, TopologySpec};
use oran_core::traffic::{initial_requests, SessionConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Largest search space the page will enumerate.
pub const DEMO_LIMIT: u64 = 200_000;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Generates a topology and returns its nodes, links and text document.
pub fn topology_json(n_rh: usize, n_es: usize, n_rc: usize, split4_prob: f64, seed: u64) -> Result<String, String> {
    let spec = TopologySpec::new(n_rh, n_es, n_rc, split4_prob, seed);
    let g = generate_topology(&spec).map_err(err)?;
    Ok(json!({
        "nodes": g.nodes(),
        "links": g.links(),
        "text": serialize_topology(&g),
        "search_size": search_size(&g),
    })
    .to_string())
}

/// Cross-haul traffic and compute demand of every split for one load.
pub fn split_profile_json(load_mbps: f64) -> Result<String, String> {
    let cat = catalog();
    let rows: Vec<Value> = SplitId::ALL
        .iter()
        .map(|&s| {
            let (du, cu) = cat.compute_demand(s, load_mbps);
            let spec = cat.spec(s);
            Ok(json!({
                "split": s.to_string(),
                "crosshaul_gbps": cat.crosshaul_load(s, load_mbps).map_err(err)?,
                "du_cc": du,
                "cu_cc": cu,
                "delay_bound_ms": spec.crosshaul_delay_bound_ms,
                "needs_direct_link": spec.requires_direct_rh_rc,
            }))
        })
        .collect::<Result<_, String>>()?;
    Ok(Value::Array(rows).to_string())
}

/// Scores a zero-based action vector (splits, then ES orders, then RC
/// orders) on a topology document and seeded requests.
pub fn evaluate_json(topology: &str, action: &str, seed: u64) -> Result<String, String> {
    let g = parse_topology(topology).map_err(err)?;
    let action: Vec<usize> = serde_json::from_str(action).map_err(err)?;
    let alloc: Allocation = ActionSpace::for_graph(&g).decode(&action).map_err(err)?;
    let requests = initial_requests(g.n_rh(), &SessionConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed));
    let ev = evaluate(None, &alloc, &requests, &g, &catalog(), &CostParams::default()).map_err(err)?;
    let reward = oran_core::evaluator::reward(ev.report.n_fail, ev.cost.map_or(0.0, |c| c.total), false, g.n_rh());
    Ok(json!({
        "requests": requests,
        "n_fail": ev.report.n_fail,
        "strictly_feasible": ev.report.is_strictly_feasible(),
        "sla": ev.report.sla,
        "cost": ev.cost,
        "reward": reward,
    })
    .to_string())
}

/// Exact optimum for the seeded requests, refusing large instances.
pub fn oracle_json(topology: &str, seed: u64) -> Result<String, String> {
    let g = parse_topology(topology).map_err(err)?;
    let requests = initial_requests(g.n_rh(), &SessionConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed));
    let res = enumerate_optimal(&g, &requests, None, &catalog(), &CostParams::default(), DEMO_LIMIT).map_err(err)?;
    Ok(json!({
        "action": res.best_alloc.as_ref().map(|a| ActionSpace::for_graph(&g).encode(a)),
        "allocation": res.best_alloc,
        "cost": res.best_cost,
        "feasible_count": res.feasible_count,
        "search_size": res.search_size,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn generate(n_rh: usize, n_es: usize, n_rc: usize, split4_prob: f64, seed: u32) -> Result<String, JsValue> {
    topology_json(n_rh, n_es, n_rc, split4_prob, seed.into()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn split_profile(load_mbps: f64) -> Result<String, JsValue> {
    split_profile_json(load_mbps).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn evaluate_action(topology: &str, action: &str, seed: u32) -> Result<String, JsValue> {
    evaluate_json(topology, action, seed.into()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn solve(topology: &str, seed: u32) -> Result<String, JsValue> {
    oracle_json(topology, seed.into()).map_err(|e| JsValue::from_str(&e))
}
