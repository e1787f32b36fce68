//! Browser demo over the built-in task graphs.
//!
//! Each operation is a plain function returning a JSON string so it can be
//! tested natively; the `#[wasm_bindgen]` wrappers at the bottom only convert
//! errors.

use dagoff::actor::quantize::is_one_climb;
use dagoff::baselines::{all_edge, all_local, exhaustive, gibbs, BaselineResult, GibbsOpts};
use dagoff::channel::sample_state;
use dagoff::rng::stream;
use dagoff::{CriticOpts, EnvParams, Instance, OffloadDecision, PathSet, TaskGraph};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

struct Scenario {
    graph: TaskGraph,
    paths: PathSet,
    params: EnvParams,
}

impl Scenario {
    fn load(name: &str, distance_m: f64) -> Result<Self, String> {
        let graph = TaskGraph::builtin(name).map_err(|e| e.to_string())?;
        let paths = graph.enumerate_paths().map_err(|e| e.to_string())?;
        let params = EnvParams { distance_m, ..EnvParams::default() };
        params.validate().map_err(|e| e.to_string())?;
        Ok(Self { graph, paths, params })
    }

    fn decision(&self, bits: &str) -> Result<OffloadDecision, String> {
        let m = self.graph.real_task_count();
        if bits.len() != m {
            return Err(format!("expected {m} decision bits, got {}", bits.len()));
        }
        bits.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(format!("decision bits must be 0 or 1, got {other:?}")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(OffloadDecision::new)
    }
}

fn bits_string(d: &OffloadDecision) -> String {
    d.bits().iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// Tasks with a drawing layer (longest hop count from the entry) and edges.
pub fn graph_layout(name: &str) -> Result<String, String> {
    let g = TaskGraph::builtin(name).map_err(|e| e.to_string())?;
    let mut layer = vec![0usize; g.task_count()];
    for &v in g.topological_order() {
        for &e in g.outgoing_edges(v) {
            let to = g.edges()[e].to;
            layer[to] = layer[to].max(layer[v] + 1);
        }
    }
    let tasks: Vec<Value> = (0..g.task_count())
        .map(|t| json!({ "id": t, "layer": layer[t], "virtual": g.is_virtual(t), "mcycles": g.workload(t) / 1e6 }))
        .collect();
    let edges: Vec<Value> =
        g.edges().iter().map(|e| json!({ "from": e.from, "to": e.to, "kbytes": e.data_bits / 8192.0 })).collect();
    let paths = g.enumerate_paths().map_err(|e| e.to_string())?.len();
    Ok(json!({ "tasks": tasks, "edges": edges, "paths": paths, "real_tasks": g.real_task_count() }).to_string())
}

/// Optimal device frequencies and the resulting cost for one decision on
/// channel realization `seed`.
pub fn evaluate(name: &str, seed: u64, bits: &str, distance_m: f64) -> Result<String, String> {
    let sc = Scenario::load(name, distance_m)?;
    let d = sc.decision(bits)?;
    let state = sample_state(&sc.params, &sc.graph, seed);
    let inst = Instance::new(&sc.graph, &sc.paths, &sc.params, &state);
    let r = dagoff::critic::solve(&inst, &d, &CriticOpts::default()).map_err(|e| e.to_string())?;
    let freqs_mhz: Vec<Option<f64>> =
        d.bits().iter().zip(&r.freqs.0).map(|(&edge, &f)| (!edge).then_some(f / 1e6)).collect();
    Ok(json!({
        "decision": bits_string(&d),
        "eta": r.eta(),
        "energy_j": r.report.energy_j,
        "completion_s": r.report.completion_s,
        "path_times_s": r.report.per_path_times,
        "critical_path": sc.paths.path(r.report.argmax_path).tasks,
        "freqs_mhz": freqs_mhz,
        "one_climb": is_one_climb(&d, &sc.paths),
        "iterations": r.iterations,
        "converged": r.converged,
    })
    .to_string())
}

fn method_json(r: &BaselineResult) -> Value {
    json!({
        "method": r.name,
        "decision": bits_string(&r.decision),
        "eta": r.eta(),
        "energy_j": r.critic.report.energy_j,
        "completion_s": r.critic.report.completion_s,
    })
}

/// Exhaustive search, Gibbs sampling, all-local and all-edge on one realization.
pub fn compare(name: &str, seed: u64, distance_m: f64) -> Result<String, String> {
    let sc = Scenario::load(name, distance_m)?;
    let state = sample_state(&sc.params, &sc.graph, seed);
    let inst = Instance::new(&sc.graph, &sc.paths, &sc.params, &state);
    let opts = CriticOpts::default();
    let err = |e: dagoff::baselines::BaselineError| e.to_string();
    let mut rows = vec![
        method_json(&exhaustive(&inst, &opts).map_err(err)?),
        method_json(&gibbs(&inst, &opts, &GibbsOpts::default(), &mut stream(seed, 1)).map_err(err)?.result),
        method_json(&all_local(&inst, &opts).map_err(err)?),
        method_json(&all_edge(&inst, &opts).map_err(err)?),
    ];
    let best = rows[0]["eta"].as_f64().unwrap_or(f64::NAN);
    for row in &mut rows {
        let eta = row["eta"].as_f64().unwrap_or(f64::NAN);
        row["gap"] = json!((eta - best) / best);
    }
    Ok(Value::Array(rows).to_string())
}

/// Cost of a fixed decision and of the exhaustive optimum as the device
/// moves away from the access point. The fading draw is the same at every
/// distance; only the mean gain changes.
pub fn distance_sweep(name: &str, seed: u64, bits: &str) -> Result<String, String> {
    let base = Scenario::load(name, 20.0)?;
    let d = base.decision(bits)?;
    let reference = sample_state(&base.params, &base.graph, seed);
    let base_gain = dagoff::channel::mean_gain(&base.params);
    let opts = CriticOpts::default();
    let mut points = Vec::new();
    for step in 1..=16 {
        let distance = 5.0 * step as f64;
        let params = EnvParams { distance_m: distance, ..base.params.clone() };
        let scale = dagoff::channel::mean_gain(&params) / base_gain;
        let mut state = reference.clone();
        state.h_up.iter_mut().chain(state.h_down.iter_mut()).for_each(|h| *h *= scale);
        let inst = Instance::new(&base.graph, &base.paths, &params, &state);
        let fixed = dagoff::critic::solve(&inst, &d, &opts).map_err(|e| e.to_string())?;
        let best = exhaustive(&inst, &opts).map_err(|e| e.to_string())?;
        points.push(json!({
            "distance_m": distance,
            "eta": fixed.eta(),
            "optimal_eta": best.eta(),
            "optimal_decision": bits_string(&best.decision),
        }));
    }
    Ok(Value::Array(points).to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = graphLayout)]
pub fn graph_layout_js(name: &str) -> Result<String, JsValue> {
    js(graph_layout(name))
}

#[wasm_bindgen(js_name = evaluate)]
pub fn evaluate_js(name: &str, seed: u32, bits: &str, distance_m: f64) -> Result<String, JsValue> {
    js(evaluate(name, seed.into(), bits, distance_m))
}

#[wasm_bindgen(js_name = compare)]
pub fn compare_js(name: &str, seed: u32, distance_m: f64) -> Result<String, JsValue> {
    js(compare(name, seed.into(), distance_m))
}

#[wasm_bindgen(js_name = distanceSweep)]
pub fn distance_sweep_js(name: &str, seed: u32, bits: &str) -> Result<String, JsValue> {
    js(distance_sweep(name, seed.into(), bits))
}
