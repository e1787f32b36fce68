//! Instance generators and brute-force oracles shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use dagoff::channel::{sample_state, EnvParams, EnvState};
use dagoff::graph::{Edge, PathSet, TaskGraph};
use dagoff::schedule::{FrequencyAllocation, Instance, OffloadDecision};
use rand::seq::SliceRandom;
use rand::Rng;

/// Random DAG on `m` real tasks: forward edges with probability `p`, then
/// entry edges into every source and exit edges out of every sink.
pub fn random_dag<R: Rng>(rng: &mut R, m: usize, p: f64) -> TaskGraph {
    let mut edges = Vec::new();
    let mut has_pred = vec![false; m + 2];
    let mut has_succ = vec![false; m + 2];
    let bits = |rng: &mut R| 8192.0 * rng.random_range(10.0..400.0);
    for i in 1..=m {
        for j in i + 1..=m {
            if rng.random::<f64>() < p {
                edges.push(Edge { from: i, to: j, data_bits: bits(rng) });
                has_succ[i] = true;
                has_pred[j] = true;
            }
        }
    }
    for k in 1..=m {
        if !has_pred[k] {
            edges.push(Edge { from: 0, to: k, data_bits: bits(rng) });
        }
        if !has_succ[k] {
            edges.push(Edge { from: k, to: m + 1, data_bits: bits(rng) });
        }
    }
    let workloads: Vec<f64> = (0..m).map(|_| rng.random_range(50e6..200e6)).collect();
    TaskGraph::with_real_tasks(&workloads, edges).expect("generator builds valid graphs")
}

/// Every entry-to-exit task sequence, by plain recursion over successor lists
/// sorted ascending.
pub fn brute_force_paths(graph: &TaskGraph) -> Vec<Vec<usize>> {
    fn walk(graph: &TaskGraph, v: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        prefix.push(v);
        if v == graph.exit() {
            out.push(prefix.clone());
        } else {
            let mut next: Vec<usize> = graph.edges().iter().filter(|e| e.from == v).map(|e| e.to).collect();
            next.sort_unstable();
            for w in next {
                walk(graph, w, prefix, out);
            }
        }
        prefix.pop();
    }
    let mut out = Vec::new();
    walk(graph, 0, &mut Vec::new(), &mut out);
    out
}

/// Number of entry-to-exit paths by dynamic programming in reverse topological order.
pub fn count_paths(graph: &TaskGraph) -> u64 {
    let n = graph.task_count();
    let mut count = vec![0u64; n];
    count[graph.exit()] = 1;
    for &v in graph.topological_order().iter().rev() {
        if v != graph.exit() {
            count[v] = graph.edges().iter().filter(|e| e.from == v).map(|e| count[e.to]).sum();
        }
    }
    count[0]
}

/// One-climb test written as a transition count over padded bit strings.
pub fn naive_one_climb(decision: &OffloadDecision, paths: &PathSet) -> bool {
    paths.paths().iter().all(|p| {
        let s: String = p.tasks.iter().map(|&t| if decision.is_offloaded(t) { '1' } else { '0' }).collect();
        s.matches("01").count() <= 1
    })
}

pub fn random_decision<R: Rng>(rng: &mut R, m: usize) -> OffloadDecision {
    OffloadDecision::new((0..m).map(|_| rng.random::<bool>()).collect())
}

/// Decision with exactly `locals` local tasks at random positions.
pub fn decision_with_locals<R: Rng>(rng: &mut R, m: usize, locals: usize) -> OffloadDecision {
    let mut bits = vec![true; m];
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(rng);
    for &i in idx.iter().take(locals) {
        bits[i] = false;
    }
    OffloadDecision::new(bits)
}

pub fn random_state<R: Rng>(rng: &mut R, params: &EnvParams, graph: &TaskGraph) -> EnvState {
    sample_state(params, graph, rng.random())
}

/// Regime in which local frequencies have an interior optimum.
pub fn fast_device_params() -> EnvParams {
    EnvParams { f_peak_hz: 1e9, ..EnvParams::default() }
}

/// Minimum ETC over a grid of `points` log-spaced frequencies in
/// `[f_peak / 10, f_peak]` for every local task.
pub fn grid_min_eta(inst: &Instance<'_>, decision: &OffloadDecision, points: usize) -> f64 {
    let m = decision.len();
    let f_peak = inst.params.f_peak_hz;
    let grid: Vec<f64> = (0..points).map(|k| f_peak / 10.0 * 10f64.powf(k as f64 / (points - 1) as f64)).collect();
    let locals: Vec<usize> = (0..m).filter(|&i| !decision.bits()[i]).collect();
    let mut freqs = vec![0.0; m];
    let mut idx = vec![0usize; locals.len()];
    let mut best = f64::INFINITY;
    loop {
        for (slot, &task) in locals.iter().enumerate() {
            freqs[task] = grid[idx[slot]];
        }
        let eta = inst.etc(decision, &FrequencyAllocation(freqs.clone())).unwrap().eta;
        best = best.min(eta);
        let mut carry = 0;
        while carry < idx.len() {
            idx[carry] += 1;
            if idx[carry] < points {
                break;
            }
            idx[carry] = 0;
            carry += 1;
        }
        if carry == idx.len() {
            return best;
        }
    }
}

/// `(a - b) / |b|`, with the sign telling which side is larger.
pub fn rel_excess(a: f64, b: f64) -> f64 {
    (a - b) / b.abs()
}
