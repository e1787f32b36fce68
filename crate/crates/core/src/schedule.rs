//! Completion time, device energy and the energy-time cost (ETC) of an
//! offloading decision with given device CPU frequencies.
//!
//! Both the device and the edge server are modelled with unlimited cores, so
//! concurrently ready tasks never queue.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{downlink_rate, uplink_rate, EnvParams, EnvState};
use crate::graph::{PathSet, TaskGraph, TaskId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("local task {task} has non-positive CPU frequency {freq}")]
    ZeroFrequency { task: TaskId, freq: f64 },
    #[error("{what} has length {got}, expected {expected}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
}

/// Binary placement of the real tasks: `true` runs the task on the edge
/// server. Virtual tasks are always local and are not stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OffloadDecision(Vec<bool>);

impl OffloadDecision {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn all_local(m: usize) -> Self {
        Self(vec![false; m])
    }

    pub fn all_edge(m: usize) -> Self {
        Self(vec![true; m])
    }

    /// Bit `i` of `code` gives the placement of real task `i + 1`.
    pub fn from_code(code: u64, m: usize) -> Self {
        Self((0..m).map(|i| code >> i & 1 == 1).collect())
    }

    pub fn code(&self) -> u64 {
        self.0.iter().enumerate().fold(0, |acc, (i, &b)| acc | (u64::from(b) << i))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.0
    }

    /// Placement of graph task `task`; virtual tasks report `false`.
    pub fn is_offloaded(&self, task: TaskId) -> bool {
        task >= 1 && self.0.get(task - 1).copied().unwrap_or(false)
    }

    pub fn local_count(&self) -> usize {
        self.0.iter().filter(|&&b| !b).count()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

impl fmt::Display for OffloadDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Device CPU frequency (Hz) per real task; entry `i` belongs to task `i + 1`.
/// Values for offloaded tasks are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyAllocation(pub Vec<f64>);

impl FrequencyAllocation {
    pub fn uniform(m: usize, freq: f64) -> Self {
        Self(vec![freq; m])
    }

    pub fn get(&self, task: TaskId) -> f64 {
        self.0[task - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtcReport {
    pub eta: f64,
    pub energy_j: f64,
    pub completion_s: f64,
    pub per_path_times: Vec<f64>,
    pub argmax_path: usize,
}

/// Ready and finish times of every task on both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct FinishTimes {
    pub ready_local: Vec<f64>,
    pub finish_local: Vec<f64>,
    pub ready_edge: Vec<f64>,
    pub finish_edge: Vec<f64>,
}

/// A graph, its paths and one environment realization with the per-edge
/// transfer times precomputed.
#[derive(Debug, Clone)]
pub struct Instance<'a> {
    pub graph: &'a TaskGraph,
    pub paths: &'a PathSet,
    pub params: &'a EnvParams,
    pub state: &'a EnvState,
    tau_up: Vec<f64>,
    tau_down: Vec<f64>,
}

fn transfer_time(bits: f64, rate: f64) -> f64 {
    if bits == 0.0 {
        0.0
    } else if rate > 0.0 {
        bits / rate
    } else {
        f64::INFINITY
    }
}

impl<'a> Instance<'a> {
    pub fn new(graph: &'a TaskGraph, paths: &'a PathSet, params: &'a EnvParams, state: &'a EnvState) -> Self {
        let (tau_up, tau_down) = graph
            .edges()
            .iter()
            .enumerate()
            .map(|(idx, e)| {
                (
                    transfer_time(e.data_bits, uplink_rate(params, state.h_up[idx])),
                    transfer_time(e.data_bits, downlink_rate(params, state.h_down[idx])),
                )
            })
            .unzip();
        Self { graph, paths, params, state, tau_up, tau_down }
    }

    pub fn real_task_count(&self) -> usize {
        self.graph.real_task_count()
    }

    /// Uplink time of edge `edge` (index into `graph.edges()`).
    pub fn tau_up(&self, edge: usize) -> f64 {
        self.tau_up[edge]
    }

    pub fn tau_down(&self, edge: usize) -> f64 {
        self.tau_down[edge]
    }

    /// Edge-server execution time of `task`.
    pub fn tau_edge(&self, task: TaskId) -> f64 {
        self.graph.workload(task) / self.state.f_edge_hz
    }

    /// Device execution time of `task`; zero for virtual tasks.
    pub fn tau_local(&self, task: TaskId, freqs: &FrequencyAllocation) -> f64 {
        if self.graph.is_virtual(task) {
            return 0.0;
        }
        let f = freqs.get(task);
        if f > 0.0 {
            self.graph.workload(task) / f
        } else {
            f64::INFINITY
        }
    }

    fn check_dims(&self, decision: &OffloadDecision, freqs: &FrequencyAllocation) -> Result<(), ScheduleError> {
        let m = self.real_task_count();
        if decision.len() != m {
            return Err(ScheduleError::DimensionMismatch { what: "decision", expected: m, got: decision.len() });
        }
        if freqs.0.len() != m {
            return Err(ScheduleError::DimensionMismatch { what: "frequencies", expected: m, got: freqs.0.len() });
        }
        Ok(())
    }

    /// Compute plus boundary-transfer delay along path `o`, ignoring waits on
    /// other paths.
    pub fn path_time(
        &self,
        o: usize,
        decision: &OffloadDecision,
        freqs: &FrequencyAllocation,
    ) -> Result<f64, ScheduleError> {
        self.check_dims(decision, freqs)?;
        self.path_time_unchecked(o, decision, freqs)
    }

    fn path_time_unchecked(
        &self,
        o: usize,
        decision: &OffloadDecision,
        freqs: &FrequencyAllocation,
    ) -> Result<f64, ScheduleError> {
        let path = self.paths.path(o);
        let real = &path.tasks[1..path.tasks.len() - 1];
        let mut total = 0.0;
        for &k in real {
            if decision.is_offloaded(k) {
                total += self.tau_edge(k);
            } else {
                let f = freqs.get(k);
                if f.is_nan() || f <= 0.0 {
                    return Err(ScheduleError::ZeroFrequency { task: k, freq: f });
                }
                total += self.graph.workload(k) / f;
            }
        }
        for (j, &e) in path.edges.iter().enumerate() {
            let prev = decision.is_offloaded(path.tasks[j]);
            let cur = decision.is_offloaded(path.tasks[j + 1]);
            match (prev, cur) {
                (false, true) => total += self.tau_up[e],
                (true, false) => total += self.tau_down[e],
                _ => {}
            }
        }
        Ok(total)
    }

    /// Ready/finish time recursion over a topological order. Both sides are
    /// computed for every task since successors may read either.
    pub fn finish_times(&self, decision: &OffloadDecision, freqs: &FrequencyAllocation) -> FinishTimes {
        let n = self.graph.task_count();
        let mut out = FinishTimes {
            ready_local: vec![0.0; n],
            finish_local: vec![0.0; n],
            ready_edge: vec![0.0; n],
            finish_edge: vec![0.0; n],
        };
        for &v in self.graph.topological_order() {
            let mut rt_l: f64 = 0.0;
            let mut rt_c: f64 = 0.0;
            for &e in self.graph.incoming_edges(v) {
                let k = self.graph.edges()[e].from;
                if decision.is_offloaded(k) {
                    rt_l = rt_l.max(out.finish_edge[k] + self.tau_down[e]);
                    rt_c = rt_c.max(out.finish_edge[k]);
                } else {
                    rt_l = rt_l.max(out.finish_local[k]);
                    rt_c = rt_c.max(out.finish_local[k] + self.tau_up[e]);
                }
            }
            out.ready_local[v] = rt_l;
            out.ready_edge[v] = rt_c;
            out.finish_local[v] = rt_l + self.tau_local(v, freqs);
            out.finish_edge[v] = rt_c + self.tau_edge(v);
        }
        out
    }

    /// Local finish time of the exit task, i.e. the application completion time.
    pub fn finish_time_recursive(&self, decision: &OffloadDecision, freqs: &FrequencyAllocation) -> f64 {
        self.finish_times(decision, freqs).finish_local[self.graph.exit()]
    }

    /// Device energy: local computation plus uplink transfers into offloaded
    /// tasks. Downlink transfers cost the device nothing.
    pub fn total_energy(&self, decision: &OffloadDecision, freqs: &FrequencyAllocation) -> f64 {
        let kappa = self.params.kappa;
        let mut energy = 0.0;
        for task in 1..=self.real_task_count() {
            if decision.is_offloaded(task) {
                for &e in self.graph.incoming_edges(task) {
                    if !decision.is_offloaded(self.graph.edges()[e].from) {
                        energy += self.tau_up[e] * self.params.p_md_w;
                    }
                }
            } else {
                let f = freqs.get(task);
                energy += kappa * self.graph.workload(task) * f * f;
            }
        }
        energy
    }

    /// Energy-time cost `beta_e E + beta_t T` with `T` the longest path time.
    pub fn etc(&self, decision: &OffloadDecision, freqs: &FrequencyAllocation) -> Result<EtcReport, ScheduleError> {
        self.check_dims(decision, freqs)?;
        let per_path_times = (0..self.paths.len())
            .map(|o| self.path_time_unchecked(o, decision, freqs))
            .collect::<Result<Vec<_>, _>>()?;
        let (argmax_path, completion_s) = per_path_times
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (o, t)| if t > best.1 { (o, t) } else { best });
        let energy_j = self.total_energy(decision, freqs);
        Ok(EtcReport {
            eta: self.params.beta_e * energy_j + self.params.beta_t * completion_s,
            energy_j,
            completion_s,
            per_path_times,
            argmax_path,
        })
    }
}

pub fn path_time(
    graph: &TaskGraph,
    paths: &PathSet,
    o: usize,
    decision: &OffloadDecision,
    freqs: &FrequencyAllocation,
    state: &EnvState,
    params: &EnvParams,
) -> Result<f64, ScheduleError> {
    Instance::new(graph, paths, params, state).path_time(o, decision, freqs)
}

pub fn finish_time_recursive(
    graph: &TaskGraph,
    decision: &OffloadDecision,
    freqs: &FrequencyAllocation,
    state: &EnvState,
    params: &EnvParams,
) -> f64 {
    // The recursion does not use paths; an empty set keeps the instance cheap.
    let paths = PathSet::empty(graph.task_count());
    Instance::new(graph, &paths, params, state).finish_time_recursive(decision, freqs)
}

pub fn total_energy(
    graph: &TaskGraph,
    decision: &OffloadDecision,
    freqs: &FrequencyAllocation,
    state: &EnvState,
    params: &EnvParams,
) -> f64 {
    let paths = PathSet::empty(graph.task_count());
    Instance::new(graph, &paths, params, state).total_energy(decision, freqs)
}

pub fn etc(
    graph: &TaskGraph,
    paths: &PathSet,
    decision: &OffloadDecision,
    freqs: &FrequencyAllocation,
    state: &EnvState,
    params: &EnvParams,
) -> Result<EtcReport, ScheduleError> {
    Instance::new(graph, paths, params, state).etc(decision, freqs)
}
