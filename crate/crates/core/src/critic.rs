//! Analytic critic: for a fixed offloading decision, find the device CPU
//! frequencies that minimize the ETC.
//!
//! The frequency subproblem is convex in the local execution times. Its
//! partial Lagrangian has one multiplier per entry-to-exit path, the optimal
//! multipliers sum to `beta_t`, and given multipliers the optimal frequency
//! of a local task has the closed form
//!
//! ```text
//! f_i = min( cbrt( sum_{o through i} lambda_o / (2 kappa beta_e) ), f_peak )
//! ```
//!
//! The multipliers are found by projected subgradient iterations on the
//! scaled simplex `{lambda >= 0, sum lambda = beta_t}`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::EnvParams;
use crate::graph::{PathSet, TaskGraph, TaskId};
use crate::schedule::{EtcReport, FrequencyAllocation, Instance, OffloadDecision, ScheduleError};

/// Multipliers are floored here before the closed-form frequency so that a
/// local task never gets frequency zero.
pub const LAMBDA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CriticError {
    #[error("local task {task} lies on no path")]
    EmptyMembership { task: TaskId },
    #[error("dual iterations did not converge after {} iterations (best eta {})", .0.iterations, .0.report.eta)]
    NotConverged(Box<CriticResult>),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Per-path multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualVector(pub Vec<f64>);

impl DualVector {
    /// `target / O` on every path.
    pub fn uniform(paths: usize, target: f64) -> Self {
        Self(vec![target / paths as f64; paths])
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_feasible(&self, target: f64, tol: f64) -> bool {
        self.0.iter().all(|&l| l >= 0.0) && (self.sum() - target).abs() <= tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticOpts {
    /// Stop once no multiplier moves by more than this.
    pub tol: f64,
    pub max_iters: usize,
    /// Base step; `None` means `beta_t`, so the first move can cross the
    /// whole multiplier simplex.
    pub eps0: Option<f64>,
}

impl Default for CriticOpts {
    fn default() -> Self {
        Self { tol: 1e-6, max_iters: 500, eps0: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticResult {
    pub decision: OffloadDecision,
    pub freqs: FrequencyAllocation,
    pub report: EtcReport,
    pub dual: DualVector,
    pub iterations: usize,
    pub converged: bool,
}

impl CriticResult {
    pub fn eta(&self) -> f64 {
        self.report.eta
    }

    /// Turns an unconverged result into [`CriticError::NotConverged`].
    pub fn into_converged(self) -> Result<Self, CriticError> {
        if self.converged {
            Ok(self)
        } else {
            Err(CriticError::NotConverged(Box::new(self)))
        }
    }
}

/// One primal evaluation inside [`solve_observed`].
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iteration: usize,
    pub eta: f64,
    pub best_eta: f64,
    pub dual_sum: f64,
}

/// Closed-form frequencies for the given multipliers. Offloaded tasks get 0.
pub fn optimal_frequencies(
    dual: &DualVector,
    paths: &PathSet,
    graph: &TaskGraph,
    decision: &OffloadDecision,
    params: &EnvParams,
) -> Result<FrequencyAllocation, CriticError> {
    let m = graph.real_task_count();
    let scale = 2.0 * params.kappa * params.beta_e;
    let mut freqs = vec![0.0; m];
    for task in 1..=m {
        if decision.is_offloaded(task) {
            continue;
        }
        let members = paths.membership(task);
        if members.is_empty() {
            return Err(CriticError::EmptyMembership { task });
        }
        let weight: f64 = members.iter().map(|&o| dual.0[o].max(LAMBDA_FLOOR)).sum();
        freqs[task - 1] = (weight / scale).cbrt().min(params.f_peak_hz);
    }
    Ok(FrequencyAllocation(freqs))
}

/// Euclidean projection of `v` onto `{x >= 0, sum x = target}`, by sorting.
pub fn project_simplex(v: &[f64], target: f64) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut prefix = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        prefix += u;
        let candidate = (prefix - target) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// `lambda_o - step * (T_o - t_max)` for every path, before projection.
pub fn subgradient_step(dual: &DualVector, path_times: &[f64], t_max: f64, step: f64) -> Vec<f64> {
    dual.0.iter().zip(path_times).map(|(&l, &t)| l - step * (t - t_max)).collect()
}

/// Optimal frequencies and ETC for a fixed decision.
pub fn solve(inst: &Instance<'_>, decision: &OffloadDecision, opts: &CriticOpts) -> Result<CriticResult, CriticError> {
    solve_observed(inst, decision, opts, |_| {})
}

/// [`solve`] with a callback after every primal evaluation.
pub fn solve_observed(
    inst: &Instance<'_>,
    decision: &OffloadDecision,
    opts: &CriticOpts,
    mut observe: impl FnMut(&IterRecord),
) -> Result<CriticResult, CriticError> {
    let params = inst.params;
    let paths = inst.paths;
    let beta_t = params.beta_t;
    let mut lambda = DualVector::uniform(paths.len(), beta_t);

    if decision.local_count() == 0 {
        let freqs = FrequencyAllocation::uniform(decision.len(), 0.0);
        let report = inst.etc(decision, &freqs)?;
        observe(&IterRecord { iteration: 1, eta: report.eta, best_eta: report.eta, dual_sum: lambda.sum() });
        return Ok(CriticResult {
            decision: decision.clone(),
            freqs,
            report,
            dual: lambda,
            iterations: 1,
            converged: true,
        });
    }

    let eps0 = opts.eps0.unwrap_or(beta_t);
    let mut best: Option<(FrequencyAllocation, EtcReport, DualVector)> = None;
    let mut converged = false;
    let mut iterations = 0;
    for psi in 1..=opts.max_iters.max(1) {
        iterations = psi;
        let freqs = optimal_frequencies(&lambda, paths, inst.graph, decision, params)?;
        let report = inst.etc(decision, &freqs)?;
        let improved = best.as_ref().is_none_or(|(_, b, _)| report.eta < b.eta);
        let t_max = report.completion_s;
        let gradient_norm = report.per_path_times.iter().map(|t| (t - t_max).powi(2)).sum::<f64>().sqrt();
        let times = report.per_path_times.clone();
        let eta = report.eta;
        if improved {
            best = Some((freqs, report, lambda.clone()));
        }
        let best_eta = best.as_ref().map_or(f64::INFINITY, |(_, b, _)| b.eta);
        observe(&IterRecord { iteration: psi, eta, best_eta, dual_sum: lambda.sum() });

        if gradient_norm == 0.0 {
            converged = true;
            break;
        }
        let step = eps0 / (gradient_norm + 1e-12) / (psi as f64).sqrt();
        // Ascent on the concave dual: multipliers of slack paths shrink and
        // weight moves toward the longest paths.
        let raw = subgradient_step(&lambda, &times, t_max, -step);
        let next = DualVector(project_simplex(&raw, beta_t));
        let delta = next.0.iter().zip(&lambda.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        lambda = next;
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    let (freqs, report, dual) = best.expect("at least one iteration runs");
    Ok(CriticResult { decision: decision.clone(), freqs, report, dual, iterations, converged })
}
