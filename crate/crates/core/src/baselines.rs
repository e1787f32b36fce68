//! Reference solvers: exhaustive search, Gibbs sampling and the two fixed
//! placements.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actor::quantize::is_one_climb;
use crate::critic::{solve, CriticError, CriticOpts, CriticResult};
use crate::schedule::{Instance, OffloadDecision};

/// Exhaustive search refuses graphs with more real tasks than this.
pub const EXHAUSTIVE_MAX_TASKS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("exhaustive search over {tasks} tasks exceeds the cap of {cap}")]
    TooManyTasks { tasks: usize, cap: usize },
    #[error(transparent)]
    Critic(#[from] CriticError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub name: &'static str,
    pub decision: OffloadDecision,
    pub critic: CriticResult,
    pub wall_time_s: f64,
}

impl BaselineResult {
    pub fn eta(&self) -> f64 {
        self.critic.eta()
    }
}

fn timed(
    name: &'static str,
    f: impl FnOnce() -> Result<CriticResult, BaselineError>,
) -> Result<BaselineResult, BaselineError> {
    let elapsed = crate::stopwatch();
    let critic = f()?;
    Ok(BaselineResult { name, decision: critic.decision.clone(), critic, wall_time_s: elapsed() })
}

pub fn all_local(inst: &Instance<'_>, opts: &CriticOpts) -> Result<BaselineResult, BaselineError> {
    timed("all-local", || Ok(solve(inst, &OffloadDecision::all_local(inst.real_task_count()), opts)?))
}

pub fn all_edge(inst: &Instance<'_>, opts: &CriticOpts) -> Result<BaselineResult, BaselineError> {
    timed("all-edge", || Ok(solve(inst, &OffloadDecision::all_edge(inst.real_task_count()), opts)?))
}

/// Lowest-ETC decision among `codes`; ties go to the smaller code.
fn argmin_codes(inst: &Instance<'_>, codes: &[u64], opts: &CriticOpts) -> Result<CriticResult, BaselineError> {
    let m = inst.real_task_count();
    let results = crate::par_map(codes, |&c| solve(inst, &OffloadDecision::from_code(c, m), opts));
    let mut best: Option<CriticResult> = None;
    for r in results {
        let r = r?;
        if best.as_ref().is_none_or(|b| r.eta() < b.eta()) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least the all-local code is searched"))
}

fn check_cap(m: usize, cap: usize) -> Result<(), BaselineError> {
    if m > cap || m >= 64 {
        return Err(BaselineError::TooManyTasks { tasks: m, cap });
    }
    Ok(())
}

/// Global optimum over all `2^M` decisions.
pub fn exhaustive(inst: &Instance<'_>, opts: &CriticOpts) -> Result<BaselineResult, BaselineError> {
    exhaustive_capped(inst, opts, EXHAUSTIVE_MAX_TASKS)
}

pub fn exhaustive_capped(inst: &Instance<'_>, opts: &CriticOpts, cap: usize) -> Result<BaselineResult, BaselineError> {
    let m = inst.real_task_count();
    check_cap(m, cap)?;
    timed("exhaustive", || {
        let codes: Vec<u64> = (0..1u64 << m).collect();
        argmin_codes(inst, &codes, opts)
    })
}

/// Optimum over decisions that climb to the edge at most once per path.
pub fn exhaustive_one_climb(inst: &Instance<'_>, opts: &CriticOpts) -> Result<BaselineResult, BaselineError> {
    let m = inst.real_task_count();
    check_cap(m, EXHAUSTIVE_MAX_TASKS)?;
    timed("exhaustive-one-climb", || {
        let codes: Vec<u64> =
            (0..1u64 << m).filter(|&c| is_one_climb(&OffloadDecision::from_code(c, m), inst.paths)).collect();
        argmin_codes(inst, &codes, opts)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsOpts {
    pub sweeps: usize,
    /// Starting temperature; `None` means a tenth of the all-local ETC.
    pub initial_temperature: Option<f64>,
    /// Multiplied into the temperature after every sweep.
    pub decay: f64,
}

impl Default for GibbsOpts {
    fn default() -> Self {
        Self { sweeps: 500, initial_temperature: None, decay: 0.98 }
    }
}

/// Probability of setting a coordinate to 1 given the two candidate ETCs.
/// Zero temperature is greedy (ties keep `current`); infinite is a fair coin.
pub fn flip_probability(eta0: f64, eta1: f64, temperature: f64, current: bool) -> f64 {
    if temperature == 0.0 {
        return if eta1 < eta0 {
            1.0
        } else if eta0 < eta1 {
            0.0
        } else if current {
            1.0
        } else {
            0.0
        };
    }
    if temperature.is_infinite() {
        return 0.5;
    }
    1.0 / (1.0 + ((eta1 - eta0) / temperature).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsRun {
    pub result: BaselineResult,
    /// Best ETC seen after each sweep.
    pub best_per_sweep: Vec<f64>,
    pub critic_calls: usize,
}

/// Cyclic single-site sampler from the all-local decision, keeping the best
/// decision seen.
pub fn gibbs<R: Rng + ?Sized>(
    inst: &Instance<'_>,
    critic: &CriticOpts,
    opts: &GibbsOpts,
    rng: &mut R,
) -> Result<GibbsRun, BaselineError> {
    let elapsed = crate::stopwatch();
    let m = inst.real_task_count();
    let mut cache: HashMap<OffloadDecision, CriticResult> = HashMap::new();
    let mut eval = |d: &OffloadDecision| -> Result<f64, BaselineError> {
        if let Some(r) = cache.get(d) {
            return Ok(r.eta());
        }
        let r = solve(inst, d, critic)?;
        let eta = r.eta();
        cache.insert(d.clone(), r);
        Ok(eta)
    };

    let mut current = OffloadDecision::all_local(m);
    let mut best = current.clone();
    let mut best_eta = eval(&current)?;
    let mut temperature = opts.initial_temperature.unwrap_or(best_eta / 10.0);
    let mut best_per_sweep = Vec::with_capacity(opts.sweeps);
    for _ in 0..opts.sweeps {
        for i in 0..m {
            let mut zero = current.clone();
            zero.bits_mut()[i] = false;
            let mut one = current.clone();
            one.bits_mut()[i] = true;
            let (eta0, eta1) = (eval(&zero)?, eval(&one)?);
            let p = flip_probability(eta0, eta1, temperature, current.bits()[i]);
            let bit = rng.random::<f64>() < p;
            current.bits_mut()[i] = bit;
            let eta = if bit { eta1 } else { eta0 };
            if eta < best_eta {
                best_eta = eta;
                best = current.clone();
            }
        }
        best_per_sweep.push(best_eta);
        temperature *= opts.decay;
    }
    let critic_calls = cache.len();
    let critic_result = cache.remove(&best).expect("best decision was evaluated");
    Ok(GibbsRun {
        result: BaselineResult { name: "gibbs", decision: best, critic: critic_result, wall_time_s: elapsed() },
        best_per_sweep,
        critic_calls,
    })
}
