//! Joint binary task offloading and device CPU frequency control for
//! applications described by a task DAG, executed by a mobile device with
//! help from an edge server.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: task graphs and entry-to-exit path enumeration.
//! * [`channel`]: fading channel gains, rates and transfer costs.
//! * [`schedule`]: completion time, energy and energy-time cost (ETC).
//! * [`critic`]: optimal frequencies for a fixed decision via dual subgradient.
//! * [`actor`]: the learned policy, candidate generation and training loop.
//! * [`baselines`]: exhaustive search, Gibbs sampling, all-local, all-edge.
//! * [`harness`]: experiment configuration, training runs and comparisons.

pub mod actor;
pub mod baselines;
pub mod channel;
pub mod critic;
pub mod graph;
pub mod harness;
pub mod rng;
pub mod schedule;

pub use channel::{EnvParams, EnvState};
pub use critic::{CriticOpts, CriticResult, DualVector};
pub use graph::{PathSet, TaskGraph};
pub use schedule::{EtcReport, FrequencyAllocation, Instance, OffloadDecision};

/// Order-preserving map, data-parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.iter().map(f).collect()
}

/// Seconds-elapsed closure. Reads zero on wasm32, where `Instant` panics.
#[cfg(not(target_arch = "wasm32"))]
pub(crate) fn stopwatch() -> impl Fn() -> f64 {
    let start = std::time::Instant::now();
    move || start.elapsed().as_secs_f64()
}

#[cfg(target_arch = "wasm32")]
pub(crate) fn stopwatch() -> impl Fn() -> f64 {
    || 0.0
}
