//! Turning a relaxed action into a handful of binary candidates.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::logistic;
use super::ActorError;
use crate::graph::PathSet;
use crate::schedule::OffloadDecision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    OrderPreserving,
    NoiseBranch,
    /// Inserted when filtering left nothing.
    Fallback,
}

/// Distinct binary candidates with the branch that produced each one.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateSet {
    pub actions: Vec<OffloadDecision>,
    pub provenance: Vec<Provenance>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Appends `action` unless an equal action is already present.
    pub fn push_unique(&mut self, action: OffloadDecision, from: Provenance) -> bool {
        if self.actions.contains(&action) {
            return false;
        }
        self.actions.push(action);
        self.provenance.push(from);
        true
    }
}

/// `count` actions that keep the ordering of `relaxed`. The first thresholds
/// at one half; action `b` thresholds at the entry with the `(b-1)`-th
/// smallest distance to one half.
pub fn order_preserving_quantize(relaxed: &[f64], count: usize) -> Result<Vec<OffloadDecision>, ActorError> {
    let m = relaxed.len();
    if count == 0 || count > m + 1 {
        return Err(ActorError::CountTooLarge { count, max: m + 1 });
    }
    let mut out = Vec::with_capacity(count);
    out.push(OffloadDecision::new(relaxed.iter().map(|&a| a > 0.5).collect()));

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| (relaxed[i] - 0.5).abs().total_cmp(&(relaxed[j] - 0.5).abs()).then(i.cmp(&j)));
    for &k in order.iter().take(count - 1) {
        let threshold = relaxed[k];
        let bits = relaxed
            .iter()
            .map(|&a| {
                if a > threshold {
                    true
                } else if a < threshold {
                    false
                } else {
                    threshold < 0.5
                }
            })
            .collect();
        out.push(OffloadDecision::new(bits));
    }
    Ok(out)
}

/// Noise-branch input: `logistic(relaxed + noise)`.
pub fn noisy_relaxed(relaxed: &[f64], noise: &[f64]) -> Vec<f64> {
    relaxed.iter().zip(noise).map(|(&a, &n)| logistic(a + n)).collect()
}

/// Half the candidates from `relaxed`, half from a noise-perturbed copy.
pub fn gnop_quantize<R: Rng + ?Sized>(relaxed: &[f64], b: usize, rng: &mut R) -> Result<CandidateSet, ActorError> {
    let noise: Vec<f64> = (0..relaxed.len()).map(|_| rng.sample(StandardNormal)).collect();
    gnop_quantize_with_noise(relaxed, b, &noise)
}

pub fn gnop_quantize_with_noise(relaxed: &[f64], b: usize, noise: &[f64]) -> Result<CandidateSet, ActorError> {
    if b == 0 || b % 2 == 1 {
        return Err(ActorError::OddCandidateCount(b));
    }
    if noise.len() != relaxed.len() {
        return Err(ActorError::DimensionMismatch { expected: relaxed.len(), got: noise.len() });
    }
    let half = b / 2;
    let mut set = CandidateSet::default();
    for action in order_preserving_quantize(relaxed, half)? {
        set.push_unique(action, Provenance::OrderPreserving);
    }
    for action in order_preserving_quantize(&noisy_relaxed(relaxed, noise), half)? {
        set.push_unique(action, Provenance::NoiseBranch);
    }
    Ok(set)
}

/// True when every path, padded with local entry and exit, climbs from the
/// device to the edge at most once.
pub fn is_one_climb(action: &OffloadDecision, paths: &PathSet) -> bool {
    paths.paths().iter().all(|path| {
        let mut climbs = 0;
        let mut prev = false;
        for &task in &path.tasks {
            let cur = action.is_offloaded(task);
            if cur && !prev {
                climbs += 1;
            }
            prev = cur;
        }
        climbs <= 1
    })
}

/// Drops candidates that climb twice on some path; an empty result becomes
/// the all-local action.
pub fn one_climb_filter(candidates: &CandidateSet, paths: &PathSet, m: usize) -> CandidateSet {
    let mut out = CandidateSet::default();
    for (action, &from) in candidates.actions.iter().zip(&candidates.provenance) {
        if is_one_climb(action, paths) {
            out.actions.push(action.clone());
            out.provenance.push(from);
        }
    }
    if out.is_empty() {
        out.push_unique(OffloadDecision::all_local(m), Provenance::Fallback);
    }
    out
}

/// Every decision on `m` tasks that passes the one-climb test.
pub fn one_climb_decisions(paths: &PathSet, m: usize) -> Vec<OffloadDecision> {
    (0..1u64 << m).map(|c| OffloadDecision::from_code(c, m)).filter(|d| is_one_climb(d, paths)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, TaskGraph};
    use crate::rng::stream;
    use std::collections::HashSet;

    fn distinct(actions: &[OffloadDecision]) -> bool {
        actions.iter().collect::<HashSet<_>>().len() == actions.len()
    }

    fn bits(d: &OffloadDecision) -> Vec<u8> {
        d.bits().iter().map(|&b| u8::from(b)).collect()
    }

    fn chain(m: usize) -> TaskGraph {
        let edges = (0..=m).map(|i| Edge { from: i, to: i + 1, data_bits: 1e3 }).collect();
        TaskGraph::with_real_tasks(&vec![1e6; m], edges).unwrap()
    }

    #[test]
    fn hand_worked_thresholds() {
        let a = [0.8, 0.3, 0.6];
        let out = order_preserving_quantize(&a, 3).unwrap();
        assert_eq!(bits(&out[0]), [1, 0, 1]);
        assert_eq!(bits(&out[1]), [1, 0, 0]);
        assert_eq!(bits(&out[2]), [1, 1, 1]);
    }

    #[test]
    fn count_limits() {
        let a = [0.8, 0.3, 0.6];
        assert!(order_preserving_quantize(&a, 4).is_ok());
        assert_eq!(order_preserving_quantize(&a, 5), Err(ActorError::CountTooLarge { count: 5, max: 4 }));
        assert!(order_preserving_quantize(&a, 0).is_err());
    }

    #[test]
    fn two_candidates_are_the_two_thresholdings() {
        let a = [0.9, 0.2, 0.55, 0.45];
        let noise = [0.3, -1.0, 0.2, 2.0];
        let set = gnop_quantize_with_noise(&a, 2, &noise).unwrap();
        assert_eq!(bits(&set.actions[0]), [1, 0, 1, 0]);
        let second: Vec<u8> = noisy_relaxed(&a, &noise).iter().map(|&v| u8::from(v > 0.5)).collect();
        if set.len() == 2 {
            assert_eq!(bits(&set.actions[1]), second);
        } else {
            assert_eq!(bits(&set.actions[0]), second);
        }
    }

    #[test]
    fn zero_noise_is_deterministic() {
        let a = [0.1, 0.7, 0.4, 0.95];
        let set = gnop_quantize_with_noise(&a, 8, &[0.0; 4]).unwrap();
        let mut expected = CandidateSet::default();
        for x in order_preserving_quantize(&a, 4).unwrap() {
            expected.push_unique(x, Provenance::OrderPreserving);
        }
        let squashed: Vec<f64> = a.iter().map(|&v| logistic(v)).collect();
        for x in order_preserving_quantize(&squashed, 4).unwrap() {
            expected.push_unique(x, Provenance::NoiseBranch);
        }
        assert_eq!(set, expected);
    }

    #[test]
    fn odd_budget_rejected() {
        assert_eq!(gnop_quantize_with_noise(&[0.5], 3, &[0.0]), Err(ActorError::OddCandidateCount(3)));
    }

    #[test]
    fn seeded_candidates_reproduce() {
        let a: Vec<f64> = (0..8).map(|i| 0.1 + 0.1 * i as f64).collect();
        let x = gnop_quantize(&a, 16, &mut stream(9, 1)).unwrap();
        let y = gnop_quantize(&a, 16, &mut stream(9, 1)).unwrap();
        assert_eq!(x, y);
        assert!(x.len() <= 16 && distinct(&x.actions));
    }

    #[test]
    fn chain_patterns() {
        let g = chain(4);
        let paths = g.enumerate_paths().unwrap();
        let keep = OffloadDecision::new(vec![false, true, true, false]);
        let drop = OffloadDecision::new(vec![false, true, false, true]);
        assert!(is_one_climb(&keep, &paths));
        assert!(!is_one_climb(&drop, &paths));
        assert!(is_one_climb(&OffloadDecision::all_edge(4), &paths));
    }

    #[test]
    fn filter_falls_back_to_local() {
        let g = chain(4);
        let paths = g.enumerate_paths().unwrap();
        let mut set = CandidateSet::default();
        set.push_unique(OffloadDecision::new(vec![true, false, true, false]), Provenance::NoiseBranch);
        let out = one_climb_filter(&set, &paths, 4);
        assert_eq!(out.actions, vec![OffloadDecision::all_local(4)]);
        assert_eq!(out.provenance, vec![Provenance::Fallback]);
    }

    #[test]
    fn chain_one_climb_count() {
        // On a chain, one-climb decisions are a single (possibly empty) run of ones.
        let g = chain(5);
        let paths = g.enumerate_paths().unwrap();
        assert_eq!(one_climb_decisions(&paths, 5).len(), 1 + 5 * 6 / 2);
    }
}
