//! Sufficient conditions under which restricting decisions to one climb per
//! path loses nothing.
//!
//! For every pair of paths `(o, o')` and every maximal run of consecutive
//! tasks of `o'` that is also a consecutive run of `o`, three transfer-time
//! gaps are compared with the cheapest local-minus-edge cost of the run:
//!
//! ```text
//! up:    tau_u(run -> next) - tau_u(prev -> run)      < ((X+Y)* - Z) / (1 + P_MD)
//! down:  tau_d(prev -> run) - tau_d(run -> next)      <  (X+Y)* - Z
//! both:  (1 + P_MD) tau_u(prev -> run) + tau_d(run -> next) < (X+Y)* - Z
//! ```
//!
//! `X` and `Y` are the local energy and time of the run at
//! `f = min(cbrt(1 / (2 kappa)), f_peak)` and `Z` its edge time. The up test
//! needs a real successor (it would be offloaded) and the down test a real
//! predecessor.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::channel::{EnvParams, EnvState};
use crate::graph::{PathSet, TaskGraph};
use crate::schedule::Instance;

/// A run of consecutive positions `start..=end` on path `path`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Segment {
    pub path: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneClimbReport {
    pub realizations: usize,
    pub satisfied: usize,
    pub satisfied_fraction: f64,
    pub segments: usize,
    pub up_violations: usize,
    pub down_violations: usize,
    pub both_violations: usize,
}

/// Overlap runs shared between distinct paths, deduplicated per host path.
pub fn overlap_segments(graph: &TaskGraph, paths: &PathSet) -> Vec<Segment> {
    let mut found = BTreeSet::new();
    for (host, p) in paths.paths().iter().enumerate() {
        for (other, q) in paths.paths().iter().enumerate() {
            if other == host {
                continue;
            }
            // A position of p continues a run when the edge into it also lies on q.
            let on_q = |task: usize| q.tasks.contains(&task);
            let mut pos = 1;
            while pos < p.tasks.len() {
                let task = p.tasks[pos];
                if graph.is_virtual(task) || !on_q(task) {
                    pos += 1;
                    continue;
                }
                let start = pos;
                while pos + 1 < p.tasks.len() && !graph.is_virtual(p.tasks[pos + 1]) && q.edges.contains(&p.edges[pos])
                {
                    pos += 1;
                }
                found.insert(Segment { path: host, start, end: pos });
                pos += 1;
            }
        }
    }
    found.into_iter().collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Verdict {
    up: bool,
    down: bool,
    both: bool,
}

fn check_segment(inst: &Instance<'_>, seg: &Segment, f_star: f64) -> Verdict {
    let graph = inst.graph;
    let params = inst.params;
    let path = inst.paths.path(seg.path);
    let (mut x, mut y, mut z) = (0.0, 0.0, 0.0);
    for &task in &path.tasks[seg.start..=seg.end] {
        let load = graph.workload(task);
        x += params.kappa * load * f_star * f_star;
        y += load / f_star;
        z += inst.tau_edge(task);
    }
    let slack = x + y - z;
    let into = path.edges[seg.start - 1];
    let out = path.edges[seg.end];
    let prev_real = !graph.is_virtual(path.tasks[seg.start - 1]);
    let next_real = !graph.is_virtual(path.tasks[seg.end + 1]);
    let p_md = params.p_md_w;
    Verdict {
        up: !next_real || inst.tau_up(out) - inst.tau_up(into) < slack / (1.0 + p_md),
        down: !prev_real || inst.tau_down(into) - inst.tau_down(out) < slack,
        both: (1.0 + p_md) * inst.tau_up(into) + inst.tau_down(out) < slack,
    }
}

/// Fraction of `states` for which every overlap run passes all three tests.
pub fn one_climb_conditions_report(
    graph: &TaskGraph,
    paths: &PathSet,
    states: &[EnvState],
    params: &EnvParams,
) -> OneClimbReport {
    let segments = overlap_segments(graph, paths);
    let f_star = (1.0 / (2.0 * params.kappa)).cbrt().min(params.f_peak_hz);
    let mut report = OneClimbReport {
        realizations: states.len(),
        satisfied: 0,
        satisfied_fraction: 1.0,
        segments: segments.len(),
        up_violations: 0,
        down_violations: 0,
        both_violations: 0,
    };
    for state in states {
        let inst = Instance::new(graph, paths, params, state);
        let mut ok = true;
        for seg in &segments {
            let v = check_segment(&inst, seg, f_star);
            report.up_violations += usize::from(!v.up);
            report.down_violations += usize::from(!v.down);
            report.both_violations += usize::from(!v.both);
            ok &= v.up && v.down && v.both;
        }
        report.satisfied += usize::from(ok);
    }
    if !states.is_empty() {
        report.satisfied_fraction = report.satisfied as f64 / states.len() as f64;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{mean_gain, sample_state};
    use crate::graph::Edge;

    fn diamond() -> TaskGraph {
        let e = |from, to| Edge { from, to, data_bits: 8192.0 * 100.0 };
        TaskGraph::with_real_tasks(&[6e7, 8e7, 9e7, 5e7], vec![e(0, 1), e(1, 2), e(1, 3), e(2, 4), e(3, 4), e(4, 5)])
            .unwrap()
    }

    #[test]
    fn single_path_is_vacuous() {
        let e = |from, to| Edge { from, to, data_bits: 1e5 };
        let g = TaskGraph::with_real_tasks(&[1e7, 2e7], vec![e(0, 1), e(1, 2), e(2, 3)]).unwrap();
        let p = g.enumerate_paths().unwrap();
        let params = EnvParams::default();
        let states: Vec<_> = (0..5).map(|s| sample_state(&params, &g, s)).collect();
        let r = one_climb_conditions_report(&g, &p, &states, &params);
        assert_eq!(r.segments, 0);
        assert_eq!(r.satisfied_fraction, 1.0);
    }

    #[test]
    fn diamond_overlaps() {
        let g = diamond();
        let p = g.enumerate_paths().unwrap();
        // Paths 0-1-2-4-5 and 0-1-3-4-5 share task 1 and task 4 on each side.
        let segs = overlap_segments(&g, &p);
        assert_eq!(
            segs,
            vec![
                Segment { path: 0, start: 1, end: 1 },
                Segment { path: 0, start: 3, end: 3 },
                Segment { path: 1, start: 1, end: 1 },
                Segment { path: 1, start: 3, end: 3 },
            ]
        );
    }

    #[test]
    fn equal_uplink_times_pass_up_test() {
        let g = diamond();
        let p = g.enumerate_paths().unwrap();
        let params = EnvParams::default();
        let state = EnvState::uniform(g.edges().len(), mean_gain(&params), params.f_edge_min_hz);
        let inst = Instance::new(&g, &p, &params, &state);
        for seg in overlap_segments(&g, &p) {
            assert!(check_segment(&inst, &seg, params.f_peak_hz).up);
        }
    }
}
