//! Application task graphs and their entry-to-exit paths.
//!
//! A graph always carries two virtual tasks: the entry at index `0` and the
//! exit at index `M + 1`. Both have zero workload and always run on the
//! device. Real tasks occupy indices `1..=M`.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a task inside a [`TaskGraph`].
pub type TaskId = usize;

/// Bits per kilobyte as used by graph files.
pub const BITS_PER_KBYTE: f64 = 8192.0;
/// Cycles per megacycle as used by graph files.
pub const CYCLES_PER_MCYCLE: f64 = 1.0e6;
/// Default cap on the number of enumerated paths.
pub const DEFAULT_PATH_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("task graph has a cycle through task {task}")]
    CyclicGraph { task: TaskId },
    #[error("task {task} does not lie on any entry-to-exit path")]
    DisconnectedTask { task: TaskId },
    #[error("virtual task {task} is malformed: {reason}")]
    BadVirtualTask { task: TaskId, reason: String },
    #[error("bad edge {from} -> {to}: {reason}")]
    BadEdge { from: TaskId, to: TaskId, reason: String },
    #[error("task {task} has invalid workload {workload}")]
    BadWorkload { task: TaskId, workload: f64 },
    #[error("task index {task} out of range (graph has {len} tasks)")]
    BadIndex { task: TaskId, len: usize },
    #[error("path enumeration exceeded the cap of {cap} paths")]
    PathExplosion { cap: usize },
    #[error("graph file: {0}")]
    File(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    /// CPU cycles needed to finish the task.
    pub workload_cycles: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: TaskId,
    pub to: TaskId,
    /// Data handed from `from` to `to`, in bits.
    pub data_bits: f64,
}

/// A validated task DAG with explicit virtual entry and exit tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskGraph {
    tasks: Vec<Task>,
    edges: Vec<Edge>,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
    edge_lookup: HashMap<(TaskId, TaskId), usize>,
    topo: Vec<TaskId>,
}

impl TaskGraph {
    /// Builds and validates a graph. `tasks` must include both virtual tasks.
    pub fn new(tasks: Vec<Task>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let graph = Self::from_parts(tasks, edges)?;
        graph.validate()?;
        Ok(graph)
    }

    /// Builds adjacency without checking the DAG invariants. Only endpoint
    /// existence, self loops and duplicates are rejected here.
    pub fn from_parts(tasks: Vec<Task>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let n = tasks.len();
        for (idx, task) in tasks.iter().enumerate() {
            if task.id != idx {
                return Err(GraphError::BadIndex { task: task.id, len: n });
            }
        }
        let mut incoming = vec![Vec::new(); n];
        let mut outgoing = vec![Vec::new(); n];
        let mut edge_lookup = HashMap::with_capacity(edges.len());
        for (idx, e) in edges.iter().enumerate() {
            if e.from >= n || e.to >= n {
                return Err(GraphError::BadEdge { from: e.from, to: e.to, reason: format!("endpoint outside 0..{n}") });
            }
            if e.from == e.to {
                return Err(GraphError::BadEdge { from: e.from, to: e.to, reason: "self loop".into() });
            }
            if !(e.data_bits.is_finite() && e.data_bits >= 0.0) {
                return Err(GraphError::BadEdge {
                    from: e.from,
                    to: e.to,
                    reason: format!("data size {} is not a finite non-negative number", e.data_bits),
                });
            }
            if edge_lookup.insert((e.from, e.to), idx).is_some() {
                return Err(GraphError::BadEdge { from: e.from, to: e.to, reason: "duplicate edge".into() });
            }
            outgoing[e.from].push(idx);
            incoming[e.to].push(idx);
        }
        // Keep adjacency sorted by the neighbouring task so traversal order is
        // independent of the order edges were listed in.
        for list in &mut outgoing {
            list.sort_by_key(|&e| edges[e].to);
        }
        for list in &mut incoming {
            list.sort_by_key(|&e| edges[e].from);
        }
        let topo = topological_order(n, &edges, &outgoing, &incoming);
        Ok(Self { tasks, edges, incoming, outgoing, edge_lookup, topo })
    }

    /// Builds a graph from real-task workloads (cycles, tasks `1..=M`) and
    /// edges; entry and exit tasks are added with zero workload.
    pub fn with_real_tasks(workloads: &[f64], edges: Vec<Edge>) -> Result<Self, GraphError> {
        let m = workloads.len();
        let mut tasks = Vec::with_capacity(m + 2);
        tasks.push(Task { id: 0, workload_cycles: 0.0 });
        tasks.extend(workloads.iter().enumerate().map(|(i, &w)| Task { id: i + 1, workload_cycles: w }));
        tasks.push(Task { id: m + 1, workload_cycles: 0.0 });
        Self::new(tasks, edges)
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.tasks.len();
        if n < 3 {
            return Err(GraphError::BadVirtualTask {
                task: 0,
                reason: "a graph needs an entry, an exit and at least one real task".into(),
            });
        }
        let exit = n - 1;
        for &v in &[0, exit] {
            if self.tasks[v].workload_cycles != 0.0 {
                return Err(GraphError::BadVirtualTask { task: v, reason: "virtual workload must be zero".into() });
            }
        }
        if !self.incoming[0].is_empty() {
            return Err(GraphError::BadVirtualTask { task: 0, reason: "entry task has predecessors".into() });
        }
        if !self.outgoing[exit].is_empty() {
            return Err(GraphError::BadVirtualTask { task: exit, reason: "exit task has successors".into() });
        }
        for task in &self.tasks[1..exit] {
            let w = task.workload_cycles;
            if !(w.is_finite() && w > 0.0) {
                return Err(GraphError::BadWorkload { task: task.id, workload: w });
            }
        }
        if self.topo.len() != n {
            let task = (0..n).find(|t| !self.topo.contains(t)).unwrap_or(0);
            return Err(GraphError::CyclicGraph { task });
        }
        let from_entry = self.reach(0, |g, v| g.outgoing[v].iter().map(|&e| g.edges[e].to).collect());
        let to_exit = self.reach(exit, |g, v| g.incoming[v].iter().map(|&e| g.edges[e].from).collect());
        if let Some(task) = (0..n).find(|&t| !(from_entry[t] && to_exit[t])) {
            return Err(GraphError::DisconnectedTask { task });
        }
        Ok(())
    }

    fn reach(&self, start: TaskId, next: impl Fn(&Self, TaskId) -> Vec<TaskId>) -> Vec<bool> {
        let mut seen = vec![false; self.tasks.len()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for w in next(self, v) {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    }

    /// Number of real tasks `M`.
    pub fn real_task_count(&self) -> usize {
        self.tasks.len() - 2
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn exit(&self) -> TaskId {
        self.tasks.len() - 1
    }

    pub fn is_virtual(&self, task: TaskId) -> bool {
        task == 0 || task == self.exit()
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn workload(&self, task: TaskId) -> f64 {
        self.tasks[task].workload_cycles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_index(&self, from: TaskId, to: TaskId) -> Option<usize> {
        self.edge_lookup.get(&(from, to)).copied()
    }

    /// Indices (into [`edges`](Self::edges)) of edges entering `task`, sorted by source.
    pub fn incoming_edges(&self, task: TaskId) -> &[usize] {
        &self.incoming[task]
    }

    /// Indices of edges leaving `task`, sorted by target.
    pub fn outgoing_edges(&self, task: TaskId) -> &[usize] {
        &self.outgoing[task]
    }

    /// Immediate predecessors of `task` in ascending order.
    pub fn predecessors(&self, task: TaskId) -> Result<Vec<TaskId>, GraphError> {
        if task >= self.tasks.len() {
            return Err(GraphError::BadIndex { task, len: self.tasks.len() });
        }
        Ok(self.incoming[task].iter().map(|&e| self.edges[e].from).collect())
    }

    pub fn successors(&self, task: TaskId) -> Result<Vec<TaskId>, GraphError> {
        if task >= self.tasks.len() {
            return Err(GraphError::BadIndex { task, len: self.tasks.len() });
        }
        Ok(self.outgoing[task].iter().map(|&e| self.edges[e].to).collect())
    }

    /// Tasks in a topological order (ties broken by smallest index).
    pub fn topological_order(&self) -> &[TaskId] {
        &self.topo
    }

    /// Enumerates every loop-free entry-to-exit path with the default cap.
    pub fn enumerate_paths(&self) -> Result<PathSet, GraphError> {
        self.enumerate_paths_capped(DEFAULT_PATH_CAP)
    }

    /// Depth-first enumeration in lexicographic order of task sequences.
    pub fn enumerate_paths_capped(&self, cap: usize) -> Result<PathSet, GraphError> {
        let exit = self.exit();
        let mut paths = Vec::new();
        let mut tasks = vec![0];
        let mut edges = Vec::new();
        // Explicit stack of (task, next outgoing slot to try).
        let mut stack = vec![(0usize, 0usize)];
        while let Some(top) = stack.last_mut() {
            let (v, slot) = *top;
            if v == exit {
                if paths.len() == cap {
                    return Err(GraphError::PathExplosion { cap });
                }
                paths.push(Path { tasks: tasks.clone(), edges: edges.clone() });
                stack.pop();
                tasks.pop();
                edges.pop();
                continue;
            }
            if let Some(&e) = self.outgoing[v].get(slot) {
                top.1 += 1;
                let next = self.edges[e].to;
                tasks.push(next);
                edges.push(e);
                stack.push((next, 0));
            } else {
                stack.pop();
                tasks.pop();
                edges.pop();
            }
        }
        Ok(PathSet::new(paths, self.tasks.len()))
    }

    /// Parses the JSON graph format. Entry edges are synthesized for every
    /// source task and exit edges for every sink.
    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let file: GraphFile = serde_json::from_str(text).map_err(|e| GraphError::File(e.to_string()))?;
        file.into_graph()
    }

    pub fn from_path(path: impl AsRef<FsPath>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GraphError::File(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// One of the shipped 8-task topologies: `mesh`, `tree` or `general`.
    pub fn builtin(name: &str) -> Result<Self, GraphError> {
        let text = builtin_json(name).ok_or_else(|| {
            GraphError::File(format!("unknown built-in graph '{name}' (expected one of {BUILTIN_GRAPHS:?})"))
        })?;
        Self::from_json(text)
    }
}

/// Names accepted by [`TaskGraph::builtin`].
pub const BUILTIN_GRAPHS: [&str; 3] = ["mesh", "tree", "general"];

pub fn builtin_json(name: &str) -> Option<&'static str> {
    match name {
        "mesh" => Some(include_str!("../graphs/mesh.json")),
        "tree" => Some(include_str!("../graphs/tree.json")),
        "general" => Some(include_str!("../graphs/general.json")),
        _ => None,
    }
}

fn topological_order(n: usize, edges: &[Edge], outgoing: &[Vec<usize>], incoming: &[Vec<usize>]) -> Vec<TaskId> {
    let mut indegree: Vec<usize> = incoming.iter().map(Vec::len).collect();
    let mut ready: BinaryHeap<Reverse<TaskId>> = (0..n).filter(|&v| indegree[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = ready.pop() {
        order.push(v);
        for &e in &outgoing[v] {
            let w = edges[e].to;
            indegree[w] -= 1;
            if indegree[w] == 0 {
                ready.push(Reverse(w));
            }
        }
    }
    order
}

/// One entry-to-exit path: its task sequence and the edges between them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub tasks: Vec<TaskId>,
    /// `edges[j]` connects `tasks[j]` to `tasks[j + 1]`.
    pub edges: Vec<usize>,
}

impl Path {
    /// Number of real tasks on the path.
    pub fn real_len(&self) -> usize {
        self.tasks.len() - 2
    }
}

/// All loop-free entry-to-exit paths plus, for every task, the paths through it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSet {
    paths: Vec<Path>,
    membership: Vec<Vec<usize>>,
}

impl PathSet {
    fn new(paths: Vec<Path>, task_count: usize) -> Self {
        let mut membership = vec![Vec::new(); task_count];
        for (o, p) in paths.iter().enumerate() {
            for &t in &p.tasks {
                membership[t].push(o);
            }
        }
        Self { paths, membership }
    }

    /// A set with no paths, for computations that only need the graph.
    pub fn empty(task_count: usize) -> Self {
        Self { paths: Vec::new(), membership: vec![Vec::new(); task_count] }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn path(&self, o: usize) -> &Path {
        &self.paths[o]
    }

    /// Indices of the paths that contain `task`.
    pub fn membership(&self, task: TaskId) -> &[usize] {
        &self.membership[task]
    }
}

// ---------------------------------------------------------------------------
// JSON file format

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub tasks: Vec<TaskEntry>,
    #[serde(default)]
    pub edges: Vec<EdgeEntry>,
    #[serde(default)]
    pub entry_inputs: Vec<EntryInput>,
    #[serde(default)]
    pub exit_outputs: Vec<ExitOutput>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskEntry {
    pub id: TaskId,
    pub workload_mcycles: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeEntry {
    pub from: TaskId,
    pub to: TaskId,
    pub kbytes: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntryInput {
    pub to: TaskId,
    pub kbytes: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExitOutput {
    pub from: TaskId,
    pub kbytes: f64,
}

impl GraphFile {
    pub fn into_graph(self) -> Result<TaskGraph, GraphError> {
        let m = self.tasks.len();
        let mut workloads = vec![None; m];
        for t in &self.tasks {
            if t.id == 0 || t.id > m {
                return Err(GraphError::File(format!("task ids must be 1..={m}, found {}", t.id)));
            }
            if workloads[t.id - 1].replace(t.workload_mcycles * CYCLES_PER_MCYCLE).is_some() {
                return Err(GraphError::File(format!("task {} listed twice", t.id)));
            }
        }
        let workloads: Vec<f64> = workloads.into_iter().map(|w| w.unwrap_or(0.0)).collect();
        let exit = m + 1;
        let real = |id: TaskId, what: &str| {
            if (1..=m).contains(&id) {
                Ok(())
            } else {
                Err(GraphError::File(format!("{what} refers to unknown task {id}")))
            }
        };

        let mut edges: Vec<Edge> = Vec::new();
        let mut has_pred = BTreeSet::new();
        let mut has_succ = BTreeSet::new();
        for e in &self.edges {
            real(e.from, "edge")?;
            real(e.to, "edge")?;
            has_succ.insert(e.from);
            has_pred.insert(e.to);
            edges.push(Edge { from: e.from, to: e.to, data_bits: e.kbytes * BITS_PER_KBYTE });
        }

        let mut inputs: HashMap<TaskId, f64> = HashMap::new();
        for i in &self.entry_inputs {
            real(i.to, "entry input")?;
            inputs.insert(i.to, i.kbytes);
        }
        let mut outputs: HashMap<TaskId, f64> = HashMap::new();
        for o in &self.exit_outputs {
            real(o.from, "exit output")?;
            outputs.insert(o.from, o.kbytes);
        }
        for id in 1..=m {
            if !has_pred.contains(&id) || inputs.contains_key(&id) {
                let kb = inputs.get(&id).copied().unwrap_or(0.0);
                edges.push(Edge { from: 0, to: id, data_bits: kb * BITS_PER_KBYTE });
            }
        }
        for id in 1..=m {
            if !has_succ.contains(&id) || outputs.contains_key(&id) {
                let kb = outputs.get(&id).copied().unwrap_or(0.0);
                edges.push(Edge { from: id, to: exit, data_bits: kb * BITS_PER_KBYTE });
            }
        }
        TaskGraph::with_real_tasks(&workloads, edges)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(m: usize) -> TaskGraph {
        let edges = (0..=m).map(|k| Edge { from: k, to: k + 1, data_bits: 1000.0 }).collect();
        TaskGraph::with_real_tasks(&vec![1e6; m], edges).unwrap()
    }

    fn diamond() -> TaskGraph {
        let e = |from, to| Edge { from, to, data_bits: 8.0 };
        TaskGraph::with_real_tasks(&[1e6, 2e6], vec![e(0, 1), e(0, 2), e(1, 3), e(2, 3)]).unwrap()
    }

    #[test]
    fn chain_is_valid_with_one_path() {
        let g = chain(2);
        assert!(g.validate().is_ok());
        let paths = g.enumerate_paths().unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths.path(0).tasks, vec![0, 1, 2, 3]);
        assert_eq!(paths.path(0).edges.len(), 3);
    }

    #[test]
    fn diamond_has_two_paths_in_order() {
        let paths = diamond().enumerate_paths().unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(paths.path(0).tasks, vec![0, 1, 3]);
        assert_eq!(paths.path(1).tasks, vec![0, 2, 3]);
        assert_eq!(paths.membership(0), &[0, 1]);
        assert_eq!(paths.membership(3), &[0, 1]);
        assert_eq!(paths.membership(2), &[1]);
    }

    #[test]
    fn two_cycle_is_rejected() {
        let e = |from, to| Edge { from, to, data_bits: 0.0 };
        let err = TaskGraph::with_real_tasks(&[1.0, 1.0], vec![e(0, 1), e(1, 2), e(2, 1), e(2, 3)]).unwrap_err();
        assert!(matches!(err, GraphError::CyclicGraph { .. }), "{err}");
    }

    #[test]
    fn unreachable_task_is_rejected() {
        let e = |from, to| Edge { from, to, data_bits: 0.0 };
        // Task 2 only feeds the exit; nothing reaches it from the entry.
        let err = TaskGraph::with_real_tasks(&[1.0, 1.0], vec![e(0, 1), e(1, 3), e(2, 3)]).unwrap_err();
        assert_eq!(err, GraphError::DisconnectedTask { task: 2 });
    }

    #[test]
    fn virtual_task_rules() {
        let e = |from, to| Edge { from, to, data_bits: 0.0 };
        let err = TaskGraph::with_real_tasks(&[1.0], vec![e(0, 1), e(1, 2), e(2, 0)]).unwrap_err();
        assert!(matches!(err, GraphError::BadVirtualTask { task: 0, .. }), "{err}");

        let tasks = vec![
            Task { id: 0, workload_cycles: 0.0 },
            Task { id: 1, workload_cycles: 1.0 },
            Task { id: 2, workload_cycles: 5.0 },
        ];
        let err = TaskGraph::new(tasks, vec![e(0, 1), e(1, 2)]).unwrap_err();
        assert!(matches!(err, GraphError::BadVirtualTask { task: 2, .. }), "{err}");
    }

    #[test]
    fn bad_edges() {
        let e = |from, to| Edge { from, to, data_bits: 0.0 };
        assert!(matches!(
            TaskGraph::with_real_tasks(&[1.0], vec![e(0, 1), e(1, 1), e(1, 2)]),
            Err(GraphError::BadEdge { .. })
        ));
        assert!(matches!(TaskGraph::with_real_tasks(&[1.0], vec![e(0, 1), e(1, 7)]), Err(GraphError::BadEdge { .. })));
        assert!(matches!(
            TaskGraph::with_real_tasks(&[1.0], vec![e(0, 1), e(0, 1), e(1, 2)]),
            Err(GraphError::BadEdge { .. })
        ));
    }

    #[test]
    fn predecessors_lookup() {
        assert_eq!(diamond().predecessors(3).unwrap(), vec![1, 2]);
        assert_eq!(chain(2).predecessors(1).unwrap(), vec![0]);
        assert_eq!(chain(2).predecessors(9), Err(GraphError::BadIndex { task: 9, len: 4 }));
    }

    #[test]
    fn path_cap_is_enforced() {
        assert_eq!(diamond().enumerate_paths_capped(1), Err(GraphError::PathExplosion { cap: 1 }));
        assert_eq!(diamond().enumerate_paths_capped(2).unwrap().len(), 2);
    }

    #[test]
    fn json_loader_synthesizes_virtual_edges() {
        let text = r#"{
            "tasks": [{"id": 1, "workload_mcycles": 2.0}, {"id": 2, "workload_mcycles": 3.0}],
            "edges": [{"from": 1, "to": 2, "kbytes": 10}],
            "entry_inputs": [{"to": 1, "kbytes": 4}],
            "exit_outputs": [{"from": 2, "kbytes": 1}]
        }"#;
        let g = TaskGraph::from_json(text).unwrap();
        assert_eq!(g.real_task_count(), 2);
        assert_eq!(g.workload(2), 3.0e6);
        assert_eq!(g.edges()[g.edge_index(1, 2).unwrap()].data_bits, 10.0 * 8192.0);
        assert_eq!(g.edges()[g.edge_index(0, 1).unwrap()].data_bits, 4.0 * 8192.0);
        assert_eq!(g.edges()[g.edge_index(2, 3).unwrap()].data_bits, 8192.0);
        assert_eq!(g.edge_index(0, 2), None);
    }

    #[test]
    fn json_loader_rejects_unknown_ids() {
        let text = r#"{"tasks": [{"id": 1, "workload_mcycles": 2.0}], "edges": [{"from": 1, "to": 4, "kbytes": 1}]}"#;
        assert!(matches!(TaskGraph::from_json(text), Err(GraphError::File(_))));
    }

    #[test]
    fn tree_exit_predecessors_are_the_leaves() {
        let g = TaskGraph::builtin("tree").unwrap();
        let leaves: Vec<TaskId> =
            (1..=g.real_task_count()).filter(|&t| g.successors(t).unwrap() == vec![g.exit()]).collect();
        assert_eq!(g.predecessors(g.exit()).unwrap(), leaves);
        assert_eq!(leaves, vec![5, 6, 7, 8]);
    }
}
