//! Experiment driver: configuration, training runs with periodic evaluation,
//! method comparisons and CSV output.
//!
//! `metrics.csv` has one row per training epoch (`kind = train`) and one per
//! evaluation (`kind = eval`):
//!
//! ```text
//! epoch,kind,loss,moving_avg_loss,eta_drl,eta_opt,chi
//! ```
//!
//! Train rows carry the ETC of the chosen action and, on epochs that trained,
//! the batch loss and its moving average over the last 15 losses. Eval rows
//! carry the mean ETC of the frozen policy and of exhaustive search over a
//! fixed set of realizations, and the accuracy
//! `chi = 1 - (eta_drl - eta_opt) / eta_opt`. Wall-clock times never go into
//! this file so that it is reproducible byte for byte.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actor::{one_climb_conditions_report, ActorError, Agent, DrlConfig, OneClimbReport};
use crate::baselines::{self, BaselineError, GibbsOpts};
use crate::channel::{sample_state_with, ChannelError, EnvParams, EnvState};
use crate::critic::CriticOpts;
use crate::graph::{GraphError, PathSet, TaskGraph};
use crate::rng::{derive, purpose, stream};
use crate::schedule::Instance;

pub const METRICS_HEADER: &str = "epoch,kind,loss,moving_avg_loss,eta_drl,eta_opt,chi";
pub const SUMMARY_HEADER: &str = "method,realizations,mean_eta,std_eta,mean_wall_time_s,std_wall_time_s";
pub const COMPARISON_HEADER: &str = "realization,method,eta,wall_time_s";
pub const LOSS_WINDOW: usize = 15;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Actor(#[from] ActorError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

fn io_err(path: &FsPath) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    Exhaustive,
    Gibbs,
    AllLocal,
    AllEdge,
}

impl Baseline {
    pub const ALL: [Baseline; 4] = [Baseline::Exhaustive, Baseline::Gibbs, Baseline::AllLocal, Baseline::AllEdge];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Exhaustive => "exhaustive",
            Baseline::Gibbs => "gibbs",
            Baseline::AllLocal => "all-local",
            Baseline::AllEdge => "all-edge",
        }
    }
}

impl FromStr for Baseline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.name() == s.trim())
            .ok_or_else(|| format!("unknown baseline {s:?}; expected one of exhaustive, gibbs, all-local, all-edge"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Built-in graph name (`mesh`, `tree`, `general`) or a path to a graph file.
    pub graph: String,
    pub epochs: u64,
    /// Epochs before the first evaluation.
    pub warmup: u64,
    pub eval_realizations: usize,
    /// Epochs between evaluations after the warm-up.
    pub eval_interval: u64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub baselines: Vec<Baseline>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            graph: "tree".into(),
            epochs: 21_000,
            warmup: 20_000,
            eval_realizations: 50,
            eval_interval: 500,
            seed: 1,
            out_dir: PathBuf::from("runs"),
            baselines: Baseline::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub env: EnvParams,
    pub drl: DrlConfig,
    pub critic: CriticOpts,
    pub gibbs: GibbsOpts,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        let e = &self.experiment;
        if e.epochs <= e.warmup {
            return bad(format!("epochs ({}) must exceed warmup ({})", e.epochs, e.warmup));
        }
        if e.eval_realizations == 0 {
            return bad("eval_realizations must be at least 1".into());
        }
        if e.eval_interval == 0 {
            return bad("eval_interval must be at least 1".into());
        }
        self.env.validate()?;
        let d = &self.drl;
        if d.candidates == 0 || d.candidates % 2 == 1 {
            return bad(format!("drl.candidates must be even and positive, got {}", d.candidates));
        }
        if d.batch_size == 0 || d.batch_size > d.memory_capacity {
            return bad(format!("drl.batch_size must lie in 1..={}, got {}", d.memory_capacity, d.batch_size));
        }
        if d.train_interval == 0 {
            return bad("drl.train_interval must be at least 1".into());
        }
        if !(d.learning_rate.is_finite() && d.learning_rate > 0.0) {
            return bad(format!("drl.learning_rate must be positive, got {}", d.learning_rate));
        }
        if !(self.gibbs.decay > 0.0 && self.gibbs.decay <= 1.0) {
            return bad(format!("gibbs.decay must lie in (0, 1], got {}", self.gibbs.decay));
        }
        Ok(())
    }

    pub fn load_graph(&self) -> Result<TaskGraph, HarnessError> {
        let name = &self.experiment.graph;
        if crate::graph::builtin_json(name).is_some() {
            Ok(TaskGraph::builtin(name)?)
        } else {
            Ok(TaskGraph::from_path(name)?)
        }
    }

    fn wants(&self, b: Baseline) -> bool {
        self.experiment.baselines.contains(&b)
    }
}

/// Evaluation realization `i`, drawn from its own stream.
pub fn eval_state(params: &EnvParams, edge_count: usize, seed: u64, i: usize) -> EnvState {
    sample_state_with(params, edge_count, &mut stream(derive(seed, &[purpose::EVAL]), i as u64))
}

fn eval_noise(seed: u64, i: usize) -> crate::rng::Rng {
    stream(derive(seed, &[purpose::EVAL, purpose::NOISE]), i as u64)
}

pub fn accuracy(eta_drl: f64, eta_opt: f64) -> f64 {
    1.0 - (eta_drl - eta_opt) / eta_opt
}

/// Fixed evaluation realizations with their exhaustive optima.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub seed: u64,
    pub states: Vec<EnvState>,
    pub optimal_eta: Vec<f64>,
}

impl EvalSet {
    pub fn new(
        graph: &TaskGraph,
        paths: &PathSet,
        params: &EnvParams,
        critic: &CriticOpts,
        seed: u64,
        n: usize,
    ) -> Result<Self, HarnessError> {
        let states: Vec<EnvState> = (0..n).map(|i| eval_state(params, graph.edges().len(), seed, i)).collect();
        let optimal_eta = states
            .iter()
            .map(|s| Ok(baselines::exhaustive(&Instance::new(graph, paths, params, s), critic)?.eta()))
            .collect::<Result<Vec<_>, HarnessError>>()?;
        Ok(Self { seed, states, optimal_eta })
    }

    pub fn mean_optimal(&self) -> f64 {
        mean(&self.optimal_eta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub eta_drl: Vec<f64>,
    pub eta_opt: Vec<f64>,
    pub mean_drl: f64,
    pub mean_opt: f64,
    pub chi: f64,
}

/// Rejects a policy whose input or output width does not match `graph`.
pub fn check_agent(agent: &Agent, graph: &TaskGraph) -> Result<(), HarnessError> {
    let inputs = crate::actor::feature_dim(graph.edges().len());
    if agent.net.input_dim() != inputs || agent.net.output_dim() != graph.real_task_count() {
        return Err(HarnessError::Config(format!(
            "policy expects {} inputs and {} tasks but the graph gives {inputs} and {}; was it trained on another graph?",
            agent.net.input_dim(),
            agent.net.output_dim(),
            graph.real_task_count()
        )));
    }
    Ok(())
}

/// Frozen-policy ETC on every realization of `set`.
pub fn evaluate_agent(
    agent: &Agent,
    graph: &TaskGraph,
    paths: &PathSet,
    params: &EnvParams,
    critic: &CriticOpts,
    set: &EvalSet,
) -> Result<Evaluation, HarnessError> {
    check_agent(agent, graph)?;
    let idx: Vec<usize> = (0..set.states.len()).collect();
    let eta_drl = crate::par_map(&idx, |&i| {
        let inst = Instance::new(graph, paths, params, &set.states[i]);
        agent.decide(&inst, &mut eval_noise(set.seed, i), critic).map(|d| d.result.eta())
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let mean_drl = mean(&eta_drl);
    let mean_opt = set.mean_optimal();
    Ok(Evaluation { eta_drl, eta_opt: set.optimal_eta.clone(), mean_drl, mean_opt, chi: accuracy(mean_drl, mean_opt) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: u64,
    pub kind: RowKind,
    pub loss: Option<f64>,
    pub moving_avg_loss: Option<f64>,
    pub eta_drl: Option<f64>,
    pub eta_opt: Option<f64>,
    pub chi: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let kind = match self.kind {
            RowKind::Train => "train",
            RowKind::Eval => "eval",
        };
        format!(
            "{},{kind},{},{},{},{},{}",
            self.epoch,
            cell(self.loss),
            cell(self.moving_avg_loss),
            cell(self.eta_drl),
            cell(self.eta_opt),
            cell(self.chi)
        )
    }
}

/// Mean of the last `window` values pushed.
#[derive(Debug, Clone)]
pub struct MovingAverage {
    window: usize,
    values: VecDeque<f64>,
}

impl MovingAverage {
    pub fn new(window: usize) -> Self {
        Self { window: window.max(1), values: VecDeque::new() }
    }

    pub fn push(&mut self, v: f64) -> f64 {
        if self.values.len() == self.window {
            self.values.pop_front();
        }
        self.values.push_back(v);
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Per-realization results of one method.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MethodStats {
    pub method: String,
    pub etas: Vec<f64>,
    pub wall_times_s: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Plain-text table and CSV with one line per method.
pub fn emit_summary(stats: &[MethodStats]) -> (String, String) {
    let mut csv = format!("{SUMMARY_HEADER}\n");
    let mut table =
        format!("{:<22} {:>5} {:>14} {:>12} {:>14}\n", "method", "n", "mean eta", "std eta", "mean time (s)");
    for s in stats {
        let (me, se) = (mean(&s.etas), std_dev(&s.etas));
        if s.wall_times_s.is_empty() {
            let _ = writeln!(csv, "{},{},{me},{se},,", s.method, s.etas.len());
            let _ = writeln!(table, "{:<22} {:>5} {:>14.6} {:>12.3e} {:>14}", s.method, s.etas.len(), me, se, "-");
        } else {
            let (mt, st) = (mean(&s.wall_times_s), std_dev(&s.wall_times_s));
            let _ = writeln!(csv, "{},{},{me},{se},{mt},{st}", s.method, s.etas.len());
            let _ = writeln!(table, "{:<22} {:>5} {:>14.6} {:>12.3e} {:>14.3e}", s.method, s.etas.len(), me, se, mt);
        }
    }
    (table, csv)
}

fn write_file(path: &FsPath, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(io_err(path))
}

fn ensure_dir(dir: &FsPath) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub agent: Agent,
    pub evaluations: Vec<MetricsRow>,
    pub final_evaluation: Evaluation,
    pub metrics_path: PathBuf,
    pub summary_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub summary_table: String,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    run_experiment_observed(config, |_| {})
}

/// Trains for `epochs` epochs, evaluating after the warm-up, and writes
/// `metrics.csv`, `summary.csv` and `checkpoint.json` into the output
/// directory. `observe` sees every row as it is written.
pub fn run_experiment_observed(
    config: &ExperimentConfig,
    mut observe: impl FnMut(&MetricsRow),
) -> Result<ExperimentOutcome, HarnessError> {
    config.validate()?;
    let exp = &config.experiment;
    let graph = config.load_graph()?;
    let paths = graph.enumerate_paths()?;
    let params = &config.env;
    let critic = &config.critic;
    ensure_dir(&exp.out_dir)?;

    let eval_set = EvalSet::new(&graph, &paths, params, critic, exp.seed, exp.eval_realizations)?;
    let mut agent = Agent::new(&graph, config.drl.clone(), exp.seed);

    let metrics_path = exp.out_dir.join("metrics.csv");
    let file = File::create(&metrics_path).map_err(io_err(&metrics_path))?;
    let mut out = BufWriter::new(file);
    let mut emit = |row: &MetricsRow, out: &mut BufWriter<File>| -> Result<(), HarnessError> {
        writeln!(out, "{}", row.to_csv()).map_err(io_err(&metrics_path))?;
        observe(row);
        Ok(())
    };
    writeln!(out, "{METRICS_HEADER}").map_err(io_err(&metrics_path))?;

    let mut losses = MovingAverage::new(LOSS_WINDOW);
    let mut evaluations = Vec::new();
    let mut last_eval = None;
    for epoch in 1..=exp.epochs {
        let outcome = agent.run_epoch(&graph, &paths, params, critic)?;
        let moving = outcome.loss.map(|l| losses.push(l));
        let row = MetricsRow {
            epoch,
            kind: RowKind::Train,
            loss: outcome.loss,
            moving_avg_loss: moving,
            eta_drl: Some(outcome.decision.result.eta()),
            eta_opt: None,
            chi: None,
        };
        emit(&row, &mut out)?;

        if epoch > exp.warmup && ((epoch - exp.warmup).is_multiple_of(exp.eval_interval) || epoch == exp.epochs) {
            let ev = evaluate_agent(&agent, &graph, &paths, params, critic, &eval_set)?;
            let row = MetricsRow {
                epoch,
                kind: RowKind::Eval,
                loss: None,
                moving_avg_loss: None,
                eta_drl: Some(ev.mean_drl),
                eta_opt: Some(ev.mean_opt),
                chi: Some(ev.chi),
            };
            emit(&row, &mut out)?;
            out.flush().map_err(io_err(&metrics_path))?;
            evaluations.push(row);
            last_eval = Some(ev);
        }
    }
    out.flush().map_err(io_err(&metrics_path))?;
    let final_evaluation = last_eval.expect("the final epoch is always evaluated");

    let stats = vec![
        MethodStats { method: "drl".into(), etas: final_evaluation.eta_drl.clone(), wall_times_s: Vec::new() },
        MethodStats { method: "exhaustive".into(), etas: final_evaluation.eta_opt.clone(), wall_times_s: Vec::new() },
    ];
    let (summary_table, summary_csv) = emit_summary(&stats);
    let summary_path = exp.out_dir.join("summary.csv");
    write_file(&summary_path, &summary_csv)?;
    let checkpoint_path = exp.out_dir.join("checkpoint.json");
    agent.save(&checkpoint_path)?;

    Ok(ExperimentOutcome {
        agent,
        evaluations,
        final_evaluation,
        metrics_path,
        summary_path,
        checkpoint_path,
        summary_table,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub realization: usize,
    pub method: String,
    pub eta: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub stats: Vec<MethodStats>,
    pub table: String,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Runs every method on the evaluation realizations one after another, so
/// that per-decision wall times are not distorted by sibling work. Writes
/// `comparison.csv` and `comparison_summary.csv`.
pub fn compare_methods(config: &ExperimentConfig, agent: Option<&Agent>) -> Result<Comparison, HarnessError> {
    config.validate()?;
    let exp = &config.experiment;
    let graph = config.load_graph()?;
    let paths = graph.enumerate_paths()?;
    let params = &config.env;
    let critic = &config.critic;
    ensure_dir(&exp.out_dir)?;

    if let Some(agent) = agent {
        check_agent(agent, &graph)?;
    }
    let mut methods: Vec<String> = Vec::new();
    if agent.is_some() {
        methods.extend(["drl".to_string(), "drl-gnop".to_string()]);
    }
    methods.extend(Baseline::ALL.iter().filter(|&&b| config.wants(b)).map(|b| b.name().to_string()));
    let mut stats: Vec<MethodStats> =
        methods.iter().map(|m| MethodStats { method: m.clone(), ..MethodStats::default() }).collect();
    let mut rows = Vec::new();

    for i in 0..exp.eval_realizations {
        let state = eval_state(params, graph.edges().len(), exp.seed, i);
        let inst = Instance::new(&graph, &paths, params, &state);
        let mut record = |name: &str, eta: f64, wall: f64| {
            let s = stats.iter_mut().find(|s| s.method == name).expect("method registered");
            s.etas.push(eta);
            s.wall_times_s.push(wall);
            rows.push(ComparisonRow { realization: i, method: name.to_string(), eta, wall_time_s: wall });
        };
        if let Some(agent) = agent {
            for (name, one_climb) in [("drl", true), ("drl-gnop", false)] {
                let elapsed = crate::stopwatch();
                let d = agent.decide_with(&inst, &mut eval_noise(exp.seed, i), critic, one_climb)?;
                record(name, d.result.eta(), elapsed());
            }
        }
        for b in Baseline::ALL {
            if !config.wants(b) {
                continue;
            }
            let r = match b {
                Baseline::Exhaustive => baselines::exhaustive(&inst, critic)?,
                Baseline::Gibbs => {
                    let mut rng = stream(derive(exp.seed, &[purpose::GIBBS]), i as u64);
                    baselines::gibbs(&inst, critic, &config.gibbs, &mut rng)?.result
                }
                Baseline::AllLocal => baselines::all_local(&inst, critic)?,
                Baseline::AllEdge => baselines::all_edge(&inst, critic)?,
            };
            record(b.name(), r.eta(), r.wall_time_s);
        }
    }

    let mut csv = format!("{COMPARISON_HEADER}\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{}", r.realization, r.method, r.eta, r.wall_time_s);
    }
    let csv_path = exp.out_dir.join("comparison.csv");
    write_file(&csv_path, &csv)?;
    let (table, summary_csv) = emit_summary(&stats);
    let summary_path = exp.out_dir.join("comparison_summary.csv");
    write_file(&summary_path, &summary_csv)?;
    Ok(Comparison { rows, stats, table, csv_path, summary_path })
}

/// One-climb optimality conditions over `realizations` evaluation states.
pub fn diagnose_one_climb(config: &ExperimentConfig, realizations: usize) -> Result<OneClimbReport, HarnessError> {
    let graph = config.load_graph()?;
    let paths = graph.enumerate_paths()?;
    let states: Vec<EnvState> =
        (0..realizations).map(|i| eval_state(&config.env, graph.edges().len(), config.experiment.seed, i)).collect();
    Ok(one_climb_conditions_report(&graph, &paths, &states, &config.env))
}
