//! The learned actor: a network maps the channel state to a relaxed action,
//! the quantizer expands it into binary candidates, the critic picks the best
//! one, and the network is trained to imitate past picks.

pub mod diagnose;
pub mod mlp;
pub mod quantize;
pub mod replay;

use std::fs;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{sample_state_with, EnvParams, EnvState};
use crate::critic::{solve, CriticError, CriticOpts, CriticResult};
use crate::graph::{PathSet, TaskGraph};
use crate::rng::{derive, purpose, stream};
use crate::schedule::{Instance, OffloadDecision};

pub use diagnose::{one_climb_conditions_report, OneClimbReport};
pub use mlp::{Adam, Gradients, MlpParams};
pub use quantize::{
    gnop_quantize, is_one_climb, one_climb_filter, order_preserving_quantize, CandidateSet, Provenance,
};
pub use replay::{Experience, ReplayMemory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActorError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot build {count} order-preserving actions (at most {max})")]
    CountTooLarge { count: usize, max: usize },
    #[error("need {need} samples, have {have}")]
    InsufficientData { have: usize, need: usize },
    #[error("candidate budget {0} must be even and positive")]
    OddCandidateCount(usize),
    #[error("no candidate actions to choose from")]
    NoCandidates,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Critic(#[from] CriticError),
}

/// Network input: log10 of every uplink gain, then every downlink gain, in
/// graph edge order, then the edge frequency scaled to `[0, 1]`.
pub fn featurize(state: &EnvState, params: &EnvParams) -> Vec<f64> {
    let mut out = Vec::with_capacity(feature_dim(state.h_up.len()));
    out.extend(state.h_up.iter().map(|g| g.log10()));
    out.extend(state.h_down.iter().map(|g| g.log10()));
    let span = params.f_edge_max_hz - params.f_edge_min_hz;
    out.push(if span > 0.0 { (state.f_edge_hz - params.f_edge_min_hz) / span } else { 0.0 });
    out
}

pub fn feature_dim(edge_count: usize) -> usize {
    2 * edge_count + 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DrlConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub memory_capacity: usize,
    /// Train once every this many epochs.
    pub train_interval: u64,
    /// Candidate budget per epoch, even.
    pub candidates: usize,
    pub hidden: Vec<usize>,
    pub one_climb: bool,
}

impl Default for DrlConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 128,
            memory_capacity: 1024,
            train_interval: 10,
            candidates: 16,
            hidden: vec![160, 120, 80],
            one_climb: true,
        }
    }
}

/// Index of the lowest-ETC candidate (first on ties) with its critic result.
pub fn select_action(
    candidates: &CandidateSet,
    inst: &Instance<'_>,
    opts: &CriticOpts,
) -> Result<(usize, CriticResult), ActorError> {
    let mut best: Option<(usize, CriticResult)> = None;
    for (idx, action) in candidates.actions.iter().enumerate() {
        let result = solve(inst, action, opts)?;
        if best.as_ref().is_none_or(|(_, b)| result.eta() < b.eta()) {
            best = Some((idx, result));
        }
    }
    best.ok_or(ActorError::NoCandidates)
}

/// One Adam step on a batch drawn from `memory`. Returns the batch loss
/// before the update.
pub fn train_step<R: rand::Rng + ?Sized>(
    params: &mut MlpParams,
    memory: &ReplayMemory,
    batch_size: usize,
    adam: &mut Adam,
    rng: &mut R,
) -> Result<f64, ActorError> {
    let batch = memory.sample(rng, batch_size)?;
    let inputs: Vec<&[f64]> = batch.iter().map(|e| e.features.as_slice()).collect();
    let targets: Vec<&[f64]> = batch.iter().map(|e| e.action.as_slice()).collect();
    let (loss, grads) = params.loss_and_grad(&inputs, &targets)?;
    adam.update(params, &grads);
    Ok(loss)
}

/// What the actor chose for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub candidates: CandidateSet,
    pub chosen: usize,
    pub result: CriticResult,
}

impl Decision {
    pub fn action(&self) -> &OffloadDecision {
        &self.candidates.actions[self.chosen]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochOutcome {
    pub epoch: u64,
    pub decision: Decision,
    pub loss: Option<f64>,
}

/// Network, optimizer and replay memory plus the epoch counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub config: DrlConfig,
    pub seed: u64,
    pub epoch: u64,
    pub net: MlpParams,
    pub adam: Adam,
    pub memory: ReplayMemory,
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    agent: Agent,
}

impl Agent {
    pub fn new(graph: &TaskGraph, config: DrlConfig, seed: u64) -> Self {
        let mut sizes = vec![feature_dim(graph.edges().len())];
        sizes.extend(&config.hidden);
        sizes.push(graph.real_task_count());
        let net = MlpParams::new(&sizes, &mut stream(derive(seed, &[purpose::INIT]), 0));
        let adam = Adam::new(&net, config.learning_rate);
        let memory = ReplayMemory::new(config.memory_capacity);
        Self { config, seed, epoch: 0, net, adam, memory }
    }

    /// Environment realization seen at training epoch `epoch` (1-based).
    pub fn training_state(&self, params: &EnvParams, edge_count: usize, epoch: u64) -> EnvState {
        sample_state_with(params, edge_count, &mut stream(derive(self.seed, &[purpose::ENV]), epoch))
    }

    /// Forward, quantize, optionally filter and let the critic choose.
    pub fn decide<R: rand::Rng + ?Sized>(
        &self,
        inst: &Instance<'_>,
        noise: &mut R,
        opts: &CriticOpts,
    ) -> Result<Decision, ActorError> {
        self.decide_with(inst, noise, opts, self.config.one_climb)
    }

    /// [`Agent::decide`] with the one-climb filter switched explicitly.
    pub fn decide_with<R: rand::Rng + ?Sized>(
        &self,
        inst: &Instance<'_>,
        noise: &mut R,
        opts: &CriticOpts,
        one_climb: bool,
    ) -> Result<Decision, ActorError> {
        let features = featurize(inst.state, inst.params);
        let relaxed = self.net.forward(&features)?;
        let mut candidates = gnop_quantize(&relaxed, self.config.candidates, noise)?;
        if one_climb {
            candidates = one_climb_filter(&candidates, inst.paths, inst.real_task_count());
        }
        let (chosen, result) = select_action(&candidates, inst, opts)?;
        Ok(Decision { candidates, chosen, result })
    }

    pub fn should_train(&self, epoch: u64) -> bool {
        let len = self.memory.len();
        epoch.is_multiple_of(self.config.train_interval.max(1))
            && 2 * len >= self.memory.capacity()
            && len >= self.config.batch_size
    }

    /// Advances one epoch: sample a state, decide, store, maybe train.
    pub fn run_epoch(
        &mut self,
        graph: &TaskGraph,
        paths: &PathSet,
        params: &EnvParams,
        opts: &CriticOpts,
    ) -> Result<EpochOutcome, ActorError> {
        let epoch = self.epoch + 1;
        let state = self.training_state(params, graph.edges().len(), epoch);
        let inst = Instance::new(graph, paths, params, &state);
        let mut noise = stream(derive(self.seed, &[purpose::NOISE]), epoch);
        let decision = self.decide(&inst, &mut noise, opts)?;
        self.memory.push(Experience { features: featurize(&state, params), action: decision.action().as_f64() });
        self.epoch = epoch;
        let loss = if self.should_train(epoch) {
            let mut rng = stream(derive(self.seed, &[purpose::BATCH]), epoch);
            Some(train_step(&mut self.net, &self.memory, self.config.batch_size, &mut self.adam, &mut rng)?)
        } else {
            None
        };
        Ok(EpochOutcome { epoch, decision, loss })
    }

    /// JSON with a version tag; see the README for the layout.
    pub fn save(&self, path: impl AsRef<FsPath>) -> Result<(), ActorError> {
        let text = serde_json::to_string(&Checkpoint { version: CHECKPOINT_VERSION, agent: self.clone() })
            .map_err(|e| ActorError::Checkpoint(e.to_string()))?;
        fs::write(path, text).map_err(|e| ActorError::Checkpoint(e.to_string()))
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self, ActorError> {
        let text = fs::read_to_string(path).map_err(|e| ActorError::Checkpoint(e.to_string()))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| ActorError::Checkpoint(e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(ActorError::Checkpoint(format!("unsupported version {}", ckpt.version)));
        }
        if !ckpt.agent.net.is_finite() {
            return Err(ActorError::Checkpoint("non-finite parameters".into()));
        }
        Ok(ckpt.agent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::mean_gain;

    fn tree() -> (TaskGraph, PathSet) {
        let g = TaskGraph::builtin("tree").unwrap();
        let p = g.enumerate_paths().unwrap();
        (g, p)
    }

    #[test]
    fn features_of_mean_state() {
        let (g, _) = tree();
        let params = EnvParams::default();
        let h = mean_gain(&params);
        let state = EnvState::uniform(g.edges().len(), h, params.f_edge_min_hz);
        let x = featurize(&state, &params);
        assert_eq!(x.len(), 2 * g.edges().len() + 1);
        assert!(x[..x.len() - 1].iter().all(|&v| v == h.log10()));
        assert_eq!(*x.last().unwrap(), 0.0);
    }

    #[test]
    fn single_candidate_is_returned() {
        let (g, p) = tree();
        let params = EnvParams::default();
        let state = crate::channel::sample_state(&params, &g, 4);
        let inst = Instance::new(&g, &p, &params, &state);
        let mut set = CandidateSet::default();
        let only = OffloadDecision::from_code(0b1010_0110, 8);
        set.push_unique(only.clone(), Provenance::OrderPreserving);
        let (idx, res) = select_action(&set, &inst, &CriticOpts::default()).unwrap();
        assert_eq!(idx, 0);
        assert_eq!(res.decision, only);
    }

    #[test]
    fn training_starts_at_half_memory() {
        let (g, p) = tree();
        let params = EnvParams::default();
        let config =
            DrlConfig { train_interval: 1, memory_capacity: 4, batch_size: 2, hidden: vec![8], ..DrlConfig::default() };
        let mut agent = Agent::new(&g, config, 1);
        let opts = CriticOpts::default();
        assert_eq!(agent.run_epoch(&g, &p, &params, &opts).unwrap().loss, None);
        assert!(agent.run_epoch(&g, &p, &params, &opts).unwrap().loss.is_some());
    }

    #[test]
    fn trajectories_reproduce() {
        let (g, p) = tree();
        let params = EnvParams::default();
        let config = DrlConfig {
            train_interval: 2,
            memory_capacity: 8,
            batch_size: 4,
            hidden: vec![16, 8],
            ..DrlConfig::default()
        };
        let run = || {
            let mut agent = Agent::new(&g, config.clone(), 77);
            let opts = CriticOpts::default();
            let codes: Vec<u64> =
                (0..20).map(|_| agent.run_epoch(&g, &p, &params, &opts).unwrap().decision.action().code()).collect();
            (codes, agent)
        };
        let (a, agent_a) = run();
        let (b, agent_b) = run();
        assert_eq!(a, b);
        assert_eq!(agent_a, agent_b);
    }

    #[test]
    fn checkpoint_round_trip() {
        let (g, p) = tree();
        let params = EnvParams::default();
        let config =
            DrlConfig { train_interval: 1, memory_capacity: 4, batch_size: 2, hidden: vec![6], ..DrlConfig::default() };
        let mut agent = Agent::new(&g, config, 3);
        for _ in 0..5 {
            agent.run_epoch(&g, &p, &params, &CriticOpts::default()).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("agent.json");
        agent.save(&file).unwrap();
        assert_eq!(Agent::load(&file).unwrap(), agent);
    }
}
