use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dagoff::actor::Agent;
use dagoff::harness::{self, Baseline, EvalSet, ExperimentConfig, RowKind};

#[derive(Parser)]
#[command(name = "dagoff", version, about = "Task offloading and CPU frequency control for task-graph applications")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the policy and write metrics.csv, summary.csv and checkpoint.json.
    Train(Common),
    /// Compare the policy with the baselines on the evaluation realizations.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Trained checkpoint; without one the policy is trained first.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Skip the learned policy and compare baselines only.
        #[arg(long)]
        no_drl: bool,
    },
    /// Measure the accuracy of a trained checkpoint against exhaustive search.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Check the one-climb optimality conditions on sampled realizations.
    DiagnoseOneclimb {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        realizations: usize,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Built-in graph (mesh, tree, general) or a graph JSON file.
    #[arg(long)]
    graph: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Evaluate every generated candidate instead of one-climb ones only.
    #[arg(long)]
    no_one_climb: bool,
    /// Comma-separated subset of exhaustive,gibbs,all-local,all-edge.
    #[arg(long, value_delimiter = ',')]
    baselines: Option<Vec<Baseline>>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long)]
    eval_realizations: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let e = &mut c.experiment;
        if let Some(s) = self.seed {
            e.seed = s;
        }
        if let Some(g) = &self.graph {
            e.graph = g.clone();
        }
        if let Some(d) = &self.out_dir {
            e.out_dir = d.clone();
        }
        if let Some(b) = &self.baselines {
            e.baselines = b.clone();
        }
        if let Some(n) = self.epochs {
            e.epochs = n;
        }
        if let Some(n) = self.warmup {
            e.warmup = n;
        }
        if let Some(n) = self.eval_realizations {
            e.eval_realizations = n;
        }
        if self.no_one_climb {
            c.drl.one_climb = false;
        }
        c.validate()?;
        Ok(c)
    }
}

fn train(config: &ExperimentConfig) -> Result<Agent> {
    let epochs = config.experiment.epochs;
    let step = (epochs / 20).max(1);
    let out = harness::run_experiment_observed(config, |row| match row.kind {
        RowKind::Train if row.epoch % step == 0 => {
            let loss = row.moving_avg_loss.map_or("-".to_string(), |l| format!("{l:.4}"));
            eprintln!("epoch {:>7}/{epochs}  moving loss {loss}", row.epoch);
        }
        RowKind::Eval => eprintln!(
            "epoch {:>7}  eval  eta_drl {:.6}  eta_opt {:.6}  chi {:.5}",
            row.epoch,
            row.eta_drl.unwrap_or(f64::NAN),
            row.eta_opt.unwrap_or(f64::NAN),
            row.chi.unwrap_or(f64::NAN)
        ),
        RowKind::Train => {}
    })?;
    println!("{}", out.summary_table);
    println!("final accuracy {:.5}", out.final_evaluation.chi);
    println!("metrics    {}", out.metrics_path.display());
    println!("summary    {}", out.summary_path.display());
    println!("checkpoint {}", out.checkpoint_path.display());
    Ok(out.agent)
}

fn load_agent(path: &PathBuf) -> Result<Agent> {
    Agent::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train(common) => {
            train(&common.config()?)?;
        }
        Command::Compare { common, checkpoint, no_drl } => {
            let config = common.config()?;
            let agent = match (no_drl, checkpoint) {
                (true, _) => None,
                (false, Some(path)) => Some(load_agent(&path)?),
                (false, None) => Some(train(&config)?),
            };
            let cmp = harness::compare_methods(&config, agent.as_ref())?;
            println!("{}", cmp.table);
            println!("rows    {}", cmp.csv_path.display());
            println!("summary {}", cmp.summary_path.display());
        }
        Command::Eval { common, checkpoint } => {
            let config = common.config()?;
            let mut agent = load_agent(&checkpoint)?;
            agent.config.one_climb = config.drl.one_climb;
            let graph = config.load_graph()?;
            let paths = graph.enumerate_paths()?;
            let e = &config.experiment;
            let set = EvalSet::new(&graph, &paths, &config.env, &config.critic, e.seed, e.eval_realizations)?;
            let ev = harness::evaluate_agent(&agent, &graph, &paths, &config.env, &config.critic, &set)?;
            println!("realizations {}", set.states.len());
            println!("mean eta (policy)     {:.6}", ev.mean_drl);
            println!("mean eta (exhaustive) {:.6}", ev.mean_opt);
            println!("accuracy              {:.5}", ev.chi);
        }
        Command::DiagnoseOneclimb { common, realizations } => {
            let config = common.config()?;
            let report = harness::diagnose_one_climb(&config, realizations)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}
