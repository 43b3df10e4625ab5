//! `ftgc` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ftgc::cli::{
    cmd_eval, cmd_generate, cmd_partition, cmd_train, ExperimentConfig, Overrides, PARAMS_FILE,
};

#[derive(Parser)]
#[command(name = "ftgc", version, about = "Federated temporal graph clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the configured DSBM and write edges.txt and labels.txt.
    Generate(Common),
    /// Split nodes across clients and write partition.txt.
    Partition(Common),
    /// Train federatedly and write params.bin, history.csv and config.toml.
    Train(Common),
    /// Evaluate trained params and write metrics.json and embeddings.txt.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Params file (defaults to params.bin in the output directory).
        #[arg(long)]
        params: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    clients: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    local_steps: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    k_clusters: Option<usize>,
}

impl Common {
    fn resolve(&self) -> ftgc::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            clients: self.clients,
            rounds: self.rounds,
            out_dir: self.out.clone(),
            lr: self.lr,
            local_steps: self.local_steps,
            alpha: self.alpha,
            beta: self.beta,
            k_clusters: self.k_clusters,
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> ftgc::Result<()> {
    match cli.command {
        Command::Generate(c) => {
            let cfg = c.resolve()?;
            let s = cmd_generate(&cfg)?;
            println!(
                "n={} T={} edges per snapshot: {:?}",
                s.n_nodes,
                s.edges_per_snapshot.len(),
                s.edges_per_snapshot
            );
        }
        Command::Partition(c) => {
            let cfg = c.resolve()?;
            let s = cmd_partition(&cfg)?;
            for (k, (nodes, g)) in s
                .split
                .client_node_sets
                .iter()
                .zip(&s.split.client_graphs)
                .enumerate()
            {
                let edges: usize = g.snapshots().iter().map(|s| s.edge_count()).sum();
                println!("client {k}: {} nodes, {edges} edges", nodes.len());
            }
        }
        Command::Train(c) => {
            let cfg = c.resolve()?;
            let s = cmd_train(&cfg)?;
            println!(
                "rounds={} initial_loss={:e} final_loss={:e}",
                s.history.rounds.len(),
                s.history.initial_loss(),
                s.history.final_loss
            );
        }
        Command::Eval { common, params } => {
            let cfg = common.resolve()?;
            let params = params.unwrap_or_else(|| cfg.out_dir.join(PARAMS_FILE));
            let s = cmd_eval(&cfg, &params)?;
            println!("{}", s.report.to_json());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
