//! `specshare` — train, evaluate and sweep spectrum-sharing policies.

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use specshare_cli::config::{load_config, RunConfig};
use specshare_cli::sweep::{run_sweep, write_sweep_outputs, SweepSpec};
use specshare_cli::{cmd_eval, cmd_oracle_baseline, cmd_random_baseline, cmd_train};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "specshare",
    about = "Vehicular spectrum sharing with learned CSI feedback",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (TOML); an empty file means published defaults.
    #[arg(long)]
    config: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy per the configured scheme into a run directory.
    Train {
        #[command(flatten)]
        common: ConfigArgs,
        /// Continue an interrupted run, or reuse a completed identical one.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a trained checkpoint against the oracle and random baselines.
    Eval {
        #[command(flatten)]
        common: ConfigArgs,
        /// Run directory or checkpoint file to evaluate.
        #[arg(long)]
        run: PathBuf,
        /// Also write a per-step trace.csv.
        #[arg(long)]
        trace: bool,
    },
    /// Run a paired sweep over one experiment variable.
    Sweep {
        /// Sweep spec (TOML with [sweep] and [base] sections).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "sweeps")]
        out: PathBuf,
        /// Concurrent jobs.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Per-step brute-force-optimal returns over the evaluation protocol.
    OracleBaseline {
        #[command(flatten)]
        common: ConfigArgs,
        /// Evaluation episode override.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Uniform-random allocation, normalized by the oracle.
    RandomBaseline {
        #[command(flatten)]
        common: ConfigArgs,
        /// Evaluation episode override.
        #[arg(long)]
        episodes: Option<usize>,
    },
}

fn load(common: &ConfigArgs, episodes: Option<usize>) -> Result<(RunConfig, u64)> {
    let mut cfg = load_config(&common.config)?;
    if let Some(episodes) = episodes {
        if episodes == 0 {
            bail!("--episodes must be positive");
        }
        cfg.evaluation.episodes = episodes;
    }
    let seed = common.seed.unwrap_or(cfg.seed);
    Ok((cfg, seed))
}

fn main() -> Result<()> {
    specshare_cli::blas_env::ensure_fast_blas_kernel();
    // jobs parallelize across runs, not inside a matrix product
    specshare::set_blas_threads(1);
    let cli = Cli::parse();
    match cli.command {
        Command::Train { common, resume } => {
            let (cfg, seed) = load(&common, None)?;
            let dir = cmd_train(&cfg, seed, &common.out, resume)?;
            println!("run directory: {}", dir.display());
        }
        Command::Eval { common, run, trace } => {
            let (cfg, _) = load(&common, None)?;
            let out = common.out.join(format!(
                "eval-{}-i{}-ni{}-nf{}",
                cfg.effective_label(),
                cfg.evaluation.feedback_interval,
                cfg.evaluation.input_noise_ratio,
                cfg.evaluation.feedback_noise_ratio
            ));
            let summary = cmd_eval(&cfg, &run, &out, trace)?;
            println!(
                "ARP: policy {:.2}%  random {:.2}%  ({} episodes, outputs in {})",
                summary.arp_policy,
                summary.arp_random,
                summary.episodes,
                out.display()
            );
        }
        Command::Sweep { spec, out, workers } => {
            let spec = SweepSpec::load(&spec)?;
            let cells = run_sweep(&spec, &out, workers)?;
            let csv = write_sweep_outputs(&spec, &cells, &out)?;
            for cell in &cells {
                println!(
                    "{}={} seed {} → ARP {:.2}%",
                    cell.variable, cell.value, cell.seed, cell.arp
                );
            }
            println!("long-format results: {}", csv.display());
        }
        Command::OracleBaseline { common, episodes } => {
            let (cfg, _) = load(&common, episodes)?;
            let out = common.out.join(format!("oracle-{}", cfg.effective_label()));
            let mean = cmd_oracle_baseline(&cfg, &out)?;
            println!(
                "oracle mean return {:.3} over {} episodes (outputs in {})",
                mean,
                cfg.evaluation.episodes,
                out.display()
            );
        }
        Command::RandomBaseline { common, episodes } => {
            let (cfg, _) = load(&common, episodes)?;
            let out = common.out.join(format!("random-{}", cfg.effective_label()));
            let arp = cmd_random_baseline(&cfg, &out)?;
            println!(
                "random ARP {:.2}% over {} episodes (outputs in {})",
                arp,
                cfg.evaluation.episodes,
                out.display()
            );
        }
    }
    Ok(())
}
