use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use boostlab::data::Split;
use boostlab::eval::MdMode;
use boostlab_cli::commands::{self, DATASET_FILE};
use boostlab_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "boostlab", version, about = "Boosting losses for toy image-text matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ArtifactArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset described by the config.
    Gen(RunArgs),
    /// Train according to the config's scenario.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Dataset file (default: `<out>/dataset.json`).
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Seeds trained in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Score a checkpoint on a split; writes report.json and hist.csv.
    Eval {
        #[command(flatten)]
        artifacts: ArtifactArgs,
        /// mean-difference or hardest-negative.
        #[arg(long, default_value = "mean-difference")]
        md: String,
    },
    /// Run the property suite.
    Check {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write only the similarity histogram of a checkpoint on a split.
    Hist {
        #[command(flatten)]
        artifacts: ArtifactArgs,
    },
}

fn parse_split(s: &str) -> CliResult<Split> {
    s.parse().map_err(|e: boostlab::Error| CliError::Config(e.to_string()))
}

fn parse_md(s: &str) -> CliResult<MdMode> {
    match s {
        "mean-difference" => Ok(MdMode::MeanDifference),
        "hardest-negative" => Ok(MdMode::HardestNegative),
        other => Err(CliError::Config(format!("unknown md mode `{other}`"))),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Gen(a) => {
            let cfg = commands::resolve(&a.config, a.out, a.seed)?;
            let sum = commands::cmd_gen(&cfg)?;
            println!("wrote {}", cfg.out_dir.join(DATASET_FILE).display());
            println!("checksum {sum}");
        }
        Command::Train { run, dataset, jobs } => {
            let cfg = commands::resolve(&run.config, run.out, run.seed)?;
            for s in commands::cmd_train(&cfg, dataset.as_deref(), jobs)? {
                match (s.best_epoch, s.best_rsum) {
                    (Some(e), Some(r)) => println!("seed {} best epoch {e} val rsum {r} -> {}", s.seed, s.dir.display()),
                    _ => println!("seed {} no epochs run, initial parameters -> {}", s.seed, s.dir.display()),
                }
            }
        }
        Command::Eval { artifacts: a, md } => {
            let rep = commands::cmd_eval(&a.checkpoint, &a.dataset, parse_split(&a.split)?, &a.out, parse_md(&md)?)?;
            let rsum = serde_json::to_string(&rep.rsum).expect("finite number");
            println!("rsum {rsum}");
        }
        Command::Check { seed } => {
            let (lines, ok) = commands::cmd_check(seed);
            for l in lines {
                println!("{l}");
            }
            if !ok {
                return Err(CliError::Failed("property suite failed".into()));
            }
        }
        Command::Hist { artifacts: a } => {
            commands::cmd_hist(&a.checkpoint, &a.dataset, parse_split(&a.split)?, &a.out)?;
            println!("wrote {}", a.out.join(commands::HIST_FILE).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
