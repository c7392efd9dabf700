use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mtl_lab::pipeline::{self, RunOptions};
use mtl_lab::{AlgoSet, ExperimentConfig, LabError, Result};

#[derive(Parser)]
#[command(name = "mtl-lab", version, about = "Multi-transmitter localization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train and test datasets.
    Generate(Args),
    /// Train the count classifier and one regressor per transmitter count.
    Train(Args),
    /// Evaluate the selected algorithms on the test set.
    Evaluate(Args),
    /// Run the constant-density and constant-area studies.
    Sweep(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// dl, reml, ps, rg, all, or a comma-separated list.
    #[arg(long, default_value = "all")]
    algo: String,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    jobs: Option<usize>,
}

type Stage = fn(&ExperimentConfig, &RunOptions) -> Result<Vec<PathBuf>>;

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let (args, stage): (&Args, Stage) = match &cli.command {
        Command::Generate(a) => (a, |c, _| pipeline::cmd_generate(c)),
        Command::Train(a) => (a, pipeline::cmd_train),
        Command::Evaluate(a) => (a, pipeline::cmd_evaluate),
        Command::Sweep(a) => (a, pipeline::cmd_sweep),
    };
    if !args.config.exists() {
        return Err(LabError::Missing(args.config.clone()));
    }
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    let opts = RunOptions { algos: args.algo.parse::<AlgoSet>()? };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(LabError::Usage("--jobs must be >= 1".into()));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build().map_err(|e| LabError::Usage(e.to_string()))?;
    pool.install(|| stage(&cfg, &opts))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            let err = LabError::Usage(first);
            eprintln!("{}", err.one_line());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.one_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
