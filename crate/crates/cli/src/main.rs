//! `aldasel`: acoustic LDA training-data selection from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "aldasel", version, about = "Select pool utterances that match a small in-domain set using acoustic topic models")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured work directory.
    #[arg(long, global = true)]
    pub work_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic pool and dev corpus plus a matching config.
    Synth(commands::SynthArgs),
    /// Train the GMM quantizer on sampled frames.
    TrainGmm(commands::TrainGmmArgs),
    /// Map every frame to its most likely GMM component.
    Quantize(commands::QuantizeArgs),
    /// tf-idf weight the token documents.
    Tfidf(commands::TfidfArgs),
    /// Train the LDA model on weighted documents.
    TrainLda(commands::TrainLdaArgs),
    /// Infer per-utterance Dirichlet posteriors.
    Posteriors(commands::PosteriorsArgs),
    /// Cluster dev posteriors into centroids.
    Cluster(commands::ClusterArgs),
    /// Select pool utterances close to the centroids.
    Select(commands::SelectArgs),
    /// Union of two selections.
    Combine(commands::CombineArgs),
    /// Random selection up to a budget.
    RandomSelect(commands::RandomSelectArgs),
    /// Per-domain composition of a selection.
    Report(commands::ReportArgs),
    /// Target-domain recall, precision and enrichment of selections.
    Compare(commands::CompareArgs),
    /// Run every stage, reusing cached artifacts.
    Run,
    /// Select and report for several thresholds against cached posteriors.
    SweepLambda(commands::SweepArgs),
}

fn init_logging(g: &GlobalArgs) {
    let level = if g.quiet {
        "error"
    } else {
        match g.verbose {
            0 => "info",
            1 => "debug",
            _ => "trace",
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(&cli.global);
    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::dispatch(&cli.global, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
