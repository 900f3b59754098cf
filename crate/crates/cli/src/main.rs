mod cluster;
mod config;
mod mine;
mod output;
mod query;
mod train;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::RunConfig;
use output::Status;

#[derive(Parser)]
#[command(name = "agtrade", version, about = "Trade rule mining, cluster-filtered boosting and series validation")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine association rules from a trade CSV.
    Mine(mine::MineArgs),
    /// Cluster countries and scan k.
    Cluster(cluster::ClusterArgs),
    /// Train the cluster-filtered model and its all-data baseline.
    Train(train::TrainArgs),
    /// Score a feature CSV with a saved model.
    Predict(train::PredictArgs),
    /// Flag latest values and detect outliers in economic series.
    Validate(validate::ValidateArgs),
    /// Filter a saved rule table.
    Query(query::QueryArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Mine(_) => "mine",
            Command::Cluster(_) => "cluster",
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
            Command::Validate(_) => "validate",
            Command::Query(_) => "query",
        }
    }
}

fn run(cli: Cli) -> Result<Status> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let mut status = Status::default();
    match cli.command {
        Command::Mine(args) => mine::run(&args, &mut config, &cli.out, &mut status)?,
        Command::Cluster(args) => cluster::run(&args, &mut config, &cli.out, &mut status)?,
        Command::Train(args) => train::run_train(&args, &mut config, &cli.out, &mut status)?,
        Command::Predict(args) => train::run_predict(&args, &mut config, &cli.out, &mut status)?,
        Command::Validate(args) => validate::run(&args, &mut config, &cli.out, &mut status)?,
        Command::Query(args) => query::run(&args, &mut config, &cli.out, &mut status)?,
    }
    Ok(status)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    let name = cli.command.name();
    let start = Instant::now();
    let result = run(cli);
    log::info!("{name} finished in {:.3}s", start.elapsed().as_secs_f64());
    match result {
        Ok(status) if status.errors == 0 => ExitCode::SUCCESS,
        Ok(status) => {
            log::error!("{name}: {} error(s), {} warning(s)", status.errors, status.warnings);
            ExitCode::FAILURE
        }
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
