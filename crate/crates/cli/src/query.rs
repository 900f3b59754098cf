use std::fs::File;
use std::path::{Path, PathBuf};

use agtrade_core::rules::{query_rules, RuleFilter, RuleStore};
use anyhow::{Context, Result};
use clap::Args;

use crate::config::RunConfig;
use crate::output::{Out, Status};

#[derive(Args)]
pub struct QueryArgs {
    /// rules.csv written by `mine`.
    #[arg(long)]
    pub rules: PathBuf,
    #[arg(long)]
    pub min_confidence: Option<f64>,
    #[arg(long)]
    pub min_lift: Option<f64>,
    /// Chapter codes that must all appear in the antecedent, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub antecedent: Vec<u16>,
    #[arg(long)]
    pub consequent: Option<u16>,
    #[arg(long)]
    pub origin: Option<String>,
    #[arg(long)]
    pub destination: Option<String>,
    /// Keep only the first N matches.
    #[arg(long)]
    pub top: Option<usize>,
}

pub fn run(args: &QueryArgs, config: &mut RunConfig, out_dir: &Path, _status: &mut Status) -> Result<()> {
    let file = File::open(&args.rules).with_context(|| format!("opening {}", args.rules.display()))?;
    let store = RuleStore::read_csv(file).with_context(|| format!("reading {}", args.rules.display()))?;
    let filter = RuleFilter {
        min_confidence: args.min_confidence,
        min_lift: args.min_lift,
        antecedent_contains: args.antecedent.clone(),
        consequent: args.consequent,
        origin: args.origin.clone(),
        destination: args.destination.clone(),
    };
    let mut hits = query_rules(&store, &filter)?;
    hits.truncate(args.top.unwrap_or(usize::MAX));
    let out = Out::create(out_dir, config)?;
    let n = hits.len();
    RuleStore::new(hits).write_csv(out.text("query.csv")?)?;
    log::info!("{n} of {} rules matched", store.rules.len());
    Ok(())
}
