use std::path::{Path, PathBuf};

use agtrade_core::hs::render_codes;
use agtrade_core::ingest::{build_transactions, load_trade_csv, TradeRecord, TradeSchema};
use agtrade_core::rules::{aggregate_rules, mine_scoped, rule_order, RuleStore, Scope};
use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{num, Out, Status};

#[derive(Args)]
pub struct MineArgs {
    /// Trade CSV with reporter, partner, year, hs_chapter and value columns.
    #[arg(long)]
    pub trade: PathBuf,
    /// Minimum itemset support, in (0, 1].
    #[arg(long)]
    pub min_support: Option<f64>,
    /// Largest antecedent size.
    #[arg(long)]
    pub max_antecedent: Option<usize>,
    /// global, per-reporter or per-pair.
    #[arg(long, value_parser = parse_scope)]
    pub scope: Option<Scope>,
    /// Drop chapters whose pair-year value is at or below this.
    #[arg(long)]
    pub min_value: Option<f64>,
    /// Only write rules with at least this many antecedent items.
    #[arg(long, default_value_t = 1)]
    pub min_antecedent: usize,
    /// Keep only the first N rules in rules.csv.
    #[arg(long)]
    pub top: Option<usize>,
}

fn parse_scope(s: &str) -> Result<Scope, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("unknown scope `{s}` (expected global, per-reporter or per-pair)"))
}

/// Loads a trade CSV, reporting rejected rows as warnings.
pub fn load_trade(path: &Path, status: &mut Status) -> Result<Vec<TradeRecord>> {
    let load = load_trade_csv(path, &TradeSchema::default()).with_context(|| format!("loading {}", path.display()))?;
    for d in &load.diagnostics {
        status.warn(format!("{}: line {}: {}", path.display(), d.line, d.message));
    }
    Ok(load.records)
}

#[derive(Serialize)]
struct ScopeSummary {
    origin: String,
    destination: String,
    transactions: usize,
    frequent_itemsets: usize,
    rules: usize,
}

#[derive(Serialize)]
struct Summary {
    records: usize,
    rejected_rows: usize,
    transactions: usize,
    frequent_itemsets: usize,
    rules: usize,
    rules_written: usize,
    scopes: Vec<ScopeSummary>,
}

pub fn run(args: &MineArgs, config: &mut RunConfig, out_dir: &Path, status: &mut Status) -> Result<()> {
    if let Some(s) = args.min_support {
        config.mining.min_support = s;
    }
    if let Some(m) = args.max_antecedent {
        config.mining.max_antecedent_size = m;
    }
    if let Some(s) = args.scope {
        config.mining.scope = s;
    }
    if let Some(v) = args.min_value {
        config.ingest.min_value = v;
    }
    config.mining.validate()?;

    let records = load_trade(&args.trade, status)?;
    let rejected = status.warnings;
    let transactions = build_transactions(&records, config.ingest.min_value);
    let scoped = mine_scoped(&transactions, &config.mining)?;
    let out = Out::create(out_dir, config)?;

    let keep = |len: usize| len >= args.min_antecedent;
    let mut all: Vec<_> =
        scoped.iter().flat_map(|s| s.rules.iter()).filter(|r| keep(r.antecedent.len())).cloned().collect();
    all.sort_by(rule_order);

    let mut scatter = out.csv("scatter.csv", &["support", "confidence", "lift"])?;
    for r in &all {
        scatter.write_record([num(r.support), num(r.confidence), num(r.lift)])?;
    }
    scatter.flush()?;

    let written: Vec<_> = all.iter().take(args.top.unwrap_or(usize::MAX)).cloned().collect();
    let rules_written = written.len();
    RuleStore::new(written).write_csv(out.text("rules.csv")?)?;

    let sets: Vec<_> = scoped
        .iter()
        .map(|s| (s.scope.clone(), s.rules.iter().filter(|r| keep(r.antecedent.len())).cloned().collect()))
        .collect();
    let mut agg = out.csv("aggregated.csv", &["Lhs", "Rhs", "Lhs_name", "Rhs_name", "Sum_of_confidence", "Scopes"])?;
    for a in aggregate_rules(&sets) {
        agg.write_record([
            render_codes(&a.antecedent),
            render_codes(&[a.consequent]),
            a.antecedent_name,
            a.consequent_name,
            format!("{:.6}", a.sum_of_confidence),
            a.scopes.to_string(),
        ])?;
    }
    agg.flush()?;

    let summary = Summary {
        records: records.len(),
        rejected_rows: rejected,
        transactions: transactions.len(),
        frequent_itemsets: scoped.iter().map(|s| s.frequent_itemsets).sum(),
        rules: scoped.iter().map(|s| s.rules.len()).sum(),
        rules_written,
        scopes: scoped
            .iter()
            .map(|s| ScopeSummary {
                origin: s.scope.origin.clone(),
                destination: s.scope.destination.clone(),
                transactions: s.transactions,
                frequent_itemsets: s.frequent_itemsets,
                rules: s.rules.len(),
            })
            .collect(),
    };
    out.json("summary.json", &summary)?;
    log::info!(
        "{} transactions, {} frequent itemsets, {} rules ({} written)",
        summary.transactions,
        summary.frequent_itemsets,
        summary.rules,
        rules_written
    );
    Ok(())
}
