use std::path::{Path, PathBuf};

use agtrade_core::eml::{run_eml, ClusterK, TrainingCluster};
use agtrade_core::ingest::load_feature_csv;
use agtrade_core::trees::{feature_importance, predict, BoostedModel};
use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::mine::load_trade;
use crate::output::{num, Out, Status};

#[derive(Args)]
pub struct TrainArgs {
    /// Trade CSV used to cluster countries.
    #[arg(long)]
    pub trade: PathBuf,
    /// Feature CSV: origin, destination, year, commodity, features..., target.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub commodity: Option<String>,
    /// Number of clusters, or `auto`.
    #[arg(long, value_parser = parse_cluster_k)]
    pub cluster_k: Option<ClusterK>,
    /// Cluster id, `auto` or `all`.
    #[arg(long, value_parser = parse_training_cluster)]
    pub training_cluster: Option<TrainingCluster>,
}

fn parse_json_choice<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    let v = s.parse::<u64>().map(Value::from).unwrap_or_else(|_| Value::String(s.into()));
    serde_json::from_value(v).map_err(|e| e.to_string())
}

fn parse_cluster_k(s: &str) -> Result<ClusterK, String> {
    parse_json_choice(s)
}

fn parse_training_cluster(s: &str) -> Result<TrainingCluster, String> {
    parse_json_choice(s)
}

#[derive(Serialize)]
struct ModelFile<'a> {
    model: &'a BoostedModel,
}

pub fn run_train(args: &TrainArgs, config: &mut RunConfig, out_dir: &Path, status: &mut Status) -> Result<()> {
    if let Some(c) = &args.commodity {
        config.eml.commodity = Some(c.clone());
    }
    if let Some(k) = args.cluster_k {
        config.eml.cluster_k = k;
    }
    if let Some(t) = args.training_cluster {
        config.eml.training_cluster = t;
    }
    let records = load_trade(&args.trade, status)?;
    let table = load_feature_csv(&args.features).with_context(|| format!("loading {}", args.features.display()))?;
    for d in &table.diagnostics {
        status.warn(format!("{}: line {}: {}", args.features.display(), d.line, d.message));
    }
    for (name, &n) in table.feature_names.iter().zip(&table.imputed) {
        if n > 0 {
            status.warn(format!("imputed {n} missing `{name}` value(s) with the column median"));
        }
    }
    let result = run_eml(&records, &table, &config.eml_config())?;
    let out = Out::create(out_dir, config)?;

    out.json("model.json", &ModelFile { model: &result.model })?;

    let mut w =
        out.csv("predictions.csv", &["origin", "destination", "year", "commodity", "actual", "predicted", "holdout"])?;
    for p in &result.predictions {
        w.write_record([
            p.origin.clone(),
            p.destination.clone(),
            p.year.to_string(),
            p.commodity.clone(),
            num(p.actual),
            num(p.predicted),
            p.holdout.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = out.csv("importance.csv", &["feature", "split", "gain"])?;
    for f in feature_importance(&result.model) {
        w.write_record([f.name, f.split_count.to_string(), num(f.total_gain)])?;
    }
    w.flush()?;

    let report = serde_json::json!({
        "k": result.cluster_report.chosen_k,
        "kselect": result.cluster_report.records,
        "training_cluster": result.training_cluster,
        "training_countries": result.training_countries,
        "r2_filtered": result.r2_filtered,
        "r2_all_data_baseline": result.r2_all_data_baseline,
        "rows": result.predictions.len(),
        "holdout_rows": result.holdout_rows.len(),
        "filtered_training_rows": result.filtered_rows.len(),
        "baseline_training_rows": result.baseline_rows.len(),
        "best_round": result.model.best_round,
        "baseline_best_round": result.baseline.best_round,
        "degenerate": result.model.degenerate,
        "countries": result.countries,
        "predictions": result.predictions,
    });
    out.json("eml_report.json", &report)?;
    if result.model.degenerate {
        status.warn("filtered model is degenerate: no tree improved on the base prediction");
    }
    log::info!(
        "R² filtered = {:.4}, all-data baseline = {:.4} ({} training countries)",
        result.r2_filtered,
        result.r2_all_data_baseline,
        result.training_countries.len()
    );
    Ok(())
}

#[derive(Args)]
pub struct PredictArgs {
    /// model.json written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Feature CSV; columns are matched to the model by name.
    #[arg(long)]
    pub features: PathBuf,
}

fn load_model(path: &Path) -> Result<BoostedModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut doc: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let model = doc.get_mut("model").map(Value::take).unwrap_or(doc);
    BoostedModel::from_json(&model.to_string()).with_context(|| format!("loading model from {}", path.display()))
}

pub fn run_predict(args: &PredictArgs, config: &mut RunConfig, out_dir: &Path, status: &mut Status) -> Result<()> {
    let model = load_model(&args.model)?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(&args.features)
        .with_context(|| format!("opening {}", args.features.display()))?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let mut feature_idx = Vec::new();
    for name in &model.feature_names {
        match find(name) {
            Some(i) => feature_idx.push(i),
            None => bail!("{} is missing feature column `{name}` required by the model", args.features.display()),
        }
    }
    let keys: Vec<Option<usize>> = ["origin", "destination", "year", "commodity"].iter().map(|k| find(k)).collect();
    let target = find("target");

    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut actual = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let parsed: Result<Vec<f64>, String> = feature_idx
            .iter()
            .zip(&model.feature_names)
            .map(|(&i, name)| {
                row[i]
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| format!("bad `{name}` value `{}`", &row[i]))
            })
            .collect();
        match parsed {
            Ok(features) => {
                ids.push(keys.iter().map(|k| k.map(|i| row[i].to_string()).unwrap_or_default()).collect::<Vec<_>>());
                actual.push(target.map(|i| row[i].trim().to_string()));
                rows.push(features);
            }
            Err(message) => status.error(format!("{}: line {line}: {message}", args.features.display())),
        }
    }
    let predicted = predict(&model, &rows)?;
    let out = Out::create(out_dir, config)?;
    let mut header = vec!["origin", "destination", "year", "commodity", "predicted"];
    if target.is_some() {
        header.push("actual");
    }
    let mut w = out.csv("predictions.csv", &header)?;
    for ((id, p), a) in ids.into_iter().zip(predicted).zip(actual) {
        let mut rec = id;
        rec.push(num(p));
        rec.extend(a);
        w.write_record(&rec)?;
    }
    w.flush()?;
    log::info!("scored {} rows", rows.len());
    Ok(())
}
