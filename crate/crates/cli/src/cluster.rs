use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use agtrade_core::clustering::select_k;
use agtrade_core::ingest::{build_country_vectors, CountryVector, VectorMode};
use anyhow::{bail, Context, Result};
use clap::Args;

use crate::config::RunConfig;
use crate::mine::load_trade;
use crate::output::{num, Out, Status};

#[derive(Args)]
pub struct ClusterArgs {
    /// Trade CSV; countries are described by standardized per-year totals.
    #[arg(long, conflicts_with = "vectors", required_unless_present = "vectors")]
    pub trade: Option<PathBuf>,
    /// Ready-made vectors: `country,<feature...>`, used as given.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub seeds_per_k: Option<usize>,
}

fn read_vectors(path: &Path) -> Result<Vec<CountryVector>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let width = rdr.headers()?.len();
    if width < 2 {
        bail!("{}: need a country column and at least one feature", path.display());
    }
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let features = row
            .iter()
            .skip(1)
            .map(|c| c.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .with_context(|| format!("{}: line {line}: non-numeric feature", path.display()))?;
        let country = row[0].to_string();
        if seen.insert(country.clone(), line).is_some() {
            bail!("{}: line {line}: duplicate country `{country}`", path.display());
        }
        out.push(CountryVector { country, features });
    }
    Ok(out)
}

pub fn run(args: &ClusterArgs, config: &mut RunConfig, out_dir: &Path, status: &mut Status) -> Result<()> {
    if let Some(k) = args.k_min {
        config.cluster.k_min = k;
    }
    if let Some(k) = args.k_max {
        config.cluster.k_max = k;
    }
    if let Some(s) = args.seeds_per_k {
        config.cluster.seeds_per_k = s;
    }
    let vectors = match (&args.trade, &args.vectors) {
        (Some(trade), _) => {
            let records = load_trade(trade, status)?;
            build_country_vectors(&records, &VectorMode::TotalsByYear)?
        }
        (None, Some(path)) => read_vectors(path)?,
        (None, None) => unreachable!("clap requires one input"),
    };
    if vectors.len() < 3 {
        bail!("clustering needs at least 3 countries, found {}", vectors.len());
    }
    let c = &config.cluster;
    let report = select_k(&vectors, c.k_min..=c.k_max, c.seeds_per_k, config.seed)?;
    let out = Out::create(out_dir, config)?;

    let mut header = vec!["country".to_string()];
    header.extend(report.models.iter().map(|m| format!("k={}", m.k)));
    let mut w = csv::Writer::from_writer(out.text("clusters.csv")?);
    w.write_record(&header)?;
    for (i, v) in vectors.iter().enumerate() {
        let mut row = vec![v.country.clone()];
        row.extend(report.models.iter().map(|m| m.assignments[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut text = out.text("kselect.csv")?;
    writeln!(text, "# chosen_k={} elbow_k={}", report.chosen_k, report.elbow_k)?;
    let mut w = csv::Writer::from_writer(text);
    w.write_record(["k", "sse", "silhouette"])?;
    for r in &report.records {
        w.write_record([r.k.to_string(), num(r.sse), num(r.silhouette)])?;
    }
    w.flush()?;
    log::info!("{} countries, chosen k = {}, elbow k = {}", vectors.len(), report.chosen_k, report.elbow_k);
    Ok(())
}
