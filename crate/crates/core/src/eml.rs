//! Cluster-filtered boosting: cluster countries by trade volume, train on
//! the rows whose origin lies in the chosen cluster, score every country, and
//! compare against a model trained on all rows.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{select_k, ClusterError, KSelectionReport};
use crate::ingest::{build_country_vectors, country_totals, FeatureTable, IngestError, TradeRecord, VectorMode};
use crate::trees::{
    feature_importance, fit_boosted, r_squared, BoostConfig, BoostedModel, FeatureImportance, TreeError,
};

pub const MIN_TRAINING_ROWS: usize = 10;

#[derive(Debug, Error)]
pub enum EmlError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("insufficient filtered data: {rows} training rows, need at least {MIN_TRAINING_ROWS}")]
    InsufficientFilteredData { rows: usize },
    #[error("no feature rows for commodity {0:?}")]
    NoRows(Option<String>),
    #[error("training cluster {id} does not exist (k = {k})")]
    UnknownCluster { id: usize, k: usize },
    #[error("invalid eml config: {0}")]
    InvalidConfig(String),
}

/// Number of country clusters: fixed, or chosen by silhouette over `k_range`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Choice", into = "Choice")]
pub enum ClusterK {
    Fixed(usize),
    Auto,
}

/// Which cluster's origins supply training rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Choice", into = "Choice")]
pub enum TrainingCluster {
    Id(usize),
    /// The cluster with the largest summed trade value.
    Auto,
    /// Every country; the filtered model then equals the baseline.
    All,
}

/// Config-file form: an integer or a keyword.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum Choice {
    Num(usize),
    Word(String),
}

impl TryFrom<Choice> for ClusterK {
    type Error = String;
    fn try_from(c: Choice) -> Result<Self, String> {
        match c {
            Choice::Num(k) => Ok(ClusterK::Fixed(k)),
            Choice::Word(w) if w == "auto" => Ok(ClusterK::Auto),
            Choice::Word(w) => Err(format!("expected an integer or \"auto\", got {w:?}")),
        }
    }
}

impl From<ClusterK> for Choice {
    fn from(k: ClusterK) -> Self {
        match k {
            ClusterK::Fixed(k) => Choice::Num(k),
            ClusterK::Auto => Choice::Word("auto".into()),
        }
    }
}

impl TryFrom<Choice> for TrainingCluster {
    type Error = String;
    fn try_from(c: Choice) -> Result<Self, String> {
        match c {
            Choice::Num(id) => Ok(TrainingCluster::Id(id)),
            Choice::Word(w) if w == "auto" => Ok(TrainingCluster::Auto),
            Choice::Word(w) if w == "all" => Ok(TrainingCluster::All),
            Choice::Word(w) => Err(format!("expected a cluster id, \"auto\" or \"all\", got {w:?}")),
        }
    }
}

impl From<TrainingCluster> for Choice {
    fn from(t: TrainingCluster) -> Self {
        match t {
            TrainingCluster::Id(id) => Choice::Num(id),
            TrainingCluster::Auto => Choice::Word("auto".into()),
            TrainingCluster::All => Choice::Word("all".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmlConfig {
    pub cluster_k: ClusterK,
    /// Scanned when `cluster_k` is auto; the upper end is capped at `n − 1`.
    pub k_min: usize,
    pub k_max: usize,
    pub seeds_per_k: usize,
    pub training_cluster: TrainingCluster,
    pub commodity: Option<String>,
    /// Share of each origin's rows held out for scoring.
    pub holdout_fraction: f64,
    pub seed: u64,
    pub boost: BoostConfig,
}

impl Default for EmlConfig {
    fn default() -> Self {
        EmlConfig {
            cluster_k: ClusterK::Auto,
            k_min: 2,
            k_max: 10,
            seeds_per_k: 5,
            training_cluster: TrainingCluster::Auto,
            commodity: None,
            holdout_fraction: 0.2,
            seed: 0,
            boost: BoostConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredRow {
    pub origin: String,
    pub destination: String,
    pub year: i32,
    pub commodity: String,
    pub actual: f64,
    pub predicted: f64,
    pub holdout: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountryScore {
    pub country: String,
    /// None when the origin has no trade records to cluster on.
    pub cluster: Option<usize>,
    pub in_training_cluster: bool,
    pub rows: usize,
    pub rmse: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmlResult {
    pub cluster_report: KSelectionReport,
    pub training_cluster: Option<usize>,
    pub training_countries: Vec<String>,
    pub model: BoostedModel,
    pub baseline: BoostedModel,
    pub r2_filtered: f64,
    pub r2_all_data_baseline: f64,
    /// Indices into the (commodity-filtered) feature table.
    pub holdout_rows: Vec<usize>,
    pub filtered_rows: Vec<usize>,
    pub baseline_rows: Vec<usize>,
    /// Filtered-model predictions for every row.
    pub predictions: Vec<ScoredRow>,
    pub countries: Vec<CountryScore>,
}

/// Holds out `round(fraction · n)` rows of every origin, at least one when
/// the origin has two or more rows.
fn stratified_holdout(origins: &[&str], fraction: f64, seed: u64) -> Vec<usize> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, o) in origins.iter().enumerate() {
        groups.entry(o).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (_, mut idx) in groups {
        let take =
            if idx.len() < 2 { 0 } else { ((idx.len() as f64 * fraction).round() as usize).clamp(1, idx.len() - 1) };
        idx.shuffle(&mut rng);
        out.extend_from_slice(&idx[..take]);
    }
    out.sort_unstable();
    out
}

pub fn run_eml(records: &[TradeRecord], features: &FeatureTable, config: &EmlConfig) -> Result<EmlResult, EmlError> {
    if !(config.holdout_fraction > 0.0 && config.holdout_fraction < 1.0) {
        return Err(EmlError::InvalidConfig(format!(
            "holdout_fraction must be in (0, 1), got {}",
            config.holdout_fraction
        )));
    }
    config.boost.validate()?;
    let rows: Vec<_> =
        features.rows.iter().filter(|r| config.commodity.as_ref().is_none_or(|c| &r.commodity == c)).collect();
    if rows.is_empty() {
        return Err(EmlError::NoRows(config.commodity.clone()));
    }

    let vectors = build_country_vectors(records, &VectorMode::TotalsByYear)?;
    let k_range = match config.cluster_k {
        ClusterK::Fixed(k) => k..=k,
        ClusterK::Auto => config.k_min..=config.k_max.min(vectors.len().saturating_sub(1)),
    };
    if let ClusterK::Fixed(k) = config.cluster_k {
        if k < 2 {
            return Err(ClusterError::KTooSmall(k).into());
        }
    }
    let report = select_k(&vectors, k_range, config.seeds_per_k, config.seed)?;
    let model_k = report.chosen_model();

    let totals = country_totals(records);
    let training_cluster = match config.training_cluster {
        TrainingCluster::All => None,
        TrainingCluster::Id(id) if id >= model_k.k => return Err(EmlError::UnknownCluster { id, k: model_k.k }),
        TrainingCluster::Id(id) => Some(id),
        TrainingCluster::Auto => {
            let mut volume = vec![0.0; model_k.k];
            for (country, &c) in model_k.countries.iter().zip(&model_k.assignments) {
                volume[c] += totals[country].iter().sum::<f64>();
            }
            let mut best = 0;
            for (c, v) in volume.iter().enumerate() {
                if *v > volume[best] {
                    best = c;
                }
            }
            Some(best)
        }
    };
    let training_countries: BTreeSet<&str> = match training_cluster {
        Some(c) => model_k.members(c).into_iter().collect(),
        None => rows.iter().map(|r| r.origin.as_str()).collect(),
    };

    let origins: Vec<&str> = rows.iter().map(|r| r.origin.as_str()).collect();
    let holdout_rows = stratified_holdout(&origins, config.holdout_fraction, config.seed);
    let held: BTreeSet<usize> = holdout_rows.iter().copied().collect();
    let baseline_rows: Vec<usize> = (0..rows.len()).filter(|i| !held.contains(i)).collect();
    let filtered_rows: Vec<usize> =
        baseline_rows.iter().copied().filter(|&i| training_countries.contains(rows[i].origin.as_str())).collect();
    if filtered_rows.len() < MIN_TRAINING_ROWS {
        return Err(EmlError::InsufficientFilteredData { rows: filtered_rows.len() });
    }

    let matrix = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        (idx.iter().map(|&i| rows[i].features.clone()).collect(), idx.iter().map(|&i| rows[i].target).collect())
    };
    let (fx, fy) = matrix(&filtered_rows);
    let (bx, by) = matrix(&baseline_rows);
    let (filtered_fit, baseline_fit) =
        rayon::join(|| fit_boosted(&fx, &fy, &config.boost), || fit_boosted(&bx, &by, &config.boost));
    let mut model = filtered_fit?;
    let mut baseline = baseline_fit?;
    model.feature_names.clone_from(&features.feature_names);
    baseline.feature_names.clone_from(&features.feature_names);

    let (hx, hy) = matrix(&holdout_rows);
    let hold_pred: Vec<f64> = hx.iter().map(|x| model.predict_row(x)).collect();
    let base_pred: Vec<f64> = hx.iter().map(|x| baseline.predict_row(x)).collect();
    let r2_filtered = r_squared(&hold_pred, &hy)?;
    let r2_all_data_baseline = r_squared(&base_pred, &hy)?;

    let predictions: Vec<ScoredRow> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| ScoredRow {
            origin: r.origin.clone(),
            destination: r.destination.clone(),
            year: r.year,
            commodity: r.commodity.clone(),
            actual: r.target,
            predicted: model.predict_row(&r.features),
            holdout: held.contains(&i),
        })
        .collect();

    let mut per_country: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for p in &predictions {
        let e = per_country.entry(p.origin.as_str()).or_default();
        e.0 += 1;
        e.1 += (p.actual - p.predicted).powi(2);
    }
    let countries = per_country
        .into_iter()
        .map(|(country, (n, ss))| CountryScore {
            country: country.to_string(),
            cluster: model_k.cluster_of(country),
            in_training_cluster: training_countries.contains(country),
            rows: n,
            rmse: (ss / n as f64).sqrt(),
        })
        .collect();

    Ok(EmlResult {
        training_cluster,
        training_countries: training_countries.into_iter().map(String::from).collect(),
        cluster_report: report,
        model,
        baseline,
        r2_filtered,
        r2_all_data_baseline,
        holdout_rows,
        filtered_rows,
        baseline_rows,
        predictions,
        countries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommodityScore {
    pub commodity: String,
    pub r2: f64,
    pub top_features: Vec<FeatureImportance>,
}

/// Per-commodity holdout R² of the filtered model with its `top_n` features,
/// best score first.
pub fn commodity_report(results: &[(String, &EmlResult)], top_n: usize) -> Vec<CommodityScore> {
    let mut out: Vec<CommodityScore> = results
        .iter()
        .map(|(commodity, res)| CommodityScore {
            commodity: commodity.clone(),
            r2: res.r2_filtered,
            top_features: feature_importance(&res.model).into_iter().take(top_n).collect(),
        })
        .collect();
    out.sort_by(|a, b| b.r2.total_cmp(&a.r2).then_with(|| a.commodity.cmp(&b.commodity)));
    out
}
