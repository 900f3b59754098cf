//! Squared-error gradient boosting over depth- and leaf-limited regression
//! trees.
//!
//! Trees grow best-first: the pending leaf with the largest variance
//! reduction is split next, until `num_leaves` is reached, every candidate is
//! at `max_depth`, or no split improves the fit. Candidate thresholds are
//! midpoints between consecutive distinct feature values, and every child must
//! keep at least `min_leaf_size` rows. Each tree sees a random subset of
//! `⌈feature_fraction · F⌉` features.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("invalid boosting config: {0}")]
    InvalidConfig(String),
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("rows and targets differ in length ({rows} vs {targets})")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("row {row} has {got} features, expected {expected}")]
    DimensionMismatch { row: usize, expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("r-squared needs at least 2 points")]
    TooFewPoints,
    #[error("r-squared is undefined when the actual values have zero variance")]
    ZeroVariance,
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model format version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostConfig {
    pub learning_rate: f64,
    pub feature_fraction: f64,
    pub max_depth: usize,
    pub num_leaves: usize,
    pub min_leaf_size: usize,
    pub early_stopping_rounds: usize,
    pub max_rounds: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            learning_rate: 0.01,
            feature_fraction: 0.6,
            max_depth: 8,
            num_leaves: 255,
            min_leaf_size: 5,
            early_stopping_rounds: 500,
            max_rounds: 2000,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<(), TreeError> {
        let bad = |m: String| Err(TreeError::InvalidConfig(m));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate must be in (0, 1], got {}", self.learning_rate));
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return bad(format!("feature_fraction must be in (0, 1], got {}", self.feature_fraction));
        }
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1".into());
        }
        if self.num_leaves < 2 {
            return bad("num_leaves must be at least 2".into());
        }
        if self.min_leaf_size < 1 {
            return bad("min_leaf_size must be at least 1".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!("validation_fraction must be in (0, 1), got {}", self.validation_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize, gain: f64 },
    Leaf { value: f64, samples: usize },
}

/// Array-backed regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn total_gain(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Split { gain, .. } => *gain,
                Node::Leaf { .. } => 0.0,
            })
            .sum()
    }
}

/// Column-major copy of the training rows with per-feature presorted orders.
struct Columns {
    cols: Vec<Vec<f64>>,
    sorted: Vec<Vec<u32>>,
    n_rows: usize,
}

impl Columns {
    fn new(rows: &[&[f64]], n_features: usize) -> Self {
        let cols: Vec<Vec<f64>> = (0..n_features).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        let sorted = cols
            .iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..rows.len() as u32).collect();
                idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Columns { cols, sorted, n_rows: rows.len() }
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Pending {
    node: usize,
    depth: usize,
    /// Row lists per selected feature, each in ascending feature order.
    orders: Vec<Vec<u32>>,
    best: Option<Candidate>,
}

fn best_split(
    columns: &Columns,
    features: &[usize],
    orders: &[Vec<u32>],
    residuals: &[f64],
    min_leaf: usize,
) -> Option<Candidate> {
    let n = orders.first()?.len();
    if n < 2 * min_leaf {
        return None;
    }
    let total: f64 = orders[0].iter().map(|&i| residuals[i as usize]).sum();
    let mut best: Option<Candidate> = None;
    for (slot, &f) in features.iter().enumerate() {
        let col = &columns.cols[f];
        let order = &orders[slot];
        let mut left_sum = 0.0;
        for pos in 1..n {
            left_sum += residuals[order[pos - 1] as usize];
            if pos < min_leaf || n - pos < min_leaf {
                continue;
            }
            let lo = col[order[pos - 1] as usize];
            let hi = col[order[pos] as usize];
            if lo >= hi {
                continue;
            }
            let (nl, nr) = (pos as f64, (n - pos) as f64);
            let diff = left_sum / nl - (total - left_sum) / nr;
            let gain = nl * nr / n as f64 * diff * diff;
            if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Candidate { feature: f, threshold, gain });
            }
        }
    }
    best
}

fn leaf_value(order: &[u32], residuals: &[f64]) -> f64 {
    order.iter().map(|&i| residuals[i as usize]).sum::<f64>() / order.len() as f64
}

fn grow_tree(columns: &Columns, features: &[usize], residuals: &[f64], config: &BoostConfig) -> RegressionTree {
    let root_orders: Vec<Vec<u32>> = features.iter().map(|&f| columns.sorted[f].clone()).collect();
    let mut nodes = vec![Node::Leaf { value: leaf_value(&root_orders[0], residuals), samples: columns.n_rows }];
    let mut pending = vec![Pending {
        node: 0,
        depth: 0,
        best: best_split(columns, features, &root_orders, residuals, config.min_leaf_size),
        orders: root_orders,
    }];
    let mut leaves = 1;
    let mut goes_left = vec![false; columns.n_rows];

    while leaves < config.num_leaves {
        let pick = pending
            .iter()
            .enumerate()
            .filter(|(_, p)| p.depth < config.max_depth)
            .filter_map(|(i, p)| p.best.as_ref().map(|b| (i, b.gain)))
            .fold(None::<(usize, f64)>, |acc, (i, g)| match acc {
                Some((_, bg)) if bg >= g => acc,
                _ => Some((i, g)),
            });
        let Some((slot, _)) = pick else { break };
        let leaf = pending.swap_remove(slot);
        let split = leaf.best.expect("picked leaves carry a split");
        let col = &columns.cols[split.feature];
        for &i in &leaf.orders[0] {
            goes_left[i as usize] = col[i as usize] <= split.threshold;
        }
        let (left_orders, right_orders): (Vec<Vec<u32>>, Vec<Vec<u32>>) =
            leaf.orders.iter().map(|o| o.iter().partition(|&&i| goes_left[i as usize])).unzip();

        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { value: leaf_value(&left_orders[0], residuals), samples: left_orders[0].len() });
        nodes.push(Node::Leaf { value: leaf_value(&right_orders[0], residuals), samples: right_orders[0].len() });
        nodes[leaf.node] =
            Node::Split { feature: split.feature, threshold: split.threshold, left, right, gain: split.gain };
        leaves += 1;
        for (node, orders) in [(left, left_orders), (right, right_orders)] {
            let best = if leaf.depth + 1 < config.max_depth {
                best_split(columns, features, &orders, residuals, config.min_leaf_size)
            } else {
                None
            };
            pending.push(Pending { node, depth: leaf.depth + 1, orders, best });
        }
        // keep candidate order independent of swap_remove
        pending.sort_by_key(|p| p.node);
    }
    RegressionTree { nodes }
}

fn feature_subset(n_features: usize, fraction: f64, rng: &mut impl Rng) -> Vec<usize> {
    let k = ((fraction * n_features as f64).ceil() as usize).clamp(1, n_features);
    let mut picked = sample(rng, n_features, k).into_vec();
    picked.sort_unstable();
    picked
}

fn check_rows(rows: &[Vec<f64>]) -> Result<usize, TreeError> {
    let dim = rows.first().map(Vec::len).unwrap_or(0);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != dim {
            return Err(TreeError::DimensionMismatch { row: i, expected: dim, got: r.len() });
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(TreeError::NonFinite("features"));
        }
    }
    Ok(dim)
}

/// Fits one regression tree to `residuals`; the feature subset is drawn
/// from `config.seed`.
pub fn fit_tree(rows: &[Vec<f64>], residuals: &[f64], config: &BoostConfig) -> Result<RegressionTree, TreeError> {
    config.validate()?;
    if rows.is_empty() {
        return Err(TreeError::TooFewRows { need: 1, got: 0 });
    }
    if rows.len() != residuals.len() {
        return Err(TreeError::LengthMismatch { rows: rows.len(), targets: residuals.len() });
    }
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(TreeError::NonFinite("residuals"));
    }
    let dim = check_rows(rows)?;
    if dim == 0 {
        return Ok(RegressionTree {
            nodes: vec![Node::Leaf {
                value: residuals.iter().sum::<f64>() / residuals.len() as f64,
                samples: residuals.len(),
            }],
        });
    }
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let columns = Columns::new(&refs, dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let features = feature_subset(dim, config.feature_fraction, &mut rng);
    Ok(grow_tree(&columns, &features, residuals, config))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Importance {
    pub split_count: u64,
    pub total_gain: f64,
}

/// Per-round error traces; index 0 is the base prediction alone.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub train_rmse: Vec<f64>,
    pub valid_rmse: Vec<f64>,
    pub rounds_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub version: u32,
    pub config: BoostConfig,
    pub feature_names: Vec<String>,
    pub base_prediction: f64,
    pub learning_rate: f64,
    /// Trees kept after early stopping; `trees.len() == best_round`.
    pub trees: Vec<RegressionTree>,
    pub best_round: usize,
    pub importances: Vec<Importance>,
    /// True when no tree improved on the base prediction.
    pub degenerate: bool,
    pub history: TrainingHistory,
}

impl BoostedModel {
    pub fn n_features(&self) -> usize {
        self.importances.len()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut acc = self.base_prediction;
        for t in &self.trees {
            acc += self.learning_rate * t.predict_row(row);
        }
        acc
    }

    pub fn to_json(&self) -> Result<String, TreeError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        let model: BoostedModel = serde_json::from_str(text)?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(TreeError::Version(model.version));
        }
        Ok(model)
    }
}

/// Row split and fitted values from a boosting run.
#[derive(Debug, Clone)]
pub struct FitDetails {
    pub train_rows: Vec<usize>,
    pub valid_rows: Vec<usize>,
    /// Predictions on `train_rows` after `best_round` trees, as tracked during fitting.
    pub train_predictions: Vec<f64>,
}

fn rmse(pred: &[f64], actual: &[f64]) -> f64 {
    let ss: f64 = pred.iter().zip(actual).map(|(p, a)| (a - p) * (a - p)).sum();
    (ss / pred.len() as f64).sqrt()
}

pub fn fit_boosted(rows: &[Vec<f64>], targets: &[f64], config: &BoostConfig) -> Result<BoostedModel, TreeError> {
    fit_boosted_detailed(rows, targets, config).map(|(m, _)| m)
}

/// Boosting with a seeded validation hold-out and early stopping on
/// validation RMSE. Every round fits a tree to the current training
/// residuals `y − ŷ` and adds `learning_rate` times its output.
pub fn fit_boosted_detailed(
    rows: &[Vec<f64>],
    targets: &[f64],
    config: &BoostConfig,
) -> Result<(BoostedModel, FitDetails), TreeError> {
    config.validate()?;
    if rows.len() != targets.len() {
        return Err(TreeError::LengthMismatch { rows: rows.len(), targets: targets.len() });
    }
    if rows.len() < 10 {
        return Err(TreeError::TooFewRows { need: 10, got: rows.len() });
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(TreeError::NonFinite("targets"));
    }
    let dim = check_rows(rows)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut rng);
    let n_valid = ((rows.len() as f64 * config.validation_fraction).round() as usize).clamp(1, rows.len() - 1);
    let mut valid_rows = order[..n_valid].to_vec();
    let mut train_rows = order[n_valid..].to_vec();
    valid_rows.sort_unstable();
    train_rows.sort_unstable();

    let train_y: Vec<f64> = train_rows.iter().map(|&i| targets[i]).collect();
    let valid_y: Vec<f64> = valid_rows.iter().map(|&i| targets[i]).collect();
    let base = train_y.iter().sum::<f64>() / train_y.len() as f64;
    let mut train_pred = vec![base; train_rows.len()];
    let mut valid_pred = vec![base; valid_rows.len()];

    let mut history = TrainingHistory {
        train_rmse: vec![rmse(&train_pred, &train_y)],
        valid_rmse: vec![rmse(&valid_pred, &valid_y)],
        rounds_run: 0,
    };
    let mut trees: Vec<RegressionTree> = Vec::new();
    let mut best_round = 0;
    let mut best_train = train_pred.clone();

    let constant = train_y.iter().all(|&y| y == train_y[0]);
    if !constant && dim > 0 {
        let train_refs: Vec<&[f64]> = train_rows.iter().map(|&i| rows[i].as_slice()).collect();
        let columns = Columns::new(&train_refs, dim);
        let mut tree_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
        for round in 1..=config.max_rounds {
            let residuals: Vec<f64> = train_y.iter().zip(&train_pred).map(|(y, p)| y - p).collect();
            let features = feature_subset(dim, config.feature_fraction, &mut tree_rng);
            let tree = grow_tree(&columns, &features, &residuals, config);
            for (p, &i) in train_pred.iter_mut().zip(&train_rows) {
                *p += config.learning_rate * tree.predict_row(&rows[i]);
            }
            for (p, &i) in valid_pred.iter_mut().zip(&valid_rows) {
                *p += config.learning_rate * tree.predict_row(&rows[i]);
            }
            trees.push(tree);
            history.train_rmse.push(rmse(&train_pred, &train_y));
            let v = rmse(&valid_pred, &valid_y);
            history.valid_rmse.push(v);
            history.rounds_run = round;
            if v < history.valid_rmse[best_round] {
                best_round = round;
                best_train.clone_from(&train_pred);
            }
            if round - best_round >= config.early_stopping_rounds {
                break;
            }
        }
    }
    trees.truncate(best_round);

    let mut importances = vec![Importance::default(); dim];
    for t in &trees {
        for n in &t.nodes {
            if let Node::Split { feature, gain, .. } = n {
                importances[*feature].split_count += 1;
                importances[*feature].total_gain += gain;
            }
        }
    }
    let model = BoostedModel {
        version: MODEL_FORMAT_VERSION,
        config: config.clone(),
        feature_names: (0..dim).map(|j| format!("f{j}")).collect(),
        base_prediction: base,
        learning_rate: config.learning_rate,
        trees,
        best_round,
        importances,
        degenerate: best_round == 0,
        history,
    };
    Ok((model, FitDetails { train_rows, valid_rows, train_predictions: best_train }))
}

pub fn predict(model: &BoostedModel, rows: &[Vec<f64>]) -> Result<Vec<f64>, TreeError> {
    let expected = model.n_features();
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            if r.len() != expected {
                Err(TreeError::DimensionMismatch { row: i, expected, got: r.len() })
            } else {
                Ok(model.predict_row(r))
            }
        })
        .collect()
}

/// `1 − SS_res / SS_tot`.
pub fn r_squared(predicted: &[f64], actual: &[f64]) -> Result<f64, TreeError> {
    if predicted.len() != actual.len() {
        return Err(TreeError::LengthMismatch { rows: predicted.len(), targets: actual.len() });
    }
    if actual.len() < 2 {
        return Err(TreeError::TooFewPoints);
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(TreeError::ZeroVariance);
    }
    let ss_res: f64 = predicted.iter().zip(actual).map(|(p, a)| (a - p) * (a - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureImportance {
    pub feature: usize,
    pub name: String,
    pub split_count: u64,
    pub total_gain: f64,
}

/// Importances ranked by split count, then gain, then feature index.
pub fn feature_importance(model: &BoostedModel) -> Vec<FeatureImportance> {
    let mut out: Vec<FeatureImportance> = model
        .importances
        .iter()
        .enumerate()
        .map(|(j, imp)| FeatureImportance {
            feature: j,
            name: model.feature_names.get(j).cloned().unwrap_or_else(|| format!("f{j}")),
            split_count: imp.split_count,
            total_gain: imp.total_gain,
        })
        .collect();
    out.sort_by(|a, b| {
        b.split_count.cmp(&a.split_count).then(b.total_gain.total_cmp(&a.total_gain)).then(a.feature.cmp(&b.feature))
    });
    out
}
