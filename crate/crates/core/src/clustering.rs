//! k-means over country vectors with SSE / silhouette diagnostics and
//! automatic selection of k.

use std::ops::RangeInclusive;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::CountryVector;

pub const DEFAULT_MAX_ITERATIONS: usize = 300;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("k must be at least 2, got {0}")]
    KTooSmall(usize),
    #[error("k = {k} exceeds the number of points ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("vectors have inconsistent dimensions")]
    RaggedVectors,
    #[error("k range is empty")]
    EmptyRange,
    #[error("need more than {max_k} points to scan k up to {max_k}, got {n}")]
    TooFewPoints { max_k: usize, n: usize },
    #[error("model does not cover the given vectors")]
    ModelMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Country labels, parallel to `assignments`.
    pub countries: Vec<String>,
    /// Cluster id in `0..k` per input vector.
    pub assignments: Vec<usize>,
    pub sse: f64,
    pub silhouette: f64,
    pub iterations_run: usize,
    /// Objective after initialization and after every Lloyd iteration.
    pub sse_trace: Vec<f64>,
}

impl ClusterModel {
    pub fn cluster_of(&self, country: &str) -> Option<usize> {
        self.countries.iter().position(|c| c == country).map(|i| self.assignments[i])
    }

    pub fn members(&self, cluster: usize) -> Vec<&str> {
        self.countries.iter().zip(&self.assignments).filter(|(_, &a)| a == cluster).map(|(c, _)| c.as_str()).collect()
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Euclidean distance.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

fn check_dims(vectors: &[CountryVector]) -> Result<usize, ClusterError> {
    let dim = vectors.first().map(|v| v.features.len()).unwrap_or(0);
    if vectors.iter().any(|v| v.features.len() != dim) {
        return Err(ClusterError::RaggedVectors);
    }
    Ok(dim)
}

/// D²-weighted seeding: first centre uniform, later centres drawn with
/// probability proportional to squared distance from the nearest chosen one.
fn seed_centroids(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].to_vec()];
    let mut nearest: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[pick].to_vec());
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(dist2(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn means(points: &[&[f64]], assignments: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p.iter()) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        for x in s.iter_mut() {
            *x /= c as f64;
        }
    }
    sums
}

fn objective(points: &[&[f64]], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points.iter().zip(assignments).map(|(p, &a)| dist2(p, &centroids[a])).sum()
}

/// Moves the point farthest from its own centroid into each empty cluster.
fn repair_empty(points: &[&[f64]], assignments: &mut [usize], centroids: &[Vec<f64>], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignments.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else { return };
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if counts[assignments[i]] < 2 {
                continue;
            }
            let d = dist2(p, &centroids[assignments[i]]);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let (i, _) = best.expect("k <= n guarantees a donor cluster");
        assignments[i] = empty;
    }
}

/// Lloyd's algorithm with Euclidean distance. Stops when no point changes
/// cluster or after `max_iterations`. A point only switches cluster when
/// another centroid is strictly closer, which keeps the objective
/// non-increasing.
pub fn kmeans(
    vectors: &[CountryVector],
    k: usize,
    seed: u64,
    max_iterations: usize,
) -> Result<ClusterModel, ClusterError> {
    if k < 2 {
        return Err(ClusterError::KTooSmall(k));
    }
    if k > vectors.len() {
        return Err(ClusterError::KTooLarge { k, n: vectors.len() });
    }
    let dim = check_dims(vectors)?;
    let points: Vec<&[f64]> = vectors.iter().map(|v| v.features.as_slice()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids = seed_centroids(&points, k, &mut rng);
    let mut assignments: Vec<usize> = points
        .iter()
        .map(|p| {
            let mut best = 0;
            for c in 1..k {
                if dist2(p, &centroids[c]) < dist2(p, &centroids[best]) {
                    best = c;
                }
            }
            best
        })
        .collect();
    repair_empty(&points, &mut assignments, &centroids, k);
    centroids = means(&points, &assignments, k, dim);
    let mut trace = vec![objective(&points, &assignments, &centroids)];

    let mut iterations_run = 0;
    while iterations_run < max_iterations {
        iterations_run += 1;
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = assignments[i];
            let mut best_d = dist2(p, &centroids[best]);
            for (c, centroid) in centroids.iter().enumerate() {
                let d = dist2(p, centroid);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            if best != assignments[i] {
                assignments[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        repair_empty(&points, &mut assignments, &centroids, k);
        centroids = means(&points, &assignments, k, dim);
        trace.push(objective(&points, &assignments, &centroids));
    }

    let mut model = ClusterModel {
        k,
        centroids,
        countries: vectors.iter().map(|v| v.country.clone()).collect(),
        assignments,
        sse: 0.0,
        silhouette: 0.0,
        iterations_run,
        sse_trace: trace,
    };
    model.sse = sse(vectors, &model)?;
    model.silhouette = silhouette(vectors, &model)?;
    Ok(model)
}

/// Within-cluster sum of squares in the computational form
/// `Σ t² − (Σ t)² / n`, per coordinate and cluster.
pub fn sse(vectors: &[CountryVector], model: &ClusterModel) -> Result<f64, ClusterError> {
    if vectors.len() != model.assignments.len() {
        return Err(ClusterError::ModelMismatch);
    }
    let dim = check_dims(vectors)?;
    let mut sum = vec![vec![0.0; dim]; model.k];
    let mut sum_sq = vec![vec![0.0; dim]; model.k];
    let mut counts = vec![0usize; model.k];
    for (v, &a) in vectors.iter().zip(&model.assignments) {
        if a >= model.k {
            return Err(ClusterError::ModelMismatch);
        }
        counts[a] += 1;
        for (j, &x) in v.features.iter().enumerate() {
            sum[a][j] += x;
            sum_sq[a][j] += x * x;
        }
    }
    let mut total = 0.0;
    for c in 0..model.k {
        if counts[c] == 0 {
            continue;
        }
        for j in 0..dim {
            total += sum_sq[c][j] - sum[c][j] * sum[c][j] / counts[c] as f64;
        }
    }
    Ok(total.max(0.0))
}

/// Mean silhouette `s(i) = (b − a) / max(a, b)`; members of singleton
/// clusters score 0.
pub fn silhouette(vectors: &[CountryVector], model: &ClusterModel) -> Result<f64, ClusterError> {
    if model.k < 2 {
        return Err(ClusterError::KTooSmall(model.k));
    }
    if vectors.len() != model.assignments.len() {
        return Err(ClusterError::ModelMismatch);
    }
    let n = vectors.len();
    let mut counts = vec![0usize; model.k];
    for &a in &model.assignments {
        counts[a] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = model.assignments[i];
        if counts[own] < 2 {
            continue;
        }
        let mut sums = vec![0.0; model.k];
        for j in 0..n {
            if i != j {
                sums[model.assignments[j]] += distance(&vectors[i].features, &vectors[j].features);
            }
        }
        let a = sums[own] / (counts[own] - 1) as f64;
        let b = (0..model.k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 && b.is_finite() {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KRecord {
    pub k: usize,
    pub sse: f64,
    pub silhouette: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelectionReport {
    pub records: Vec<KRecord>,
    /// k with the highest silhouette; ties go to the smaller k.
    pub chosen_k: usize,
    /// k with the largest discrete second difference of SSE.
    pub elbow_k: usize,
    /// Best-of-seeds model per k, parallel to `records`.
    pub models: Vec<ClusterModel>,
}

impl KSelectionReport {
    pub fn chosen_model(&self) -> &ClusterModel {
        self.model_for(self.chosen_k).expect("chosen k is in the scanned range")
    }

    pub fn model_for(&self, k: usize) -> Option<&ClusterModel> {
        self.models.iter().find(|m| m.k == k)
    }
}

/// Runs k-means for every k in `k_range`, keeping the lowest-SSE model out of
/// `seeds_per_k` restarts, and picks k by silhouette.
pub fn select_k(
    vectors: &[CountryVector],
    k_range: RangeInclusive<usize>,
    seeds_per_k: usize,
    master_seed: u64,
) -> Result<KSelectionReport, ClusterError> {
    if k_range.is_empty() {
        return Err(ClusterError::EmptyRange);
    }
    let max_k = *k_range.end();
    if vectors.len() <= max_k {
        return Err(ClusterError::TooFewPoints { max_k, n: vectors.len() });
    }
    let mut seeder = ChaCha8Rng::seed_from_u64(master_seed);
    let mut models = Vec::new();
    for k in k_range {
        let mut best: Option<ClusterModel> = None;
        for _ in 0..seeds_per_k.max(1) {
            let m = kmeans(vectors, k, seeder.next_u64(), DEFAULT_MAX_ITERATIONS)?;
            if best.as_ref().is_none_or(|b| m.sse < b.sse) {
                best = Some(m);
            }
        }
        models.push(best.expect("at least one restart"));
    }
    let records: Vec<KRecord> =
        models.iter().map(|m| KRecord { k: m.k, sse: m.sse, silhouette: m.silhouette }).collect();
    let mut chosen = 0;
    for (i, r) in records.iter().enumerate() {
        if r.silhouette > records[chosen].silhouette {
            chosen = i;
        }
    }
    let mut elbow = 0;
    let mut best_curv = f64::NEG_INFINITY;
    for i in 1..records.len().saturating_sub(1) {
        let curv = records[i - 1].sse - 2.0 * records[i].sse + records[i + 1].sse;
        if curv > best_curv {
            best_curv = curv;
            elbow = i;
        }
    }
    Ok(KSelectionReport { chosen_k: records[chosen].k, elbow_k: records[elbow].k, records, models })
}
