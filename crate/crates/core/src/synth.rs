//! Seeded synthetic data generators with known structure, used by the test
//! suites and for demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{CountryVector, FeatureRow, FeatureTable, TradeRecord};

/// Box–Muller standard normal draw.
fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Keeps synthetic targets non-negative, like trade values.
const TARGET_OFFSET: f64 = 20.0;

pub const BLOB_CENTERS: [[f64; 2]; 6] = [[0.0, 0.0], [3.0, 0.0], [0.0, 3.0], [3.0, 3.0], [6.0, 0.0], [6.0, 3.0]];

/// Six well-separated 2-D Gaussian blobs; returns vectors and true labels.
pub fn blobs(seed: u64, per_blob: usize, sigma: f64) -> (Vec<CountryVector>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for (b, c) in BLOB_CENTERS.iter().enumerate() {
        for i in 0..per_blob {
            let features = vec![c[0] + sigma * normal(&mut rng), c[1] + sigma * normal(&mut rng)];
            vectors.push(CountryVector { country: format!("B{b}P{i:02}"), features });
            labels.push(b);
        }
    }
    (vectors, labels)
}

#[derive(Debug, Clone)]
pub struct EmlWorldSpec {
    pub big: usize,
    pub small: usize,
    pub destinations: usize,
    pub years: usize,
    /// Uninformative features alongside `gdp_o`.
    pub distractors: usize,
    pub big_noise: f64,
    /// Small-country noise is `big_noise · small_noise_factor`.
    pub small_noise_factor: f64,
}

impl Default for EmlWorldSpec {
    fn default() -> Self {
        EmlWorldSpec {
            big: 6,
            small: 20,
            destinations: 8,
            years: 5,
            distractors: 1,
            big_noise: 0.1,
            small_noise_factor: 20.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmlWorld {
    pub records: Vec<TradeRecord>,
    pub features: FeatureTable,
    /// Names of the big traders, sorted.
    pub big: Vec<String>,
}

/// Big traders trade heavily among themselves; small ones lightly with two
/// neighbours. Every origin follows `target = 20 + 2 · gdp_o + noise`, with
/// the small countries' noise scaled up; targets are clamped at zero.
pub fn eml_world(spec: &EmlWorldSpec, seed: u64) -> EmlWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let big: Vec<String> = (0..spec.big).map(|i| format!("B{i:02}")).collect();
    let small: Vec<String> = (0..spec.small).map(|i| format!("S{i:02}")).collect();
    let years: Vec<i32> = (0..spec.years as i32).map(|y| 2015 + y).collect();

    let mut records = Vec::new();
    for &year in &years {
        for (i, a) in big.iter().enumerate() {
            for (j, b) in big.iter().enumerate() {
                if i != j {
                    records.push(TradeRecord {
                        reporter: a.clone(),
                        partner: b.clone(),
                        year,
                        hs_chapter: 2,
                        value: 1000.0 * rng.random_range(0.8..1.2),
                    });
                }
            }
        }
        for i in 0..small.len() {
            for step in 1..=2 {
                let j = (i + step) % small.len();
                if j != i {
                    records.push(TradeRecord {
                        reporter: small[i].clone(),
                        partner: small[j].clone(),
                        year,
                        hs_chapter: 2,
                        value: 10.0 * rng.random_range(0.8..1.2),
                    });
                }
            }
        }
    }

    let everyone: Vec<&String> = big.iter().chain(&small).collect();
    let mut rows = Vec::new();
    for (ci, origin) in everyone.iter().enumerate() {
        let sigma = if ci < spec.big { spec.big_noise } else { spec.big_noise * spec.small_noise_factor };
        for &year in &years {
            let gdp_o: f64 = rng.random_range(1.0..10.0);
            for d in 1..=spec.destinations {
                let destination = everyone[(ci + d) % everyone.len()];
                let mut features = vec![gdp_o];
                features.extend((0..spec.distractors).map(|_| rng.random_range(1.0..10.0)));
                rows.push(FeatureRow {
                    origin: (*origin).clone(),
                    destination: destination.clone(),
                    year,
                    commodity: "02".into(),
                    features,
                    target: (TARGET_OFFSET + 2.0 * gdp_o + sigma * normal(&mut rng)).max(0.0),
                });
            }
        }
    }
    let mut feature_names = vec!["gdp_o".to_string()];
    feature_names.extend((0..spec.distractors).map(|i| match i {
        0 => "gdp_d".to_string(),
        1 => "distance".to_string(),
        _ => format!("noise{}", i - 1),
    }));
    let features = FeatureTable { imputed: vec![0; feature_names.len()], feature_names, rows, diagnostics: vec![] };
    EmlWorld { records, features, big }
}

/// Log-gravity table: `20 + ln gdp_o + ln gdp_d − ln distance + 0.5 · contiguous`
/// plus Gaussian noise with standard deviation `noise_fraction` times that of
/// the signal, clamped at zero. A fifth column is pure noise.
pub fn gravity_table(seed: u64, n_rows: usize, noise_fraction: f64) -> FeatureTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = Vec::with_capacity(n_rows);
    for i in 0..n_rows {
        let gdp_o = 10f64.powf(rng.random_range(0.0..3.0));
        let gdp_d = 10f64.powf(rng.random_range(0.0..3.0));
        let distance = 10f64.powf(rng.random_range(2.0..4.0));
        let contiguous = if rng.random_bool(0.2) { 1.0 } else { 0.0 };
        let filler: f64 = rng.random();
        let signal = gdp_o.ln() + gdp_d.ln() - distance.ln() + 0.5 * contiguous;
        raw.push((i, vec![gdp_o, gdp_d, distance, contiguous, filler], signal));
    }
    let mean = raw.iter().map(|r| r.2).sum::<f64>() / n_rows as f64;
    let sd = (raw.iter().map(|r| (r.2 - mean).powi(2)).sum::<f64>() / n_rows as f64).sqrt();
    let rows = raw
        .into_iter()
        .map(|(i, features, signal)| FeatureRow {
            origin: format!("C{:02}", i % 30),
            destination: format!("C{:02}", (i / 30 + i % 30 + 1) % 30),
            year: 2000 + (i / 900) as i32,
            commodity: "10".into(),
            features,
            target: (TARGET_OFFSET + signal + noise_fraction * sd * normal(&mut rng)).max(0.0),
        })
        .collect();
    FeatureTable {
        feature_names: ["gdp_o", "gdp_d", "distance", "contiguous", "filler"].map(String::from).to_vec(),
        rows,
        imputed: vec![0; 5],
        diagnostics: vec![],
    }
}

/// Uniform features where the target is exactly feature 0.
pub fn single_driver(seed: u64, n_rows: usize, n_features: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n_rows).map(|_| (0..n_features).map(|_| rng.random::<f64>()).collect()).collect();
    let y = rows.iter().map(|r| r[0]).collect();
    (rows, y)
}
