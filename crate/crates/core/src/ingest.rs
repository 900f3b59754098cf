//! CSV ingestion: trade records, boolean transactions, country vectors and
//! gravity feature tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hs::MAX_CHAPTER;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("header is missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("clustering needs at least 2 countries, found {0}")]
    TooFewCountries(usize),
    #[error("country vectors have inconsistent dimensions")]
    RaggedVectors,
    #[error("feature table has no feature columns")]
    NoFeatures,
}

/// One bilateral flow for a single HS chapter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub reporter: String,
    pub partner: String,
    pub year: i32,
    pub hs_chapter: u16,
    pub value: f64,
}

/// Column names of the trade CSV and the accepted chapter range.
#[derive(Debug, Clone)]
pub struct TradeSchema {
    pub reporter: String,
    pub partner: String,
    pub year: String,
    pub hs_chapter: String,
    pub value: String,
    /// Upper bound for chapter codes; widen for finer HS levels.
    pub max_chapter: u16,
}

impl Default for TradeSchema {
    fn default() -> Self {
        TradeSchema {
            reporter: "reporter".into(),
            partner: "partner".into(),
            year: "year".into(),
            hs_chapter: "hs_chapter".into(),
            value: "value".into(),
            max_chapter: MAX_CHAPTER,
        }
    }
}

/// A rejected input row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowDiagnostic {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct TradeLoad {
    pub records: Vec<TradeRecord>,
    pub diagnostics: Vec<RowDiagnostic>,
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    headers.iter().position(|h| h.trim() == name).ok_or_else(|| IngestError::MissingColumn(name.to_string()))
}

/// Loads a trade CSV from disk. See [`read_trade_csv`].
pub fn load_trade_csv(path: &Path, schema: &TradeSchema) -> Result<TradeLoad, IngestError> {
    read_trade_csv(open(path)?, schema)
}

/// Parses trade rows in file order. Rows that fail to parse or violate the
/// record invariants are skipped and reported with their line number.
pub fn read_trade_csv<R: Read>(reader: R, schema: &TradeSchema) -> Result<TradeLoad, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let idx = [
        column(&headers, &schema.reporter)?,
        column(&headers, &schema.partner)?,
        column(&headers, &schema.year)?,
        column(&headers, &schema.hs_chapter)?,
        column(&headers, &schema.value)?,
    ];

    let mut out = TradeLoad::default();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                out.diagnostics.push(RowDiagnostic { line, message: e.to_string() });
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        match parse_trade_row(&row, &idx, schema.max_chapter) {
            Ok(rec) => out.records.push(rec),
            Err(message) => out.diagnostics.push(RowDiagnostic { line, message }),
        }
    }
    Ok(out)
}

fn parse_trade_row(row: &csv::StringRecord, idx: &[usize; 5], max_chapter: u16) -> Result<TradeRecord, String> {
    let field = |i: usize| -> Result<&str, String> {
        row.get(idx[i]).map(str::trim).ok_or_else(|| format!("expected at least {} fields", idx[i] + 1))
    };
    let reporter = field(0)?.to_string();
    let partner = field(1)?.to_string();
    if reporter.is_empty() || partner.is_empty() {
        return Err("empty country code".into());
    }
    if reporter == partner {
        return Err(format!("reporter equals partner ({reporter})"));
    }
    let year: i32 = field(2)?.parse().map_err(|_| format!("bad year `{}`", field(2).unwrap_or("")))?;
    let chapter_text = field(3)?;
    let hs_chapter: u16 = chapter_text
        .strip_suffix(".0")
        .unwrap_or(chapter_text)
        .parse()
        .map_err(|_| format!("bad hs_chapter `{chapter_text}`"))?;
    if hs_chapter < 1 || hs_chapter > max_chapter {
        return Err(format!("unknown HS chapter {hs_chapter} (accepted 1..={max_chapter})"));
    }
    let value: f64 = field(4)?.parse().map_err(|_| format!("bad value `{}`", field(4).unwrap_or("")))?;
    if !value.is_finite() || value < 0.0 {
        return Err(format!("trade value must be finite and non-negative, got {value}"));
    }
    Ok(TradeRecord { reporter, partner, year, hs_chapter, value })
}

/// One country-pair-year basket of traded chapters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: usize,
    pub reporter: String,
    pub partner: String,
    pub year: i32,
    /// Sorted, duplicate-free chapter codes.
    pub items: Vec<u16>,
}

type PairYear = (String, String, i32);

/// Summed value per (reporter, partner, year, chapter).
pub fn aggregate_chapter_values(records: &[TradeRecord]) -> BTreeMap<(PairYear, u16), f64> {
    let mut acc: BTreeMap<(PairYear, u16), f64> = BTreeMap::new();
    for r in records {
        *acc.entry(((r.reporter.clone(), r.partner.clone(), r.year), r.hs_chapter)).or_insert(0.0) += r.value;
    }
    acc
}

/// Groups records by (reporter, partner, year). A chapter belongs to the
/// basket when its summed value is strictly greater than `min_value`; empty
/// baskets are dropped. Output is ordered by key and ids are positional.
pub fn build_transactions(records: &[TradeRecord], min_value: f64) -> Vec<Transaction> {
    let mut baskets: BTreeMap<PairYear, BTreeSet<u16>> = BTreeMap::new();
    for ((key, chapter), total) in aggregate_chapter_values(records) {
        let basket = baskets.entry(key).or_default();
        if total > min_value {
            basket.insert(chapter);
        }
    }
    baskets
        .into_iter()
        .filter(|(_, items)| !items.is_empty())
        .enumerate()
        .map(|(id, ((reporter, partner, year), items))| Transaction {
            id,
            reporter,
            partner,
            year,
            items: items.into_iter().collect(),
        })
        .collect()
}

/// Expands transactions back into unit-valued records.
pub fn flatten_transactions(transactions: &[Transaction]) -> Vec<TradeRecord> {
    transactions
        .iter()
        .flat_map(|t| {
            t.items.iter().map(move |&c| TradeRecord {
                reporter: t.reporter.clone(),
                partner: t.partner.clone(),
                year: t.year,
                hs_chapter: c,
                value: 1.0,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryVector {
    pub country: String,
    pub features: Vec<f64>,
}

/// How country vectors are derived before standardization.
#[derive(Debug, Clone)]
pub enum VectorMode {
    /// Per-year total trade, counting each record for both its reporter and partner.
    TotalsByYear,
    /// Caller-supplied raw features per country.
    Custom(BTreeMap<String, Vec<f64>>),
}

/// Per-year totals for every country appearing as reporter or partner.
pub fn country_totals(records: &[TradeRecord]) -> BTreeMap<String, Vec<f64>> {
    let years: Vec<i32> = records.iter().map(|r| r.year).collect::<BTreeSet<_>>().into_iter().collect();
    let mut totals: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        let y = years.binary_search(&r.year).expect("year collected above");
        for c in [&r.reporter, &r.partner] {
            totals.entry(c.clone()).or_insert_with(|| vec![0.0; years.len()])[y] += r.value;
        }
    }
    totals
}

/// Builds standardized country vectors (zero mean, unit population variance
/// per dimension; constant dimensions become all zeros).
pub fn build_country_vectors(records: &[TradeRecord], mode: &VectorMode) -> Result<Vec<CountryVector>, IngestError> {
    let raw = match mode {
        VectorMode::TotalsByYear => country_totals(records),
        VectorMode::Custom(m) => m.clone(),
    };
    if raw.len() < 2 {
        return Err(IngestError::TooFewCountries(raw.len()));
    }
    let dim = raw.values().next().map(Vec::len).unwrap_or(0);
    if raw.values().any(|v| v.len() != dim) {
        return Err(IngestError::RaggedVectors);
    }
    let mut vectors: Vec<CountryVector> =
        raw.into_iter().map(|(country, features)| CountryVector { country, features }).collect();
    standardize(&mut vectors);
    Ok(vectors)
}

fn standardize(vectors: &mut [CountryVector]) {
    let n = vectors.len() as f64;
    let dim = vectors.first().map(|v| v.features.len()).unwrap_or(0);
    for j in 0..dim {
        let mean = vectors.iter().map(|v| v.features[j]).sum::<f64>() / n;
        let var = vectors.iter().map(|v| (v.features[j] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for v in vectors.iter_mut() {
            v.features[j] = if sd > 0.0 { (v.features[j] - mean) / sd } else { 0.0 };
        }
    }
}

/// One (origin, destination, year, commodity) observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub origin: String,
    pub destination: String,
    pub year: i32,
    pub commodity: String,
    pub features: Vec<f64>,
    pub target: f64,
}

#[derive(Debug, Clone, Default)]
pub struct FeatureTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<FeatureRow>,
    /// Number of imputed cells per feature column.
    pub imputed: Vec<usize>,
    pub diagnostics: Vec<RowDiagnostic>,
}

impl FeatureTable {
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.features.clone()).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.target).collect()
    }
}

const KEY_COLUMNS: [&str; 4] = ["origin", "destination", "year", "commodity"];

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "NaN" | "nan" | "null")
}

pub fn load_feature_csv(path: &Path) -> Result<FeatureTable, IngestError> {
    read_feature_csv(open(path)?)
}

/// Parses `origin,destination,year,commodity,<feature...>,target`. Missing
/// feature cells are imputed with the column median; rows with a missing or
/// invalid target are rejected.
pub fn read_feature_csv<R: Read>(reader: R) -> Result<FeatureTable, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let key_idx: Vec<usize> = KEY_COLUMNS.iter().map(|k| column(&headers, k)).collect::<Result<_, _>>()?;
    let target_idx = column(&headers, "target")?;
    let feature_idx: Vec<usize> = (0..headers.len()).filter(|i| !key_idx.contains(i) && *i != target_idx).collect();
    if feature_idx.is_empty() {
        return Err(IngestError::NoFeatures);
    }
    let feature_names: Vec<String> = feature_idx.iter().map(|&i| headers[i].trim().to_string()).collect();

    let mut table = FeatureTable { feature_names, imputed: vec![0; feature_idx.len()], ..Default::default() };
    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let reject = |message: String| RowDiagnostic { line, message };
        let year = match row[key_idx[2]].trim().parse::<i32>() {
            Ok(y) => y,
            Err(_) => {
                table.diagnostics.push(reject(format!("bad year `{}`", &row[key_idx[2]])));
                continue;
            }
        };
        let target = match row[target_idx].trim().parse::<f64>() {
            Ok(t) if t.is_finite() && t >= 0.0 => t,
            _ => {
                table.diagnostics.push(reject(format!("bad target `{}`", &row[target_idx])));
                continue;
            }
        };
        let mut parsed = Vec::with_capacity(feature_idx.len());
        let mut bad = None;
        for (j, &i) in feature_idx.iter().enumerate() {
            let cell = row[i].trim();
            if is_missing(cell) {
                parsed.push(None);
            } else {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => parsed.push(Some(v)),
                    _ => {
                        bad = Some(format!("bad value `{cell}` in column `{}`", table.feature_names[j]));
                        break;
                    }
                }
            }
        }
        if let Some(message) = bad {
            table.diagnostics.push(reject(message));
            continue;
        }
        cells.push(parsed);
        table.rows.push(FeatureRow {
            origin: row[key_idx[0]].trim().to_string(),
            destination: row[key_idx[1]].trim().to_string(),
            year,
            commodity: row[key_idx[3]].trim().to_string(),
            features: Vec::new(),
            target,
        });
    }

    let medians: Vec<f64> = (0..table.feature_names.len())
        .map(|j| {
            let present: Vec<f64> = cells.iter().filter_map(|c| c[j]).collect();
            if present.is_empty() {
                0.0
            } else {
                median(&present)
            }
        })
        .collect();
    for (row, parsed) in table.rows.iter_mut().zip(cells) {
        row.features = parsed
            .into_iter()
            .enumerate()
            .map(|(j, v)| {
                v.unwrap_or_else(|| {
                    table.imputed[j] += 1;
                    medians[j]
                })
            })
            .collect();
    }
    Ok(table)
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}
