//! Data validation: the five-colour historical-range flag ladder, univariate
//! and geometric MAD outlier detection, and the food-supply identity.

use std::fmt;

use chrono::{Months, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::median;

#[derive(Debug, Error, PartialEq)]
pub enum SentinelError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("need at least 3 values, got {0}")]
    TooFewValues(usize),
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("timestamps must be strictly increasing ({0} follows {1})")]
    NotIncreasing(NaiveDate, NaiveDate),
    #[error("invalid mad config: {0}")]
    InvalidConfig(String),
    #[error("invalid supply ledger: {0}")]
    InvalidLedger(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub timestamp: NaiveDate,
    pub value: f64,
}

/// `M/D/YYYY`, without zero padding.
pub fn format_date(d: NaiveDate) -> String {
    d.format("%-m/%-d/%Y").to_string()
}

/// Accepts `M/D/YYYY` or ISO `YYYY-MM-DD`.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    NaiveDate::parse_from_str(s, "%m/%d/%Y").or_else(|_| NaiveDate::parse_from_str(s, "%Y-%m-%d")).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FlagColor {
    Green,
    Blue,
    Yellow,
    Orange,
    Red,
}

impl fmt::Display for FlagColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// How the 3/5/10 windows are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    /// The last N observations.
    #[default]
    Observations,
    /// Observations dated within N years before the flagged value.
    Calendar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlagConfig {
    pub mode: WindowMode,
    /// Spans of the Green, Blue and Yellow windows.
    pub windows: [usize; 3],
}

impl Default for FlagConfig {
    fn default() -> Self {
        FlagConfig { mode: WindowMode::Observations, windows: [3, 5, 10] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRange {
    /// None for the full history.
    pub span: Option<usize>,
    pub points: usize,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlagResult {
    pub value: f64,
    pub color: FlagColor,
    pub windows: Vec<WindowRange>,
}

fn range_of(span: Option<usize>, values: &[f64]) -> WindowRange {
    let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    WindowRange { span, points: values.len(), min, max }
}

/// Flags `value` against the last-3/5/10 observation windows of `history`
/// (oldest first) and then the full history.
pub fn flag_value(history: &[SeriesPoint], value: f64) -> Result<FlagResult, SentinelError> {
    flag_value_with(history, value, None, &FlagConfig::default())
}

/// Ladder with explicit windows. In calendar mode `at` dates the flagged
/// value (default: the day after the last observation). Ranges are
/// inclusive; Green needs at least two points in its window.
pub fn flag_value_with(
    history: &[SeriesPoint],
    value: f64,
    at: Option<NaiveDate>,
    config: &FlagConfig,
) -> Result<FlagResult, SentinelError> {
    let last = history.last().ok_or(SentinelError::EmptyHistory)?;
    if let Some(i) = history.iter().position(|p| !p.value.is_finite()) {
        return Err(SentinelError::NonFinite(i));
    }
    let at = at.unwrap_or_else(|| last.timestamp.succ_opt().unwrap_or(last.timestamp));
    let window = |span: usize| -> Vec<f64> {
        match config.mode {
            WindowMode::Observations => history[history.len().saturating_sub(span)..].iter().map(|p| p.value).collect(),
            WindowMode::Calendar => {
                let start = at.checked_sub_months(Months::new(12 * span as u32)).unwrap_or(NaiveDate::MIN);
                history.iter().filter(|p| p.timestamp >= start && p.timestamp <= at).map(|p| p.value).collect()
            }
        }
    };
    let mut windows: Vec<WindowRange> = config.windows.iter().map(|&s| range_of(Some(s), &window(s))).collect();
    let all: Vec<f64> = history.iter().map(|p| p.value).collect();
    windows.push(range_of(None, &all));

    let ladder = [FlagColor::Green, FlagColor::Blue, FlagColor::Yellow, FlagColor::Orange];
    let color = windows
        .iter()
        .zip(ladder)
        .find(|(w, color)| {
            let enough = if *color == FlagColor::Green { w.points >= 2 } else { w.points >= 1 };
            enough && w.min <= value && value <= w.max
        })
        .map(|(_, c)| c)
        .unwrap_or(FlagColor::Red);
    Ok(FlagResult { value, color, windows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MadMode {
    #[default]
    Univariate,
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MadConfig {
    pub threshold: f64,
    pub consistency_constant: f64,
    pub mode: MadMode,
    /// Remove a least-squares linear trend before computing deviations.
    pub detrend: bool,
}

impl Default for MadConfig {
    fn default() -> Self {
        MadConfig { threshold: 3.0, consistency_constant: 1.4826, mode: MadMode::Univariate, detrend: false }
    }
}

impl MadConfig {
    pub fn validate(&self) -> Result<(), SentinelError> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(SentinelError::InvalidConfig(format!("threshold must be positive, got {}", self.threshold)));
        }
        if !(self.consistency_constant > 0.0 && self.consistency_constant.is_finite()) {
            return Err(SentinelError::InvalidConfig(format!(
                "consistency_constant must be positive, got {}",
                self.consistency_constant
            )));
        }
        Ok(())
    }

    fn cutoff(&self, scale: f64) -> f64 {
        self.threshold * self.consistency_constant * scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MadResult {
    pub median: f64,
    /// Raw median absolute deviation, before the consistency constant.
    pub mad: f64,
    /// Indices of flagged values, ascending.
    pub outliers: Vec<usize>,
}

fn check_values(values: &[f64]) -> Result<(), SentinelError> {
    if values.len() < 3 {
        return Err(SentinelError::TooFewValues(values.len()));
    }
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(SentinelError::NonFinite(i)),
        None => Ok(()),
    }
}

fn median_and_mad(values: &[f64]) -> (f64, f64) {
    let med = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    (med, median(&dev))
}

/// Flags `|x − median| > threshold · c · MAD`. When MAD is zero (more than
/// half the values equal the median), every value off the median is flagged.
pub fn mad_univariate(values: &[f64], config: &MadConfig) -> Result<MadResult, SentinelError> {
    config.validate()?;
    check_values(values)?;
    let (med, mad) = median_and_mad(values);
    let outliers = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| {
            let d = (v - med).abs();
            if mad > 0.0 {
                d > config.cutoff(mad)
            } else {
                d > 0.0
            }
        })
        .map(|(i, _)| i)
        .collect();
    Ok(MadResult { median: med, mad, outliers })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometricMadResult {
    pub median_x: f64,
    pub median_y: f64,
    pub mad_x: f64,
    pub mad_y: f64,
    /// `sqrt(mad_x² + mad_y²)`.
    pub gmad: f64,
    pub outliers: Vec<usize>,
}

/// Flags pairs whose Euclidean distance from the componentwise median exceeds
/// `threshold · c · gmad`; with `gmad = 0` any displaced pair is flagged.
pub fn mad_geometric(pairs: &[(f64, f64)], config: &MadConfig) -> Result<GeometricMadResult, SentinelError> {
    config.validate()?;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    check_values(&xs)?;
    check_values(&ys)?;
    let (median_x, mad_x) = median_and_mad(&xs);
    let (median_y, mad_y) = median_and_mad(&ys);
    let gmad = mad_x.hypot(mad_y);
    let outliers = pairs
        .iter()
        .enumerate()
        .filter(|(_, &(x, y))| {
            let d = (x - median_x).hypot(y - median_y);
            if gmad > 0.0 {
                d > config.cutoff(gmad)
            } else {
                d > 0.0
            }
        })
        .map(|(i, _)| i)
        .collect();
    Ok(GeometricMadResult { median_x, median_y, mad_x, mad_y, gmad, outliers })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierRow {
    pub description: String,
    pub value: f64,
    pub timestamp: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierReport {
    pub median: f64,
    pub mad: f64,
    /// Flagged points in chronological order.
    pub rows: Vec<OutlierRow>,
}

fn check_increasing(series: &[SeriesPoint]) -> Result<(), SentinelError> {
    for w in series.windows(2) {
        if w[1].timestamp <= w[0].timestamp {
            return Err(SentinelError::NotIncreasing(w[1].timestamp, w[0].timestamp));
        }
    }
    Ok(())
}

/// Residuals from the least-squares line through `(i, values[i])`.
fn detrend(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean_i = (n - 1.0) / 2.0;
    let mean_v = values.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in values.iter().enumerate() {
        let di = i as f64 - mean_i;
        sxy += di * (v - mean_v);
        sxx += di * di;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    values.iter().enumerate().map(|(i, v)| v - (mean_v + slope * (i as f64 - mean_i))).collect()
}

/// Univariate MAD over a series' values (or its detrended residuals).
pub fn detect_series_outliers(
    description: &str,
    series: &[SeriesPoint],
    config: &MadConfig,
) -> Result<OutlierReport, SentinelError> {
    check_increasing(series)?;
    let values: Vec<f64> = series.iter().map(|p| p.value).collect();
    let scored = if config.detrend && values.len() >= 3 { detrend(&values) } else { values };
    let res = mad_univariate(&scored, config)?;
    Ok(OutlierReport {
        median: res.median,
        mad: res.mad,
        rows: res
            .outliers
            .iter()
            .map(|&i| OutlierRow {
                description: description.to_string(),
                value: series[i].value,
                timestamp: series[i].timestamp,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedOutlier {
    pub timestamp: NaiveDate,
    pub x: f64,
    pub y: f64,
}

/// Geometric MAD over two series aligned on their shared timestamps.
pub fn detect_paired_outliers(
    x: &[SeriesPoint],
    y: &[SeriesPoint],
    config: &MadConfig,
) -> Result<(GeometricMadResult, Vec<PairedOutlier>), SentinelError> {
    check_increasing(x)?;
    check_increasing(y)?;
    let mut aligned = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < x.len() && j < y.len() {
        match x[i].timestamp.cmp(&y[j].timestamp) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                aligned.push((x[i].timestamp, x[i].value, y[j].value));
                i += 1;
                j += 1;
            }
        }
    }
    let pairs: Vec<(f64, f64)> = aligned.iter().map(|a| (a.1, a.2)).collect();
    let res = mad_geometric(&pairs, config)?;
    let rows = res
        .outliers
        .iter()
        .map(|&k| PairedOutlier { timestamp: aligned[k].0, x: aligned[k].1, y: aligned[k].2 })
        .collect();
    Ok((res, rows))
}

/// Annual supply and disappearance components, in commodity units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SupplyLedger {
    pub production: f64,
    pub imports: f64,
    pub beginning_stocks: f64,
    pub farm_inputs: f64,
    pub exports: f64,
    pub ending_stocks: f64,
}

impl SupplyLedger {
    pub fn validate(&self) -> Result<(), SentinelError> {
        let fields = [
            ("production", self.production),
            ("imports", self.imports),
            ("beginning_stocks", self.beginning_stocks),
            ("farm_inputs", self.farm_inputs),
            ("exports", self.exports),
            ("ending_stocks", self.ending_stocks),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(SentinelError::InvalidLedger(format!("{name} is not finite")));
        }
        if self.beginning_stocks < 0.0 || self.ending_stocks < 0.0 {
            return Err(SentinelError::InvalidLedger("stocks must be non-negative".into()));
        }
        Ok(())
    }
}

/// Supply minus disappearance:
/// `(production + imports + beginning) − (farm_inputs + exports + ending)`.
pub fn food_supply(ledger: &SupplyLedger) -> f64 {
    (ledger.production + ledger.imports + ledger.beginning_stocks)
        - (ledger.farm_inputs + ledger.exports + ledger.ending_stocks)
}
