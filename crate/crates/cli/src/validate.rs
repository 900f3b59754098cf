use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use agtrade_core::sentinel::{
    detect_paired_outliers, detect_series_outliers, flag_value_with, format_date, parse_date, MadMode, OutlierRow,
    SeriesPoint,
};
use anyhow::{bail, Context, Result};
use clap::Args;

use crate::config::RunConfig;
use crate::output::{num, Out, Status};

#[derive(Args)]
pub struct ValidateArgs {
    /// Series CSV: series_id, description, statistical_type, unit, date, value.
    #[arg(long)]
    pub series: PathBuf,
    /// Two series ids, `x,y`, scored jointly with the geometric MAD.
    #[arg(long, value_parser = parse_pair)]
    pub pair: Option<(String, String)>,
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    match s.split_once(',') {
        Some((x, y)) if !x.is_empty() && !y.is_empty() && !y.contains(',') => Ok((x.into(), y.into())),
        _ => Err(format!("expected two series ids `x,y`, got `{s}`")),
    }
}

const COLUMNS: [&str; 6] = ["series_id", "description", "statistical_type", "unit", "date", "value"];

struct Series {
    id: String,
    description: String,
    statistical_type: String,
    unit: String,
    points: Vec<SeriesPoint>,
}

struct Diagnostic {
    level: &'static str,
    series: String,
    message: String,
}

#[derive(Default)]
struct Diagnostics {
    rows: Vec<Diagnostic>,
}

impl Diagnostics {
    fn warn(&mut self, status: &mut Status, series: &str, message: String) {
        status.warn(format!("{series}: {message}"));
        self.rows.push(Diagnostic { level: "warning", series: series.into(), message });
    }

    fn error(&mut self, status: &mut Status, series: &str, message: String) {
        status.error(format!("{series}: {message}"));
        self.rows.push(Diagnostic { level: "error", series: series.into(), message });
    }
}

/// Groups rows by series id, in order of first appearance.
fn read_series(path: &Path, diags: &mut Diagnostics, status: &mut Status) -> Result<Vec<Series>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let idx: Vec<usize> = COLUMNS
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h.trim() == *c)
                .with_context(|| format!("{} is missing column `{c}`", path.display()))
        })
        .collect::<Result<_>>()?;
    let mut series: Vec<Series> = Vec::new();
    let mut by_id: BTreeMap<String, usize> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let id = row[idx[0]].to_string();
        let Some(timestamp) = parse_date(&row[idx[4]]) else {
            diags.error(status, &id, format!("line {line}: bad date `{}`", &row[idx[4]]));
            continue;
        };
        let Some(value) = row[idx[5]].trim().parse::<f64>().ok().filter(|v| v.is_finite()) else {
            diags.error(status, &id, format!("line {line}: bad value `{}`", &row[idx[5]]));
            continue;
        };
        let slot = *by_id.entry(id.clone()).or_insert_with(|| {
            series.push(Series {
                id,
                description: row[idx[1]].to_string(),
                statistical_type: row[idx[2]].to_string(),
                unit: row[idx[3]].to_string(),
                points: Vec::new(),
            });
            series.len() - 1
        });
        series[slot].points.push(SeriesPoint { timestamp, value });
    }
    for s in &mut series {
        s.points.sort_by_key(|p| p.timestamp);
    }
    Ok(series)
}

pub fn run(args: &ValidateArgs, config: &mut RunConfig, out_dir: &Path, status: &mut Status) -> Result<()> {
    config.mad.validate()?;
    if config.mad.mode == MadMode::Geometric && args.pair.is_none() {
        bail!("geometric MAD mode needs --pair x,y");
    }
    let mut diags = Diagnostics::default();
    let series = read_series(&args.series, &mut diags, status)?;
    if series.is_empty() {
        status.warn(format!("{} holds no series rows", args.series.display()));
    }
    let out = Out::create(out_dir, config)?;

    let mut flags = out.csv("flags.csv", &["series", "statistical_type", "unit", "value", "color"])?;
    let mut outliers: Vec<OutlierRow> = Vec::new();
    for s in &series {
        if s.points.windows(2).any(|w| w[0].timestamp == w[1].timestamp) {
            diags.error(status, &s.id, "duplicate timestamps".into());
            continue;
        }
        match s.points.split_last() {
            Some((latest, history)) if !history.is_empty() => {
                let res = flag_value_with(history, latest.value, Some(latest.timestamp), &config.flags)?;
                flags.write_record([
                    &s.description,
                    &s.statistical_type,
                    &s.unit,
                    &num(latest.value),
                    &res.color.to_string(),
                ])?;
            }
            _ => diags.warn(status, &s.id, format!("{} point(s); need 2 to flag the latest value", s.points.len())),
        }
        if config.mad.mode == MadMode::Univariate {
            if s.points.len() < 3 {
                diags.warn(status, &s.id, format!("{} point(s); need 3 for outlier detection", s.points.len()));
            } else {
                outliers.extend(detect_series_outliers(&s.description, &s.points, &config.mad)?.rows);
            }
        }
    }
    flags.flush()?;

    // Stable: equal timestamps keep input series order.
    outliers.sort_by_key(|o| std::cmp::Reverse(o.timestamp));
    let mut w = out.csv("outliers.csv", &["description", "value", "timestamp"])?;
    for o in &outliers {
        w.write_record([o.description.clone(), num(o.value), format_date(o.timestamp)])?;
    }
    w.flush()?;

    if let Some(pair) = &args.pair {
        let find = |id: &str| {
            series.iter().find(|s| s.id == id).with_context(|| format!("--pair names unknown series `{id}`"))
        };
        let (x, y) = (find(&pair.0)?, find(&pair.1)?);
        let (res, mut rows) = detect_paired_outliers(&x.points, &y.points, &config.mad)?;
        rows.sort_by_key(|r| std::cmp::Reverse(r.timestamp));
        let mut text = out.text("paired.csv")?;
        writeln!(
            text,
            "# median_x={} median_y={} mad_x={} mad_y={} gmad={}",
            num(res.median_x),
            num(res.median_y),
            num(res.mad_x),
            num(res.mad_y),
            num(res.gmad)
        )?;
        let mut w = csv::Writer::from_writer(text);
        w.write_record(["timestamp", &x.id, &y.id])?;
        for r in &rows {
            w.write_record([format_date(r.timestamp), num(r.x), num(r.y)])?;
        }
        w.flush()?;
    }

    let mut w = out.csv("diagnostics.csv", &["level", "series_id", "message"])?;
    for d in &diags.rows {
        w.write_record([d.level, &d.series, &d.message])?;
    }
    w.flush()?;
    log::info!("{} series, {} outlier rows", series.len(), outliers.len());
    Ok(())
}
