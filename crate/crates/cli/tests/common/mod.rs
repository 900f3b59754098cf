#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use agtrade_core::ingest::{CountryVector, FeatureTable, TradeRecord};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_agtrade")
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn agtrade(args: &[&str]) -> Output {
    Command::new(bin()).args(args).env("RUST_LOG", "warn").output().expect("agtrade runs")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn write_trade(path: &Path, records: &[TradeRecord]) {
    let mut w = csv::Writer::from_path(path).unwrap();
    w.write_record(["reporter", "partner", "year", "hs_chapter", "value"]).unwrap();
    for r in records {
        w.write_record([
            r.reporter.clone(),
            r.partner.clone(),
            r.year.to_string(),
            r.hs_chapter.to_string(),
            r.value.to_string(),
        ])
        .unwrap();
    }
    w.flush().unwrap();
}

pub fn write_features(path: &Path, table: &FeatureTable) {
    let mut w = csv::Writer::from_path(path).unwrap();
    let mut header = vec!["origin".to_string(), "destination".into(), "year".into(), "commodity".into()];
    header.extend(table.feature_names.iter().cloned());
    header.push("target".into());
    w.write_record(&header).unwrap();
    for r in &table.rows {
        let mut rec = vec![r.origin.clone(), r.destination.clone(), r.year.to_string(), r.commodity.clone()];
        rec.extend(r.features.iter().map(|v| v.to_string()));
        rec.push(r.target.to_string());
        w.write_record(&rec).unwrap();
    }
    w.flush().unwrap();
}

pub fn write_vectors(path: &Path, vectors: &[CountryVector]) {
    let mut w = csv::Writer::from_path(path).unwrap();
    let dim = vectors[0].features.len();
    let mut header = vec!["country".to_string()];
    header.extend((0..dim).map(|j| format!("x{j}")));
    w.write_record(&header).unwrap();
    for v in vectors {
        let mut rec = vec![v.country.clone()];
        rec.extend(v.features.iter().map(|x| x.to_string()));
        w.write_record(&rec).unwrap();
    }
    w.flush().unwrap();
}

/// Boosting settings that keep CLI tests fast.
pub const QUICK_CONFIG: &str = "[boost]\nmax_rounds = 300\nearly_stopping_rounds = 100\n";

/// Data rows of an output CSV, skipping `#` comment lines.
pub fn read_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

/// Every file in `dir`, sorted by name, with its bytes.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}
