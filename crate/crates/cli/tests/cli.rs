mod common;

use std::collections::BTreeSet;
use std::fs;

use agtrade_core::synth::{blobs, eml_world, EmlWorldSpec};
use agtrade_core::trees::BoostedModel;
use common::*;

#[test]
fn mine_reproduces_the_published_top_rules() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = agtrade(&[
        "--out",
        path_str(&out),
        "mine",
        "--trade",
        path_str(&fixture("rules_trade.csv")),
        "--min-antecedent",
        "2",
        "--top",
        "20",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let (header, rows) = read_rows(&out.join("rules.csv"));
    assert_eq!(
        header,
        ["Lhs", "Rhs", "Lhs_name", "Rhs_name", "Support", "Confidence", "Lift", "Count", "Country_O", "Country_D"]
    );
    let ours: BTreeSet<(String, String, String, String, String)> =
        rows.iter().map(|r| (r[0].clone(), r[1].clone(), r[4].clone(), r[6].clone(), r[7].clone())).collect();
    let (_, published) = read_rows(&fixture("rules_published.csv"));
    let theirs: BTreeSet<(String, String, String, String, String)> =
        published.iter().map(|r| (r[0].clone(), r[1].clone(), r[2].clone(), r[4].clone(), r[5].clone())).collect();
    assert_eq!(ours.len(), 20);
    assert_eq!(ours, theirs);
    assert!(rows.iter().all(|r| r[5] == "1.000000"));

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["transactions"], 743);
    assert_eq!(summary["meta"]["seed"], 0);
    let (scatter_header, scatter) = read_rows(&out.join("scatter.csv"));
    assert_eq!(scatter_header, ["support", "confidence", "lift"]);
    assert!(scatter.len() >= 20);
}

#[test]
fn invalid_min_support_fails() {
    let dir = tempfile::tempdir().unwrap();
    let res = agtrade(&[
        "--out",
        path_str(dir.path()),
        "mine",
        "--trade",
        path_str(&fixture("rules_trade.csv")),
        "--min-support",
        "1.01",
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("min_support"));
}

#[test]
fn every_output_carries_version_config_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = agtrade(&[
        "--seed",
        "42",
        "--out",
        path_str(&out),
        "validate",
        "--series",
        path_str(&fixture("flags_series.csv")),
    ]);
    assert!(res.status.success());
    for (name, bytes) in snapshot(&out) {
        let first = String::from_utf8(bytes).unwrap().lines().next().unwrap().to_string();
        assert!(first.starts_with("# agtrade "), "{name}: {first}");
        assert!(first.contains(" config=") && first.ends_with(" seed=42"), "{name}: {first}");
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[mining]\nminsupport = 0.3\n").unwrap();
    let res = agtrade(&[
        "--config",
        path_str(&cfg),
        "--out",
        path_str(dir.path()),
        "mine",
        "--trade",
        path_str(&fixture("rules_trade.csv")),
    ]);
    assert!(!res.status.success());
}

#[test]
fn cluster_finds_six_blobs_over_the_requested_range() {
    let dir = tempfile::tempdir().unwrap();
    let (vectors, _) = blobs(3, 8, 0.05);
    let input = dir.path().join("vectors.csv");
    write_vectors(&input, &vectors);
    let out = dir.path().join("out");
    let res =
        agtrade(&["--out", path_str(&out), "cluster", "--vectors", path_str(&input), "--k-min", "2", "--k-max", "10"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let text = fs::read_to_string(out.join("kselect.csv")).unwrap();
    assert!(text.lines().any(|l| l.starts_with("# chosen_k=6 ")), "{text}");
    let (header, rows) = read_rows(&out.join("kselect.csv"));
    assert_eq!(header, ["k", "sse", "silhouette"]);
    let ks: Vec<usize> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(ks, (2..=10).collect::<Vec<_>>());

    let (header, rows) = read_rows(&out.join("clusters.csv"));
    assert_eq!(header[0], "country");
    assert_eq!(header[1], "k=2");
    assert_eq!(header.len(), 10);
    assert_eq!(rows.len(), vectors.len());
}

#[test]
fn cluster_needs_three_countries() {
    let dir = tempfile::tempdir().unwrap();
    let (vectors, _) = blobs(1, 1, 0.05);
    let input = dir.path().join("vectors.csv");
    write_vectors(&input, &vectors[..2]);
    let res = agtrade(&["--out", path_str(dir.path()), "cluster", "--vectors", path_str(&input), "--k-max", "2"]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("at least 3 countries"));
}

struct Trained {
    dir: tempfile::TempDir,
}

fn train_world(seed: u64) -> Trained {
    let dir = tempfile::tempdir().unwrap();
    let world = eml_world(&EmlWorldSpec::default(), seed);
    write_trade(&dir.path().join("trade.csv"), &world.records);
    write_features(&dir.path().join("features.csv"), &world.features);
    fs::write(dir.path().join("run.toml"), QUICK_CONFIG).unwrap();
    let res = agtrade(&[
        "--config",
        path_str(&dir.path().join("run.toml")),
        "--out",
        path_str(&dir.path().join("train")),
        "train",
        "--trade",
        path_str(&dir.path().join("trade.csv")),
        "--features",
        path_str(&dir.path().join("features.csv")),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    Trained { dir }
}

#[test]
fn predict_reproduces_training_report_exactly() {
    let t = train_world(3);
    let d = t.dir.path();
    let res = agtrade(&[
        "--out",
        path_str(&d.join("pred")),
        "predict",
        "--model",
        path_str(&d.join("train/model.json")),
        "--features",
        path_str(&d.join("features.csv")),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("train/eml_report.json")).unwrap()).unwrap();
    let expected: Vec<f64> =
        report["predictions"].as_array().unwrap().iter().map(|p| p["predicted"].as_f64().unwrap()).collect();
    let (header, rows) = read_rows(&d.join("pred/predictions.csv"));
    let col = header.iter().position(|h| h == "predicted").unwrap();
    let got: Vec<f64> = rows.iter().map(|r| r[col].parse().unwrap()).collect();
    assert_eq!(got.len(), expected.len());
    for (g, e) in got.iter().zip(&expected) {
        assert_eq!(g.to_bits(), e.to_bits());
    }

    let (_, train_rows) = read_rows(&d.join("train/predictions.csv"));
    for (r, e) in train_rows.iter().zip(&expected) {
        assert_eq!(r[5].parse::<f64>().unwrap().to_bits(), e.to_bits());
    }
}

#[test]
fn importance_gains_sum_to_the_model_total() {
    let t = train_world(4);
    let d = t.dir.path();
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("train/model.json")).unwrap()).unwrap();
    let model = BoostedModel::from_json(&doc["model"].to_string()).unwrap();
    let total: f64 = model.trees.iter().map(|t| t.total_gain()).sum();
    let (header, rows) = read_rows(&d.join("train/importance.csv"));
    assert_eq!(header, ["feature", "split", "gain"]);
    assert_eq!(rows.len(), model.feature_names.len());
    let listed: f64 = rows.iter().map(|r| r[2].parse::<f64>().unwrap()).sum();
    assert!((listed - total).abs() <= 1e-9 * total.abs().max(1.0), "{listed} vs {total}");
    let splits: u64 = rows.iter().map(|r| r[1].parse::<u64>().unwrap()).sum();
    let nodes: usize = model
        .trees
        .iter()
        .map(|t| t.nodes.iter().filter(|n| matches!(n, agtrade_core::trees::Node::Split { .. })).count())
        .sum();
    assert_eq!(splits as usize, nodes);
}

#[test]
fn predict_names_a_missing_feature_column() {
    let t = train_world(5);
    let d = t.dir.path();
    let text = fs::read_to_string(d.join("features.csv")).unwrap();
    let stripped: String = text
        .lines()
        .map(|l| {
            let mut cells: Vec<&str> = l.split(',').collect();
            cells.remove(4);
            cells.join(",") + "\n"
        })
        .collect();
    fs::write(d.join("no_gdp.csv"), stripped).unwrap();
    let res = agtrade(&[
        "--out",
        path_str(&d.join("pred")),
        "predict",
        "--model",
        path_str(&d.join("train/model.json")),
        "--features",
        path_str(&d.join("no_gdp.csv")),
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("`gdp_o`"));
}

#[test]
fn empty_series_file_gives_empty_outputs_and_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.csv");
    fs::write(&input, "").unwrap();
    let out = dir.path().join("out");
    let res = agtrade(&["--out", path_str(&out), "validate", "--series", path_str(&input)]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("no series rows"));
    let (header, rows) = read_rows(&out.join("flags.csv"));
    assert_eq!(header, ["series", "statistical_type", "unit", "value", "color"]);
    assert!(rows.is_empty());
    let (header, rows) = read_rows(&out.join("outliers.csv"));
    assert_eq!(header, ["description", "value", "timestamp"]);
    assert!(rows.is_empty());
}

#[test]
fn short_series_get_a_diagnostic_row() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("series.csv");
    fs::write(
        &input,
        "series_id,description,statistical_type,unit,date,value\n\
         a,A,Annual,t,1/1/2019,1\na,A,Annual,t,1/1/2020,1\n\
         b,B,Annual,t,1/1/2020,3\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let res = agtrade(&["--out", path_str(&out), "validate", "--series", path_str(&input)]);
    assert!(res.status.success());
    let (_, flags) = read_rows(&out.join("flags.csv"));
    assert_eq!(flags, [["A", "Annual", "t", "1", "Blue"]]);
    let (_, diags) = read_rows(&out.join("diagnostics.csv"));
    let ids: Vec<&str> = diags.iter().map(|d| d[1].as_str()).collect();
    assert_eq!(ids, ["a", "b", "b"]);
    assert!(diags.iter().all(|d| d[0] == "warning"));
}

#[test]
fn malformed_series_rows_fail_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("series.csv");
    fs::write(&input, "series_id,description,statistical_type,unit,date,value\na,A,Annual,t,13/45/2019,1\n").unwrap();
    let out = dir.path().join("out");
    let res = agtrade(&["--out", path_str(&out), "validate", "--series", path_str(&input)]);
    assert!(!res.status.success());
    let (_, diags) = read_rows(&out.join("diagnostics.csv"));
    assert_eq!(diags[0][0], "error");
}

#[test]
fn paired_mode_writes_flagged_timestamps() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("series.csv");
    let mut text = String::from("series_id,description,statistical_type,unit,date,value\n");
    for (id, spike) in [("x", 90.0), ("y", 70.0)] {
        for m in 1..=12 {
            let v = if m == 7 { spike } else { 10.0 + (m % 3) as f64 };
            text.push_str(&format!("{id},{id},Monthly,t,{m}/1/2020,{v}\n"));
        }
    }
    fs::write(&input, text).unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[mad]\nmode = \"geometric\"\n").unwrap();
    let out = dir.path().join("out");
    let res = agtrade(&[
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&out),
        "validate",
        "--series",
        path_str(&input),
        "--pair",
        "x,y",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let (header, rows) = read_rows(&out.join("paired.csv"));
    assert_eq!(header, ["timestamp", "x", "y"]);
    assert_eq!(rows, [["7/1/2020", "90", "70"]]);
}

#[test]
fn query_filters_a_saved_rule_table() {
    let dir = tempfile::tempdir().unwrap();
    let mined = dir.path().join("mined");
    let res = agtrade(&[
        "--out",
        path_str(&mined),
        "mine",
        "--trade",
        path_str(&fixture("rules_trade.csv")),
        "--min-antecedent",
        "2",
    ]);
    assert!(res.status.success());
    let out = dir.path().join("q");
    let res = agtrade(&[
        "--out",
        path_str(&out),
        "query",
        "--rules",
        path_str(&mined.join("rules.csv")),
        "--antecedent",
        "11,21",
        "--consequent",
        "19",
        "--min-lift",
        "1.5",
        "--top",
        "5",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let (_, rows) = read_rows(&out.join("query.csv"));
    assert_eq!(rows.len(), 5);
    for r in &rows {
        assert!(r[0].contains("11.0") && r[0].contains("21.0"));
        assert_eq!(r[1], "{19.0}");
        assert!(r[6].parse::<f64>().unwrap() >= 1.5);
    }
}
