use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cat-anova"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

/// Parses a TSV with a header into rows of column-name → value.
fn tsv(text: &str) -> Vec<HashMap<String, String>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    lines
        .map(|l| {
            header
                .iter()
                .zip(l.split('\t'))
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect()
        })
        .collect()
}

fn decompose(dir: &TempDir, input: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.path().join("out");
    let mut args = vec!["decompose", "-i", path_str(input), "-t", "f", "-o", path_str(&out)];
    args.extend_from_slice(extra);
    let result = run(&args);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    out
}

fn sign(v: f64) -> i32 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// The five-feature analytical case, every distinct row repeated three times.
fn analytical_csv() -> String {
    let mut text = String::from("X1,X2,X3,X4,X5,f\n");
    for _ in 0..3 {
        for x1 in 0..3 {
            for x2 in 0..3 {
                for x4 in 0..3 {
                    let f = sign(x1 as f64 - x2 as f64 + 0.5 * x2 as f64);
                    writeln!(text, "{x1},{x2},{x2},{x4},1,{f}").unwrap();
                }
            }
        }
    }
    text
}

#[test]
fn analytical_file_reproduces_the_norm_table() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "analytic.csv", &analytical_csv());
    let out = decompose(&dir, &input, &[]);
    let norms = tsv(&fs::read_to_string(out.join("norms.tsv")).unwrap());
    let lookup: HashMap<&str, f64> = norms
        .iter()
        .map(|r| (r["subset"].as_str(), r["norm"].parse().unwrap()))
        .collect();
    for (subset, want) in [
        ("(intercept)", 1.0 / 9.0),
        ("X1", 14.0 / 27.0),
        ("X2", 2.0 / 27.0),
        ("X1,X2", 2.0 / 27.0),
    ] {
        assert!((lookup[subset] - want).abs() < 1e-10, "{subset}: {}", lookup[subset]);
    }
    for row in &norms {
        let subset = &row["subset"];
        assert!(!subset.contains("X3") && !subset.contains("X5"), "{subset}");
        if subset.contains("X4") {
            assert!(row["norm"].parse::<f64>().unwrap() < 1e-20);
        }
    }
    // sorted by norm, largest first
    let values: Vec<f64> = norms.iter().map(|r| r["norm"].parse().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(norms[0]["subset"], "X1");
}

#[test]
fn outputs_are_byte_stable() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "analytic.csv", &analytical_csv());
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    for out in [&first, &second] {
        let status = run(&["decompose", "-i", path_str(&input), "-t", "f", "-o", path_str(out)]);
        assert!(status.status.success());
    }
    for name in ["decomposition.json", "diagnostics.json", "norms.tsv"] {
        assert_eq!(
            fs::read(first.join(name)).unwrap(),
            fs::read(second.join(name)).unwrap(),
            "{name} differs"
        );
    }
    assert!(first.join("timings.json").exists());
}

/// Mushroom-like table: string labels, a dominant "odor" feature and an
/// additive target.
fn mushrooms_csv(rows: usize) -> String {
    let odor = ["almond", "anise", "creosote", "fishy", "foul", "musty", "none", "pungent", "spicy"];
    let odor_effect = [0.9, 0.85, -0.9, -0.8, -0.95, -0.7, 0.4, -0.85, -0.75];
    let cap = ["bell", "conical", "convex", "flat", "knobbed", "sunken"];
    let gill = ["broad", "narrow"];
    let ring = ["evanescent", "flaring", "large", "none", "pendant"];
    let habitat = ["grasses", "leaves", "meadows", "paths", "urban", "waste", "woods"];
    let mut state: u64 = 0x9e3779b97f4a7c15;
    let mut next = |n: usize| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state % n as u64) as usize
    };
    let mut text = String::from("cap_shape,odor,gill_size,ring_type,habitat,f\n");
    for _ in 0..rows {
        let (c, o, g, r, h) = (next(cap.len()), next(odor.len()), next(gill.len()), next(ring.len()), next(habitat.len()));
        let f = 0.5 + 0.45 * odor_effect[o] + 0.02 * c as f64 - 0.03 * g as f64 + 0.01 * r as f64 + 0.005 * h as f64;
        writeln!(text, "{},{},{},{},{},{f}", cap[c], odor[o], gill[g], ring[r], habitat[h]).unwrap();
    }
    text
}

#[test]
fn mushroom_style_main_effects_rank_odor_first() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "mushrooms.csv", &mushrooms_csv(3000));
    let out = decompose(&dir, &input, &["--max-order", "1", "--format", "tsv"]);
    let diagnostics: HashMap<String, String> = tsv(&fs::read_to_string(out.join("diagnostics.tsv")).unwrap())
        .into_iter()
        .map(|r| (r["metric"].clone(), r["value"].clone()))
        .collect();
    // 1 + (6-1) + (9-1) + (2-1) + (5-1) + (7-1)
    assert_eq!(diagnostics["achieved_rank"], "25");
    let r2: f64 = diagnostics["r_squared"].parse().unwrap();
    assert!(r2 > 1.0 - 1e-10, "{r2}");
    let mse: f64 = diagnostics["mse"].parse().unwrap();
    assert!(mse < 1e-20, "{mse}");

    let model = out.join("decomposition.json");
    let result = run(&["importance", "-m", path_str(&model)]);
    assert!(result.status.success());
    let ranked = tsv(&String::from_utf8(result.stdout).unwrap());
    assert_eq!(ranked[0]["feature"], "odor");
    assert_eq!(ranked.len(), 5);
}

#[test]
fn empty_target_column_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "empty.csv", "a,b,f\nx,y,\nx,z,\n");
    let result = run(&["decompose", "-i", path_str(&input), "-t", "f", "-o", path_str(dir.path())]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("line 2") && stderr.contains("empty target"), "{stderr}");
}

#[test]
fn non_numeric_target_reports_its_line() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "bad.csv", "a,f\nx,1\ny,oops\n");
    let result = run(&["decompose", "-i", path_str(&input), "-t", "f", "-o", path_str(dir.path())]);
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stderr).contains("line 3"));
}

#[test]
fn ragged_row_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "ragged.csv", "a,b,f\nx,y,1\nx,2\n");
    let result = run(&["decompose", "-i", path_str(&input), "-t", "f", "-o", path_str(dir.path())]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn explaining_the_training_file_reproduces_the_reported_mse() {
    let dir = TempDir::new().unwrap();
    // duplicated rows with conflicting targets leave an irreducible error,
    // and the pair budget keeps the fit inexact
    let mut text = String::from("a,b,c,w,f\n");
    let mut weights = Vec::new();
    for k in 0..60u32 {
        let (a, b, c) = (k % 3, (k / 3) % 4, (k * 7) % 2);
        let w = 1.0 + (k % 5) as f64;
        let f = (a as f64) * 0.7 - (b as f64) * 0.2 + if (a + b + c) % 2 == 0 { 0.3 } else { -0.1 } + (k % 7) as f64 * 0.01;
        writeln!(text, "{a},{b},{c},{w},{f}").unwrap();
        weights.push(w);
    }
    let input = write(&dir, "train.csv", &text);
    let out = decompose(&dir, &input, &["--weight", "w", "--max-order", "2", "--rank-budget", "10"]);
    let diagnostics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    let reported = diagnostics["mse"].as_f64().unwrap();
    assert!(reported > 1e-6);

    let result = run(&["explain", "-m", path_str(&out.join("decomposition.json")), "-i", path_str(&input)]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let rows = tsv(&String::from_utf8(result.stdout).unwrap());
    assert_eq!(rows.len(), 60);
    let total: f64 = weights.iter().sum();
    let mut mse = 0.0;
    for (row, w) in rows.iter().zip(&weights) {
        assert_eq!(row["status"], "ok");
        let residual: f64 = row["residual"].parse().unwrap();
        mse += w / total * residual * residual;
        let gap: f64 = row["efficiency_gap"].parse().unwrap();
        assert!(gap.abs() < 1e-10);
    }
    assert!((mse - reported).abs() < 1e-12, "{mse} vs {reported}");
}

#[test]
fn bad_query_rows_fail_individually() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "train.csv", "a,b,f\nx,p,1\nx,q,2\ny,p,3\n");
    let out = decompose(&dir, &input, &[]);
    let queries = write(&dir, "queries.csv", "b,a\np,x\nr,x\nq,y\nq,x\n");
    let result = run(&["explain", "-m", path_str(&out.join("decomposition.json")), "-i", path_str(&queries)]);
    assert!(result.status.success());
    let rows = tsv(&String::from_utf8(result.stdout).unwrap());
    let status: Vec<&str> = rows.iter().map(|r| r["status"].as_str()).collect();
    assert_eq!(status, ["ok", "error", "error", "ok"]);
    assert!(rows[1]["error"].contains("unknown label 'r'"));
    assert!(rows[2]["error"].contains("never observed"));
    let fitted: f64 = rows[3]["fitted"].parse().unwrap();
    assert!((fitted - 2.0).abs() < 1e-12);
}

#[test]
fn constant_target_has_zero_importances() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "const.csv", "a,b,f\nx,p,4\nx,q,4\ny,p,4\ny,q,4\nz,q,4\n");
    let out = decompose(&dir, &input, &[]);
    let result = run(&["importance", "-m", path_str(&out.join("decomposition.json")), "--format", "json"]);
    assert!(result.status.success());
    let ranked: serde_json::Value = serde_json::from_slice(&result.stdout).unwrap();
    for entry in ranked.as_array().unwrap() {
        assert!(entry["importance"].as_f64().unwrap().abs() < 1e-12);
    }
}

#[test]
fn tampered_support_is_rejected() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "train.csv", "a,b,f\nx,p,1\nx,q,2\ny,p,3\n");
    let out = decompose(&dir, &input, &[]);
    let path = out.join("decomposition.json");
    let mut model: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    model["support"]["weights"][0] = serde_json::json!(0.5);
    fs::write(&path, model.to_string()).unwrap();
    let result = run(&["importance", "-m", path_str(&path)]);
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stderr).contains("digest"));
}

#[test]
fn neighborhood_ordering_reads_adjacency_by_name() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("a,b,c,f\n");
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                writeln!(text, "{a},{b},{c},{}", a ^ b ^ c).unwrap();
            }
        }
    }
    let input = write(&dir, "parity.csv", &text);
    let adjacency = write(&dir, "adj.txt", "a: b\nb\nc\n");
    let out = decompose(
        &dir,
        &input,
        &["--ordering", "neighborhood", "--adjacency", path_str(&adjacency)],
    );
    let norms = fs::read_to_string(out.join("norms.tsv")).unwrap();
    assert!(!norms.contains("a,c") && !norms.contains("b,c"));
    let missing = run(&["decompose", "-i", path_str(&input), "-t", "f", "--ordering", "neighborhood"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn validate_passes_and_corruption_fails() {
    let ok = run(&["validate", "--instances", "2", "--seed", "7"]);
    assert!(ok.status.success());
    let again = run(&["validate", "--instances", "2", "--seed", "7"]);
    assert_eq!(ok.stdout, again.stdout);
    let report = String::from_utf8(ok.stdout).unwrap();
    assert!(report.contains("mobius-agreement") && report.contains("walsh-agreement"));

    let bad = run(&["validate", "--instances", "2", "--corrupt"]);
    assert_eq!(bad.status.code(), Some(4));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&["decompose"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let threads = bin()
        .args(["validate", "--instances", "1"])
        .env("CAT_ANOVA_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(1));
    let two = bin()
        .args(["validate", "--instances", "1"])
        .env("CAT_ANOVA_THREADS", "2")
        .output()
        .unwrap();
    assert!(two.status.success());
}
