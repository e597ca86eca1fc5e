use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ctxret(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctxret"))
        .args(args)
        .env("RUST_BACKTRACE", "0")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ctxret(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    ctxret(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 40-image synthetic dataset plus a PCA model fitted on it.
struct Fixture {
    dir: TempDir,
    manifest: PathBuf,
    pca: PathBuf,
}

const ENC: [&str; 4] = ["--scales", "96,128", "--seed", "2"];

fn fixture() -> Fixture {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    ok(&["gen-synthetic", "--out", s(&data), "--n-images", "40", "--seed", "5"]);
    let manifest = data.join("manifest.json");
    let pca = dir.path().join("pca.bin");
    let mut args = vec!["fit-pca", "--manifest", s(&manifest), "--out", s(&pca)];
    args.extend(ENC);
    ok(&args);
    Fixture { dir, manifest, pca }
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        out.push((entry.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&entry).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files.extend(walk(&p));
        } else {
            files.push(p);
        }
    }
    files
}

#[test]
fn gen_synthetic_defaults() {
    let dir = TempDir::new().unwrap();
    let stdout = ok(&["gen-synthetic", "--out", s(dir.path())]);
    assert!(stdout.starts_with("200 images, 10 queries"), "{stdout}");
    let m = read_json(&dir.path().join("manifest.json"));
    assert_eq!(m["images"].as_array().unwrap().len(), 200);
    assert_eq!(m["queries"].as_array().unwrap().len(), 10);
    assert_eq!(walk(&dir.path().join("images")).len(), 200);
}

#[test]
fn gen_synthetic_is_deterministic() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    ok(&["gen-synthetic", "--out", s(a.path()), "--n-images", "20", "--seed", "9"]);
    ok(&["gen-synthetic", "--out", s(b.path()), "--n-images", "20", "--seed", "9"]);
    assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
    let c = TempDir::new().unwrap();
    ok(&["gen-synthetic", "--out", s(c.path()), "--n-images", "20", "--seed", "10"]);
    assert_ne!(dir_bytes(a.path()), dir_bytes(c.path()));
}

#[test]
fn gen_synthetic_rejects_tiny_dataset() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&["gen-synthetic", "--out", s(dir.path()), "--n-images", "5"]), 1);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["eval", "--models", "xx"]), 1);
    assert_eq!(code(&["project-roi", "--roi", "1,2,3", "--image-size", "10x10"]), 1);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn fit_pca_dimensions_and_determinism() {
    let f = fixture();
    let bytes = std::fs::read(&f.pca).unwrap();
    // magic, version, K = 32, K' = 32
    assert_eq!(&bytes[..4], b"PCAW");
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 32);
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 32);

    let again = f.dir.path().join("again.bin");
    let mut args = vec!["fit-pca", "--manifest", s(&f.manifest), "--out", s(&again), "--out-dim", "32"];
    args.extend(ENC);
    ok(&args);
    assert_eq!(std::fs::read(&again).unwrap(), bytes);

    let mut args = vec!["fit-pca", "--manifest", s(&f.manifest), "--out", s(&again), "--out-dim", "33"];
    args.extend(ENC);
    assert_eq!(code(&args), 1);
}

#[test]
fn index_counts_and_determinism() {
    let f = fixture();
    let idx = |name: &str, extra: &[&str]| {
        let out = f.dir.path().join(name);
        let mut args = vec!["index", "--manifest", s(&f.manifest), "--pca", s(&f.pca), "--out", s(&out)];
        args.extend(ENC);
        args.extend(extra);
        ok(&args);
        std::fs::read(out).unwrap()
    };
    let a = idx("a.didx", &[]);
    let b = idx("b.didx", &[]);
    assert_eq!(a, b);
    assert_eq!(&a[..4], b"DIDX");
    assert_eq!(u32::from_le_bytes(a[8..12].try_into().unwrap()), 40);
}

#[test]
fn database_attention_changes_index_for_salient_image() {
    let dir = TempDir::new().unwrap();
    // one image with a single bright blob on a dark ground
    let img = image::RgbImage::from_fn(64, 48, |x, y| {
        let d = (x as i32 - 20).pow(2) + (y as i32 - 24).pow(2);
        if d < 64 {
            image::Rgb([240, 200, 40])
        } else {
            image::Rgb([20, 24, 28])
        }
    });
    img.save(dir.path().join("blob.png")).unwrap();
    let manifest = dir.path().join("manifest.json");
    std::fs::write(
        &manifest,
        r#"{"images": [{"id": "blob", "path": "blob.png", "w": 64, "h": 48}], "queries": []}"#,
    )
    .unwrap();
    let pca = dir.path().join("pca.bin");
    // one image gives few regions per scale, so harvest several scales
    ok(&["fit-pca", "--manifest", s(&manifest), "--out", s(&pca), "--scales", "48,64,80,96", "--out-dim", "8"]);
    let build = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["index", "--manifest", s(&manifest), "--pca", s(&pca), "--out", s(&out), "--scales", "64"];
        args.extend(extra);
        ok(&args);
        std::fs::read(out).unwrap()
    };
    let plain = build("plain.didx", &[]);
    let attended = build("sa.didx", &["--db-sa"]);
    assert_eq!(plain.len(), attended.len());
    assert_ne!(plain, attended);
    // with tau = 1 nothing is salient enough and the files match
    assert_eq!(build("tau1.didx", &["--db-sa", "--tau", "1.0"]), plain);
}

/// Checks `value` against the subset of JSON Schema used by the report
/// schema: type, enum, minimum, maximum, required, properties,
/// additionalProperties and items.
fn conforms(value: &Value, schema: &Value) -> Result<(), String> {
    if let Some(t) = schema.get("type").and_then(Value::as_str) {
        let good = match t {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "number" => value.is_number(),
            "integer" => value.is_u64() || value.is_i64(),
            other => return Err(format!("unsupported type {other}")),
        };
        if !good {
            return Err(format!("{value} is not {t}"));
        }
    }
    if let Some(options) = schema.get("enum").and_then(Value::as_array) {
        if !options.contains(value) {
            return Err(format!("{value} not in {options:?}"));
        }
    }
    if let Some(x) = value.as_f64() {
        if schema.get("minimum").and_then(Value::as_f64).is_some_and(|m| x < m)
            || schema.get("maximum").and_then(Value::as_f64).is_some_and(|m| x > m)
        {
            return Err(format!("{x} out of range"));
        }
    }
    if let Some(obj) = value.as_object() {
        for key in schema.get("required").and_then(Value::as_array).into_iter().flatten() {
            if !obj.contains_key(key.as_str().unwrap()) {
                return Err(format!("missing {key}"));
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        for (k, v) in obj {
            match (props.and_then(|p| p.get(k)), schema.get("additionalProperties")) {
                (Some(sub), _) => conforms(v, sub)?,
                (None, Some(Value::Bool(false))) => return Err(format!("unexpected key {k}")),
                (None, Some(sub)) if sub.is_object() => conforms(v, sub)?,
                _ => {}
            }
        }
    }
    if let (Some(items), Some(sub)) = (value.as_array(), schema.get("items")) {
        for v in items {
            conforms(v, sub)?;
        }
    }
    Ok(())
}

fn report_schema() -> Value {
    read_json(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/report-schema.json"))
}

#[test]
fn eval_single_cell() {
    let f = fixture();
    let mut args = vec!["eval", "--manifest", s(&f.manifest), "--pca", s(&f.pca), "--models", "rq", "--encoders", "rmac"];
    args.extend(ENC);
    let stdout = ok(&args);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 3, "{stdout}");
    assert!(lines[1].contains("RMAC") && !lines[1].contains("WRMAC"));
    assert!(lines[2].starts_with("RQ"));
}

#[test]
fn eval_full_grid_with_database_attention() {
    let f = fixture();
    let report = f.dir.path().join("out/report.json");
    let mut args = vec!["eval", "--manifest", s(&f.manifest), "--pca", s(&f.pca), "--db-sa", "--report", s(&report)];
    args.extend(ENC);
    let stdout = ok(&args);
    let rows: Vec<&str> = stdout.lines().skip(2).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(rows, ["RQ", "AQ", "FQ", "SA", "SA+DB"]);

    let json = read_json(&report);
    conforms(&json, &report_schema()).unwrap();
    let cells = json["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 10);
    for c in cells {
        let aps = c["ap"].as_object().unwrap();
        assert_eq!(aps.len(), 10);
        let mean = aps.values().map(|v| v.as_f64().unwrap()).sum::<f64>() / 10.0;
        assert!((mean - c["map"].as_f64().unwrap()).abs() < 1e-12);
    }
}

#[test]
fn schema_checker_rejects_bad_reports() {
    let schema = report_schema();
    let good = serde_json::json!({"n_images": 2, "n_queries": 1,
        "cells": [{"model": "sa", "encoder": "wrmac", "map": 0.5, "ap": {"q": 0.5}}]});
    conforms(&good, &schema).unwrap();
    let mut bad = good.clone();
    bad["cells"][0]["encoder"] = "gem".into();
    assert!(conforms(&bad, &schema).is_err());
    let mut bad = good.clone();
    bad["cells"][0]["map"] = 1.5.into();
    assert!(conforms(&bad, &schema).is_err());
    let mut bad = good;
    bad["extra"] = 1.into();
    assert!(conforms(&bad, &schema).is_err());
}

#[test]
fn prebuilt_index_gives_same_scores() {
    let f = fixture();
    let idx = f.dir.path().join("w.didx");
    let mut args = vec!["index", "--manifest", s(&f.manifest), "--pca", s(&f.pca), "--out", s(&idx)];
    args.extend(ENC);
    ok(&args);
    let mut base = vec!["eval", "--manifest", s(&f.manifest), "--pca", s(&f.pca), "--encoders", "wrmac"];
    base.extend(ENC);
    let fresh = ok(&base);
    base.extend(["--index", s(&idx)]);
    assert_eq!(ok(&base), fresh);
}

#[test]
fn query_lists_k_hits() {
    let f = fixture();
    let idx = f.dir.path().join("w.didx");
    let mut args = vec!["index", "build", "--manifest", s(&f.manifest), "--pca", s(&f.pca), "--out", s(&idx)];
    args.extend(ENC);
    ok(&args);
    let m = read_json(&f.manifest);
    let q = &m["queries"][0];
    let image = f.manifest.parent().unwrap().join(format!("images/{}.png", q["image"].as_str().unwrap()));
    let roi = q["roi"].as_array().unwrap().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
    for model in ["fq", "rq", "aq", "sa"] {
        let mut args = vec![
            "query", "--index", s(&idx), "--pca", s(&f.pca), "--image", s(&image), "--roi", &roi, "--model", model, "--k", "4",
        ];
        args.extend(ENC);
        let stdout = ok(&args);
        let sims: Vec<f64> = stdout.lines().map(|l| l.split('\t').nth(2).unwrap().parse().unwrap()).collect();
        assert_eq!(sims.len(), 4);
        assert!(sims.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let f = fixture();
    let cfg = f.dir.path().join("run.json");
    let m = f.manifest.strip_prefix(f.dir.path()).unwrap();
    std::fs::write(
        &cfg,
        format!(
            r#"{{"manifest": "{}", "pca": "pca.bin", "seed": 2, "scales": [96, 128], "tap": "nope"}}"#,
            m.display()
        ),
    )
    .unwrap();
    // the file's tap does not exist on the toy network
    assert_eq!(code(&["eval", "--config", s(&cfg), "--models", "fq", "--encoders", "rmac"]), 1);
    let stdout = ok(&["eval", "--config", s(&cfg), "--models", "fq", "--encoders", "rmac", "--tap", "mid"]);
    assert!(stdout.lines().nth(2).unwrap().starts_with("FQ"));
    std::fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
    assert_eq!(code(&["eval", "--config", s(&cfg)]), 2);
}

#[test]
fn missing_inputs_exit_2() {
    let dir = TempDir::new().unwrap();
    let nope = dir.path().join("nope.json");
    assert_eq!(code(&["fit-pca", "--manifest", s(&nope), "--out", s(&dir.path().join("p.bin"))]), 2);
    assert_eq!(code(&["eval", "--manifest", s(&nope), "--pca", s(&nope)]), 2);
}

#[test]
fn project_roi_reports_grid_cells() {
    let stdout = ok(&["project-roi", "--roi", "0,0,16,16", "--image-size", "64x64", "--tap", "final"]);
    assert_eq!(stdout, "layer 8: stride 4 size 18 offset 1.5\ngrid 16x16\n0,0,16,16 -> 0,0,4,4\n");
}
