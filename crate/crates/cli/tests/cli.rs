use std::path::Path;
use std::process::{Command, Output};

fn detangle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_detangle"))
        .args(args)
        .output()
        .expect("spawn detangle")
}

fn ok(args: &[&str]) -> String {
    let out = detangle(args);
    assert!(
        out.status.success(),
        "detangle {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_writes_data_schema_and_generator() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    ok(&["synth", "--kind", "table1_a", "--exact", "--out", s(&out)]);
    for f in ["data.csv", "schema.json", "generator.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let generator = json(&out.join("generator.json"));
    assert_eq!(generator["kind"], "table1_a");
    let rows = std::fs::read_to_string(out.join("data.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 8);
}

#[test]
fn colour_shape_a_metrics_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("a");
    let report = dir.path().join("m.json");
    ok(&["synth", "--kind", "table1_a", "--exact", "--out", s(&data)]);
    let table = ok(&["metrics", "--data", s(&data), "--out", s(&report)]);
    assert!(table.contains("SNC"));
    let v = json(&report);
    let snc: Vec<f64> = v["per_factor"]["snc"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    let mean = snc.iter().sum::<f64>() / snc.len() as f64;
    assert!((mean - 0.25).abs() < 1e-9, "SNC mean {mean}");
}

#[test]
fn greedy_and_injective_alignments_differ_on_b() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("b");
    ok(&["synth", "--kind", "table1_b", "--exact", "--out", s(&data)]);
    let greedy = ok(&["align", "--data", s(&data), "--align", "greedy", "--out", s(&dir.path().join("g.svg"))]);
    let injective = ok(&["align", "--data", s(&data), "--out", s(&dir.path().join("i.svg"))]);
    assert_ne!(greedy, injective);
    let svg = std::fs::read_to_string(dir.path().join("i.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
}

#[test]
fn cg_correlate_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let mut reports = Vec::new();
    let mut cgs = Vec::new();
    for (i, angle) in ["0.1", "0.2", "0.3"].iter().enumerate() {
        let data = p(&format!("r{i}"));
        ok(&[
            "synth", "--kind", "rotated", "--angle", angle, "--samples-per-cell", "15", "--seed", "1", "--out",
            s(&data),
        ]);
        let m = p(&format!("m{i}.json"));
        let c = p(&format!("c{i}.json"));
        ok(&["metrics", "--data", s(&data), "--no-linear", "--out", s(&m)]);
        ok(&["cg", "--data", s(&data), "--pairs", "shape:1,size:2", "--out", s(&c)]);
        reports.push(m.to_str().unwrap().to_owned());
        cgs.push(c.to_str().unwrap().to_owned());
    }
    let corr = p("corr.json");
    ok(&[
        "correlate", "--reports", &reports.join(","), "--cg", &cgs.join(","), "--columns",
        "snc,mig", "--out", s(&corr),
    ]);
    let v = json(&corr);
    assert_eq!(v["columns"].as_array().unwrap().len(), 2);
    let md = ok(&["report", "--metrics", &reports[0], "--cg", &cgs[0], "--correlation", s(&corr)]);
    assert!(md.starts_with('#'));
}

#[test]
fn cg_rejects_unknown_factor() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["synth", "--kind", "ideal", "--samples-per-cell", "2", "--out", s(&data)]);
    let out = detangle(&["cg", "--data", s(&data), "--pairs", "colour:0,size:1", "--out", s(&dir.path().join("c.json"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn no_arguments_is_usage_error() {
    assert_eq!(detangle(&[]).status.code(), Some(1));
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(detangle(&["metrics", "--bogus"]).status.code(), Some(1));
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(detangle(&["--help"]).status.code(), Some(0));
    assert_eq!(detangle(&["--version"]).status.code(), Some(0));
}

#[test]
fn missing_input_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = detangle(&["metrics", "--data", s(&dir.path().join("absent")), "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = detangle(&["report", "--metrics", s(&dir.path().join("absent.json"))]);
    assert_eq!(out.status.code(), Some(2));
}
