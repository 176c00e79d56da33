use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn zsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zsl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = zsl(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small dataset that trains in well under a second.
fn prepared(dir: &Path) -> String {
    let d = path_str(dir);
    ok(&[
        "gen-synth",
        "--out",
        d,
        "--c-s",
        "8",
        "--c-u",
        "3",
        "--n-per-class",
        "10",
    ]);
    let cfg = dir.join("run.json");
    let cfg = path_str(&cfg).to_string();
    ok(&["train", "--config", &cfg, "--epochs", "10"]);
    ok(&["transfer", "--config", &cfg]);
    cfg
}

fn mca_of(csv: &str) -> f64 {
    let line = csv
        .lines()
        .find(|l| l.starts_with("mca,"))
        .expect("mca row");
    line.rsplit(',').next().unwrap().parse().unwrap()
}

#[test]
fn smoke_flow_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = prepared(tmp.path());
    let out = tmp.path().join("out");

    ok(&["validate", "--config", &cfg]);
    for space in ["ua", "la", "ua+la"] {
        let stdout = ok(&["eval", "--config", &cfg, "--space", space]);
        assert!(stdout.contains("MCA"));
        let mca = mca_of(&fs::read_to_string(out.join(format!("mca_{space}.csv"))).unwrap());
        assert!((0.0..=100.0).contains(&mca));
    }
    ok(&["predict", "--config", &cfg, "--space", "ua"]);
    let preds = fs::read_to_string(out.join("predictions_ua.csv")).unwrap();
    assert_eq!(preds.lines().count(), 1 + 3 * 10);
    assert!(preds.starts_with("index,label,predicted,score"));
}

#[test]
fn gzsl_values_are_bounded() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = prepared(tmp.path());
    ok(&["gzsl-eval", "--config", &cfg, "--space", "ua+la"]);
    let text = fs::read_to_string(tmp.path().join("out/gzsl_ua+la.csv")).unwrap();
    let vals: Vec<f64> = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    let (a_u, a_s, h) = (vals[0], vals[1], vals[2]);
    for v in [a_u, a_s, h] {
        assert!((0.0..=100.0).contains(&v), "{text}");
    }
    assert!(h <= a_u.max(a_s) + 1e-9 && h >= a_u.min(a_s) - 1e-9);
}

#[test]
fn training_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = prepared(tmp.path());
    let out = tmp.path().join("out");
    let first = fs::read(out.join("w_att_s0.zslm")).unwrap();
    let report = fs::read(out.join("train_report.csv")).unwrap();
    ok(&["train", "--config", &cfg, "--epochs", "10"]);
    assert_eq!(fs::read(out.join("w_att_s0.zslm")).unwrap(), first);
    assert_eq!(fs::read(out.join("train_report.csv")).unwrap(), report);

    ok(&["train", "--config", &cfg, "--epochs", "10", "--seed", "7"]);
    assert_ne!(fs::read(out.join("w_att_s0.zslm")).unwrap(), first);
}

#[test]
fn output_dir_override() {
    let tmp = tempfile::tempdir().unwrap();
    let d = path_str(tmp.path());
    ok(&[
        "gen-synth",
        "--out",
        d,
        "--c-s",
        "4",
        "--c-u",
        "2",
        "--n-per-class",
        "6",
        "--scales",
        "2",
    ]);
    let cfg = tmp.path().join("run.json");
    let alt = tmp.path().join("alt");
    let args = ["--config", path_str(&cfg), "--output-dir", path_str(&alt)];
    ok(&[&["train"][..], &args, &["--epochs", "3"]].concat());
    ok(&[&["transfer"][..], &args, &["--lambda", "0.5"]].concat());
    ok(&[&["eval"][..], &args].concat());
    assert!(alt.join("w_com.zslm").is_file());
    assert!(alt.join("mca_ua+la.csv").is_file());
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn exit_codes() {
    assert_eq!(zsl(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(
        zsl(&["eval", "--config", "/nonexistent/run.json"])
            .status
            .code(),
        Some(2)
    );

    let tmp = tempfile::tempdir().unwrap();
    let d = path_str(tmp.path());
    ok(&[
        "gen-synth",
        "--out",
        d,
        "--c-s",
        "4",
        "--c-u",
        "2",
        "--n-per-class",
        "4",
    ]);
    let cfg = tmp.path().join("run.json");
    let cfg = path_str(&cfg);

    // bad flag value and invalid config value are usage/config errors
    assert_eq!(
        zsl(&["eval", "--config", cfg, "--space", "xyz"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        zsl(&["transfer", "--config", cfg, "--lambda", "-1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        zsl(&["gen-synth", "--out", d, "--c-s", "1"]).status.code(),
        Some(2)
    );

    // missing model is a runtime failure with a one-line diagnostic
    let out = zsl(&["eval", "--config", cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim().lines().count(), 1, "{err}");
    assert!(err.contains("run train first"));
}

#[test]
fn validate_reports_violations() {
    let tmp = tempfile::tempdir().unwrap();
    let d = path_str(tmp.path());
    ok(&[
        "gen-synth",
        "--out",
        d,
        "--c-s",
        "4",
        "--c-u",
        "2",
        "--n-per-class",
        "4",
    ]);
    // seen and unseen overlap on class 0, and class 5 loses its place
    fs::write(
        tmp.path().join("split.json"),
        r#"{"seen_classes":[0,1,2,3],"unseen_classes":[0,4,5]}"#,
    )
    .unwrap();
    let out = zsl(&[
        "validate",
        "--config",
        path_str(&tmp.path().join("run.json")),
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(out.status.code(), Some(1), "{stdout}");
    assert!(
        stdout.contains("class 0 is listed as both seen and unseen"),
        "{stdout}"
    );
}

#[test]
fn zoom_demo_writes_grids() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("zoom");
    ok(&["zoom-demo", "--out", path_str(&out), "--size", "12"]);
    let mask = fs::read_to_string(out.join("mask.csv")).unwrap();
    let rows: Vec<&str> = mask.lines().filter(|l| !l.is_empty()).collect();
    assert_eq!(rows.len(), 12);
    for v in rows.iter().flat_map(|r| r.split(',')) {
        let v: f64 = v.trim().parse().unwrap();
        assert!(v > 0.0 && v < 1.0);
    }
    let zoomed = fs::read_to_string(out.join("zoomed.csv")).unwrap();
    assert_eq!(zoomed.lines().filter(|l| !l.is_empty()).count(), 12);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("zoom.json")).unwrap()).unwrap();
    assert!(json["window"]["side"].as_u64().unwrap() == 6);

    // explicit zoom on a CSV image
    let img = tmp.path().join("img.csv");
    fs::write(&img, "0,0,0,0\n0,1,2,0\n0,3,4,0\n0,0,0,0\n").unwrap();
    let out2 = tmp.path().join("zoom2");
    ok(&[
        "zoom-demo",
        "--out",
        path_str(&out2),
        "--image",
        path_str(&img),
        "--zx",
        "0.5",
        "--zy",
        "0.5",
        "--zs",
        "0.5",
        "--out-size",
        "8",
    ]);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out2.join("zoom.json")).unwrap()).unwrap();
    assert!(json["window"].is_null());
    assert_eq!(
        fs::read_to_string(out2.join("zoomed.csv"))
            .unwrap()
            .lines()
            .count(),
        8
    );
}

#[test]
fn report_ranks_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = prepared(tmp.path());
    ok(&["eval", "--config", &cfg]);
    let stdout = ok(&["report", "--config", &cfg, "--element", "1", "--top-k", "2"]);
    assert!(stdout.contains("ua+la: MCA"));
    let act = fs::read_to_string(tmp.path().join("out/activation_ua_s0_e1.csv")).unwrap();
    assert_eq!(act.lines().count(), 1 + 4);
    assert_eq!(
        zsl(&["report", "--config", &cfg, "--element", "999"])
            .status
            .code(),
        Some(1)
    );
}
