use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_outage-sim"))
}

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn exec(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn run_writes_outputs_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let cfg = configs().join("baseline.toml");
    let o = exec(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "2",
        "--out",
        out.to_str().unwrap(),
        "--events",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 301);
    assert!(out.join("summary.json").exists());
    assert!(out.join("events.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 2);

    let again = dir.path().join("b");
    let o = exec(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "2",
        "--out",
        again.to_str().unwrap(),
        "--parallel",
        "4",
        "--events",
    ]);
    assert_eq!(code(&o), 0);
    for f in ["metrics.csv", "events.csv", "merchants.csv", "summary.json"] {
        assert_eq!(
            fs::read(out.join(f)).unwrap(),
            fs::read(again.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn batch_rows_and_delayed_peak_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = exec(&["batch", "--seeds", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(out.join("batch.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        let peak: usize = row[4].parse().unwrap();
        let tmin: usize = row[5].parse().unwrap();
        assert_eq!(&row[7], (peak > tmin).to_string());
    }

    let list = dir.path().join("list");
    let o = exec(&["batch", "--seeds", "9,4", "--out", list.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(list.join("batch.csv")).unwrap();
    let seeds: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(seeds, ["9", "4"]);

    let o = exec(&[
        "batch",
        "--seeds",
        "1",
        "--out",
        dir.path().join("one").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stats: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("one/batch_summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(stats["runs"], 1);
    let mut r = csv::Reader::from_path(dir.path().join("one/batch.csv")).unwrap();
    let row = r.records().next().unwrap().unwrap();
    let peak: f64 = row[3].parse().unwrap();
    // serde_json's default float parser may be one ulp off
    for key in ["min", "median", "max"] {
        let v = stats["peak_outflow"][key].as_f64().unwrap();
        assert!(
            approx::relative_eq!(v, peak, max_relative = 1e-14),
            "{key}: {v} vs {peak}"
        );
    }
}

#[test]
fn paired_self_and_policy_variants() {
    let dir = tempfile::tempdir().unwrap();
    let same = dir.path().join("same");
    let o = exec(&["paired", "--seeds", "2", "--out", same.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(same.join("paired.csv")).unwrap();
    for line in text.lines().skip(1) {
        assert!(line.split(',').skip(1).all(|v| v == "0"), "{line}");
    }

    let var = dir.path().join("var");
    let o = exec(&[
        "paired",
        "--seeds",
        "2",
        "--out",
        var.to_str().unwrap(),
        "--variant",
        "substitution.enabled=true",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read_to_string(var.join("paired.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );

    let o = exec(&[
        "paired",
        "--seeds",
        "2",
        "--out",
        var.to_str().unwrap(),
        "--variant",
        "population.customers=10",
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("population.customers"));
}

#[test]
fn validation_errors_exit_one_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[behavior]\nw_merchant = 0.6\nw_social = 0.5\n").unwrap();
    let o = exec(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("line 3") && err.contains("behavior.w_social"),
        "{err}"
    );

    fs::write(&cfg, "[network]\nrewire = 0.2\n").unwrap();
    let o = exec(&["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    assert_eq!(code(&exec(&["run", "--bogus"])), 1);
}

#[test]
fn io_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(
        code(&exec(&["run", "--config", missing.to_str().unwrap()])),
        3
    );
    let file = dir.path().join("file");
    fs::write(&file, "x").unwrap();
    let o = exec(&["run", "--out", file.join("sub").to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn check_reports_every_property() {
    for name in ["baseline.toml", "no_outage.toml"] {
        let cfg = configs().join(name);
        let o = exec(&["check", "--config", cfg.to_str().unwrap()]);
        assert_eq!(
            code(&o),
            0,
            "{name}: {}",
            String::from_utf8_lossy(&o.stdout)
        );
        let out = String::from_utf8_lossy(&o.stdout);
        assert_eq!(
            out.lines().filter(|l| l.contains(" PASS ")).count(),
            9,
            "{out}"
        );
    }
}
