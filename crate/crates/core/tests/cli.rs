//! The `ltu-audit` binary: subcommands, report formats and exit codes.

mod common;

use std::process::{Command, Output};

use ltu_profiling::pipeline::{ReportRow, REPORT_CSV_FILE, RUN_CONFIG_FILE};
use ltu_profiling::synth::{PERSONS_FILE, RECORDS_FILE, SUMMARY_FILE};

fn ltu_audit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ltu-audit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn report_formats_agree() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("bundle");
    let config = common::write_config(
        &common::small_config(&out_dir),
        &dir.path().join("run.json"),
    );
    let config = config.to_str().unwrap();

    let audit = ltu_audit(&["--threads", "2", "audit", "--config", config]);
    assert_eq!(
        code(&audit),
        0,
        "{}",
        String::from_utf8_lossy(&audit.stderr)
    );
    assert!(out_dir.join(RUN_CONFIG_FILE).exists());

    let csv_out = ltu_audit(&["report", "--config", config, "--format", "csv"]);
    let json_out = ltu_audit(&["report", "--config", config, "--format", "json"]);
    assert_eq!(code(&csv_out), 0);
    assert_eq!(code(&json_out), 0);

    let from_csv: Vec<ReportRow> = csv::Reader::from_reader(csv_out.stdout.as_slice())
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap();
    let from_json: Vec<ReportRow> = serde_json::from_slice(&json_out.stdout).unwrap();
    assert_eq!(from_csv, from_json);
    // Observed outcome, then 4 models x 3 policies x 2 histories.
    assert_eq!(from_csv.len(), 25);
    assert_eq!(from_csv[0].model, "Observed Y");
    assert_eq!(
        csv_out.stdout,
        std::fs::read(out_dir.join(REPORT_CSV_FILE)).unwrap()
    );
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::small_config(&dir.path().join("bundle"));
    cfg.seed = None;
    let config = common::write_config(&cfg, &dir.path().join("run.json"));
    let config = config.to_str().unwrap();

    let missing = ltu_audit(&["ingest", "--config", config]);
    assert_eq!(code(&missing), 2);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("seed"));

    let ok = ltu_audit(&["ingest", "--config", config, "--seed", "4"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("persons"));
}

#[test]
fn synth_writes_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("synth.json");
    std::fs::write(
        &cfg_path,
        r#"{"n_persons": 300, "calibrate_intercept": false}"#,
    )
    .unwrap();
    let out = dir.path().join("corpus");
    let run = ltu_audit(&[
        "synth",
        "--config",
        cfg_path.to_str().unwrap(),
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    for f in [RECORDS_FILE, PERSONS_FILE, SUMMARY_FILE] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let summary: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(summary["seed"], 9);
    assert_eq!(summary["n_persons"], 300);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&ltu_audit(&["audit"])), 1);
    assert_eq!(code(&ltu_audit(&["no-such-command"])), 1);
    assert_eq!(code(&ltu_audit(&["--help"])), 0);
    assert_eq!(
        code(&ltu_audit(&["audit", "--config", "/nonexistent/run.json"])),
        2
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = ltu_audit(&["tune", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
