use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hammersim::cli::ReportFile;
use hammersim::DisturbanceProfile;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hammersim"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const PROFILE: &str = r#"[{"bank": 0, "victim_row": 3, "bit": 1, "threshold": 10,
  "flip_direction": "zero_to_one", "pattern_gate": "always", "coupled_side": "either"}]"#;

/// Write a config plus its profile into `dir`, returning the config path.
fn write_config(dir: &Path, body: &str) -> PathBuf {
    fs::write(dir.join("profile.json"), PROFILE).unwrap();
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn empty_trace_simulates_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.trace"), "# nothing\n").unwrap();
    let config = write_config(
        dir.path(),
        r#"{"schema": 1, "geometry": {"banks": 1, "rows_per_bank": 8, "row_size_bits": 64},
            "profile_path": "profile.json", "trace_path": "empty.trace"}"#,
    );
    let o = bin().arg("simulate").arg("--config").arg(&config).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: ReportFile = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report.report.activations, 0);
    assert!(report.report.flips.is_empty());
    assert!(report.breach.is_none());
}

#[test]
fn trace_and_attack_together_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("t.trace"), "R 0x0\n").unwrap();
    let config = write_config(
        dir.path(),
        r#"{"schema": 1, "geometry": {"banks": 1, "rows_per_bank": 8, "row_size_bits": 64},
            "profile_path": "profile.json", "trace_path": "t.trace",
            "attack": {"kind": "double_sided", "target_victim_row": 3, "iterations": 5}}"#,
    );
    let o = bin().arg("simulate").arg("--config").arg(&config).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("conflict"), "{}", stderr(&o));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"schema": 1, "geometry": {"banks": 1, "rows_per_bank": 8, "row_size_bits": 64},
            "policy": {"kind": "para", "p": "high", "rng_seed": 1},
            "profile_path": "profile.json", "trace_path": "t.trace"}"#,
    );
    let o = bin().arg("simulate").arg("--config").arg(&config).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("policy"), "{}", stderr(&o));

    let o = bin().args(["simulate", "--config", "/nonexistent/config.json"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn csv_output_is_a_flip_log() {
    let o = bin()
        .arg("simulate")
        .arg("--config")
        .arg(configs().join("mixed_trace.json"))
        .output()
        .unwrap();
    assert!(matches!(o.status.code(), Some(0 | 2)), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time_ns,bank,row,bit,direction,aggressor_row"));
    assert!(lines.count() >= 1);
}

fn sweep(config: &Path, param: &str, values: &str, seeds: &str) -> Output {
    bin()
        .arg("sweep")
        .arg("--config")
        .arg(config)
        .args(["--param", param, "--values", values, "--seeds", seeds])
        .output()
        .unwrap()
}

fn csv_rows(text: &str) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(text.as_bytes())
        .records()
        .map(|r| r.unwrap())
        .collect()
}

#[test]
fn sweep_emits_one_row_per_value_and_seed() {
    let o = sweep(&configs().join("para_demo.json"), "para_p", "0.001,0.01,0.1", "1,2");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 6);
    assert_eq!(&rows[0][0], "0.001");
    assert_eq!(&rows[5][1], "2");
}

#[test]
fn refresh_sweep_at_one_matches_simulate() {
    let config = configs().join("breach_demo.json");
    let o = sweep(&config, "refresh_k", "1", "0");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&stdout(&o));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let s = bin().arg("simulate").arg("--config").arg(&config).arg("--out").arg(&out).output().unwrap();
    assert_eq!(s.status.code(), Some(2));
    let report: ReportFile = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    assert_eq!(rows[0][2].parse::<usize>().unwrap(), report.report.flips.len());
    assert_eq!(rows[0][3].parse::<u64>().unwrap(), report.breaches());
    assert_eq!(rows[0][4].parse::<u64>().unwrap(), report.report.activations);
}

#[test]
fn para_sweep_endpoints() {
    let o = sweep(&configs().join("breach_demo.json"), "para_p", "0,1", "0");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&stdout(&o));
    assert!(rows[0][2].parse::<u64>().unwrap() > 0);
    assert_eq!(&rows[1][2], "0");
}

#[test]
fn sweep_rejects_unknown_param_and_bad_values() {
    let config = configs().join("breach_demo.json");
    assert_eq!(sweep(&config, "voltage", "1", "0").status.code(), Some(1));
    assert_eq!(sweep(&config, "para_p", "1.5", "0").status.code(), Some(1));
    assert_eq!(sweep(&config, "refresh_k", "0", "0").status.code(), Some(1));
    let trace_cfg = configs().join("mixed_trace.json");
    assert_eq!(sweep(&trace_cfg, "iterations", "10", "0").status.code(), Some(1));
}

#[test]
fn analyze_para_table() {
    let o = bin()
        .args(["analyze", "--p", "0,1", "--n", "50", "--trials", "100"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 2);
    assert_eq!((&rows[0][2], &rows[0][3]), ("1", "1"));
    assert_eq!((&rows[1][2], &rows[1][3]), ("0", "0"));

    let o = bin().args(["analyze", "--p", "0.1", "--n", "5", "--trials", "0"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = bin().args(["analyze", "--p", "-0.1", "--n", "5"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn analyze_refresh_table() {
    let o = bin()
        .args(["analyze", "--table", "refresh", "--t-min", "183000,1"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(&rows[0][3], "7");
    assert_eq!(&rows[1][3], "1280001");
}

#[test]
fn gen_profile_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.json");
    let gen = |seed: &str| {
        let o = bin()
            .args(["gen-profile", "--cells", "40", "--t-min", "100", "--t-max", "200", "--seed", seed])
            .args(["--banks", "2", "--rows", "64", "--row-bits", "512", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read_to_string(&out).unwrap()
    };
    let a = gen("5");
    assert_eq!(a, gen("5"));
    assert_ne!(a, gen("6"));
    let p: DisturbanceProfile = serde_json::from_str(&a).unwrap();
    assert_eq!(p.len(), 40);
    assert!(p.entries().iter().all(|c| (100..=200).contains(&c.threshold) && c.bank < 2 && c.bit < 512));

    let o = bin()
        .args(["gen-profile", "--cells", "1", "--t-min", "0", "--t-max", "5", "--seed", "1", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn report_json_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = bin()
        .arg("simulate")
        .arg("--config")
        .arg(configs().join("para_demo.json"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(matches!(o.status.code(), Some(0 | 2)));
    let text = fs::read_to_string(&out).unwrap();
    let report: ReportFile = serde_json::from_str(&text).unwrap();
    let mut again = serde_json::to_string_pretty(&report).unwrap();
    again.push('\n');
    assert_eq!(text, again);
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    assert_eq!(bin().output().unwrap().status.code(), Some(1));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}
