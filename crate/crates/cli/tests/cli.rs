use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sim"))
        .args(args)
        .env("SIM_NO_COLOR", "1")
        .output()
        .expect("sim binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_every_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = scenario("basic.scn");
    let o = sim(&[
        "run",
        file.to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in [
        "cdrs.csv",
        "ledger.csv",
        "report.txt",
        "report.csv",
        "trace.csv",
    ] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    let cdrs = fs::read_to_string(dir.path().join("cdrs.csv")).unwrap();
    assert_eq!(cdrs.lines().count(), 5);
    assert!(!stdout(&o).contains('\x1b'));
}

#[test]
fn seed_override_changes_random_runs() {
    let file = scenario("busy_hour.scn");
    let mut csvs = Vec::new();
    for seed in ["1", "1", "2"] {
        let dir = tempfile::tempdir().unwrap();
        let o = sim(&[
            "--seed",
            seed,
            "run",
            file.to_str().unwrap(),
            "-o",
            dir.path().to_str().unwrap(),
            "--scheme",
            "HB",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        csvs.push(fs::read(dir.path().join("cdrs.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_ne!(csvs[0], csvs[2]);
}

#[test]
fn run_without_schemes_is_a_scenario_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = scenario("busy_hour.scn");
    let o = sim(&[
        "run",
        file.to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no charging scheme"));
}

#[test]
fn validate_reports_lines_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scn");
    fs::write(&bad, "call 10 A B 60 IN\nhorizon 100\nbogus\n").unwrap();
    let o = sim(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(
        err.contains("line 1, column 9: error: undefined account `A`"),
        "{err}"
    );
    assert!(
        err.contains("line 3, column 1: error: unknown directive `bogus`"),
        "{err}"
    );

    let o = sim(&["validate", scenario("basic.scn").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("ok"));
}

#[test]
fn compare_csv_has_four_rows() {
    let o = sim(&[
        "compare",
        scenario("busy_hour.scn").to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].starts_with("scheme,total_revenue,credit_exposure,peak_channels"));
    let peak = |row: &str| row.split(',').nth(3).unwrap().parse::<u32>().unwrap();
    assert_eq!(peak(rows[2]), 2 * peak(rows[1]));
}

#[test]
fn audit_shows_both_policies() {
    let o = sim(&["audit", scenario("fraud.scn").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let row = |label: &str| -> Vec<String> {
        out.lines()
            .find(|l| l.starts_with(label))
            .unwrap()
            .split_whitespace()
            .rev()
            .take(2)
            .map(str::to_owned)
            .collect()
    };
    assert_eq!(row("anonymous top-ups"), vec!["0", "2"]);
    assert_eq!(row("rejected (ID)"), vec!["3", "0"]);
}

#[test]
fn voucher_batch_file_is_loaded() {
    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("batch.tsv");
    fs::write(&batch, "9999-9999-9999-9999\t70\n").unwrap();
    let scn = dir.path().join("v.scn");
    fs::write(
        &scn,
        "tariff t 1 1 0\naccount A 1 - 0 t\ntopup 1 voucher A 9999-9999-9999-9999 -\nhorizon 10\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = sim(&[
        "--vouchers",
        batch.to_str().unwrap(),
        "run",
        scn.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ledger = fs::read_to_string(out.join("ledger.csv")).unwrap();
    assert!(
        ledger.contains("A,1,1,TopUp,70,70,9999-9999-9999-9999"),
        "{ledger}"
    );
}

#[test]
fn missing_file_exits_one() {
    let o = sim(&["validate", "/nonexistent/x.scn"]);
    assert_eq!(o.status.code(), Some(1));
}
