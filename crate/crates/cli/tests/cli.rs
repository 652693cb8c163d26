use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn runoff_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_runoff"))
        .args(args)
        .current_dir(dir)
        .env_remove("RUNOFF_DATA_DIR")
        .output()
        .unwrap()
}

fn runoff(args: &[&str]) -> Output {
    runoff_in(&repo_root(), args)
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process exited")
}

#[test]
fn bound_defaults_reproduce_the_disclosed_case() {
    let out = runoff(&["bound"]);
    let text = stdout(&out);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(text.contains("lower bound: 48.140716"), "{text}");
    assert!(
        text.contains("headline: 62.7 - 10.4 - 4.1 = 48.2"),
        "{text}"
    );
    assert!(text.contains("reported FDB: 48.600000"), "{text}");
    assert!(text.contains("bound check: pass"), "{text}");
}

#[test]
fn bound_what_if_cell_matches_the_published_table() {
    let out = runoff(&["bound", "--gph", "0.85", "--C0", "0.01", "--M", "15"]);
    let text = stdout(&out);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(text.contains("= 55.7"), "{text}");
    assert!(
        !text.contains("reported FDB"),
        "a what-if run must not be judged against the disclosed value: {text}"
    );
}

#[test]
fn bound_without_cross_financing_reduces_to_first_bound_less_surplus() {
    let out = runoff(&["bound", "--C0", "0"]);
    let text = stdout(&out);
    assert_eq!(code(&out), 0);
    assert!(text.contains("cross-financing: 0.000000"), "{text}");
    assert!(text.contains("lower bound: 52.278000"), "{text}");
}

#[test]
fn bound_fails_when_the_reported_value_sits_below_the_bound() {
    let out = runoff(&["bound", "--reported-fdb", "40"]);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("bound check: FAIL"));
}

#[test]
fn bound_exact_mode_drops_the_presentation_rounding() {
    let out = runoff(&["bound", "--exact"]);
    let text = stdout(&out);
    assert_eq!(code(&out), 0);
    assert!(text.contains("mode: exact"), "{text}");
    assert!(text.contains("lower bound: 48.076794"), "{text}");
}

#[test]
fn validate_defaults_pass() {
    let out = runoff(&["validate"]);
    let text = stdout(&out);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(text.contains("martingale test: pass"), "{text}");
    assert!(text.contains("leakage test: pass"), "{text}");
}

#[test]
fn validate_flags_a_dropped_cash_flow() {
    let out = runoff(&["validate", "--drop-cashflow", "t=3"]);
    let text = stdout(&out);
    assert_eq!(code(&out), 2);
    assert!(text.contains("fault injection"), "{text}");
    assert!(text.contains("leakage test: FAIL"), "{text}");
}

#[test]
fn validate_accepts_a_bare_drop_year() {
    let out = runoff(&["validate", "--drop-cashflow", "3"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn validate_single_deterministic_scenario_is_exact() {
    let out = runoff(&[
        "validate",
        "--portfolio",
        "toy_matched.json",
        "--scenarios",
        "1",
        "--vol",
        "0",
    ]);
    let text = stdout(&out);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(text.contains("leakage test: pass"), "{text}");
}

#[test]
fn validate_rejects_an_insolvent_portfolio() {
    let out = runoff(&["validate", "--portfolio", "toy_insolvent.json"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("insolvent"), "{}", stderr(&out));
}

#[test]
fn curve_reports_the_maximum_discount_factor() {
    let out = runoff(&["curve"]);
    let text = stdout(&out);
    assert_eq!(code(&out), 0);
    assert!(
        text.contains("max discount factor: 1.005000 at t = 2"),
        "{text}"
    );
    assert!(text.contains("deflator CoV"), "{text}");
}

#[test]
fn curve_on_a_flat_file_shows_zero_forwards() {
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat.csv");
    fs::write(&flat, "tenor,discount_factor\n1,1.0\n2,1.0\n3,1.0\n").unwrap();
    let out = runoff(&["curve", "--curve", flat.to_str().unwrap()]);
    let text = stdout(&out);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    for line in text
        .lines()
        .filter(|l| l.trim_start().starts_with(['1', '2', '3']))
    {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() == 4 {
            assert_eq!(fields[2], "0.000000", "{line}");
        }
    }
}

#[test]
fn malformed_curve_row_is_named_in_the_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "tenor,discount_factor\n1,1.004\n2,frog\n").unwrap();
    let out = runoff(&["curve", "--curve", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    let err = stderr(&out);
    assert!(err.contains("bad.csv:3"), "{err}");
    assert!(err.contains("frog"), "{err}");
}

#[test]
fn unknown_flag_is_an_input_error() {
    let out = runoff(&["curve", "--frobnicate"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn help_exits_clean() {
    let out = runoff(&["--help"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("runoff"));
}

#[test]
fn scenarios_default_sample_is_too_thin_for_the_full_curve() {
    let out = runoff(&["scenarios"]);
    let text = stdout(&out);
    assert_eq!(code(&out), 4);
    assert!(text.contains("martingale test: FAIL"), "{text}");
}

#[test]
fn scenario_dump_round_trips_through_validate() {
    let dir = tempfile::tempdir().unwrap();
    let paths = dir.path().join("paths.csv");
    let dump = runoff(&[
        "scenarios",
        "--scenarios",
        "400",
        "--out",
        paths.to_str().unwrap(),
    ]);
    assert_eq!(code(&dump), 0, "stderr: {}", stderr(&dump));
    let header = fs::read_to_string(&paths).unwrap();
    assert!(header.starts_with("scenario,year,forward,deflator\n"));

    let out = runoff(&["validate", "--scenarios-csv", paths.to_str().unwrap()]);
    let text = stdout(&out);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(text.contains("leakage test: pass"), "{text}");
}

#[test]
fn grid_exports_csv_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = runoff(&["grid", "--out-dir", dir.path().to_str().unwrap()]);
    let text = stdout(&out);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(text.contains("lower bound, M = 15"), "{text}");
    assert!(text.contains("cross-financing term F"), "{text}");

    let lb = fs::read_to_string(dir.path().join("grid_lb.csv")).unwrap();
    assert!(lb.starts_with("m,gph,c0,lower_bound\n"), "{lb}");
    assert!(lb.contains("15,0.8,0.03,48.140716"), "{lb}");
    assert_eq!(lb.lines().count(), 28);

    let f = fs::read_to_string(dir.path().join("grid_f.csv")).unwrap();
    assert!(f.contains("0.8,0.03,4.137284"), "{f}");
    assert_eq!(f.lines().count(), 10);
}

#[test]
fn report_reruns_are_byte_identical_apart_from_the_timestamp() {
    fn without_timestamp(text: &str) -> String {
        text.lines()
            .filter(|l| !l.starts_with("generated:"))
            .collect::<Vec<_>>()
            .join("\n")
    }
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    for out_dir in [&first, &second] {
        let out = runoff(&[
            "report",
            "--scenarios",
            "200",
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }
    let a = fs::read_to_string(first.join("report.txt")).unwrap();
    let b = fs::read_to_string(second.join("report.txt")).unwrap();
    assert!(
        a.starts_with("run-off valuation report\ngenerated: "),
        "{a}"
    );
    assert_eq!(without_timestamp(&a), without_timestamp(&b));
    for section in ["[curve]", "[scenarios]", "[valuation]", "[bound]", "[grid]"] {
        assert!(a.contains(section), "missing {section}");
    }
}

#[test]
fn config_file_supplies_values_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        "portfolio = \"toy_matched.json\"\nscenarios = 1\n\n[model]\nvolatility = 0.0\n",
    )
    .unwrap();

    let from_file = runoff(&["validate", "--config", config.to_str().unwrap()]);
    let text = stdout(&from_file);
    assert_eq!(code(&from_file), 0, "stderr: {}", stderr(&from_file));
    assert!(text.contains("scenarios: 1 "), "{text}");
    assert!(text.contains("toy_matched.json"), "{text}");

    let overridden = runoff(&[
        "validate",
        "--config",
        config.to_str().unwrap(),
        "--portfolio",
        "toy_insolvent.json",
    ]);
    assert_eq!(code(&overridden), 2);
    assert!(stderr(&overridden).contains("insolvent"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, "banana = 1\n").unwrap();
    let out = runoff(&["curve", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("banana"), "{}", stderr(&out));
}

#[test]
fn environment_variable_sets_the_data_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_runoff"))
        .args(["bound"])
        .current_dir(dir.path())
        .env("RUNOFF_DATA_DIR", repo_root().join("data"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("lower bound: 48.140716"));
}

#[test]
fn ledger_export_uses_the_tidy_layout() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = dir.path().join("ledger.csv");
    let out = runoff(&[
        "validate",
        "--portfolio",
        "toy_matched.json",
        "--scenarios",
        "1",
        "--vol",
        "0",
        "--ledger-out",
        ledger.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = fs::read_to_string(&ledger).unwrap();
    assert!(text.starts_with("scenario,year,field,value\n"), "{text}");
    assert!(text.contains("0,5,cf_guaranteed,92"), "{text}");
    assert!(text.contains("discretionary.endowment"), "{text}");
}
