use std::path::PathBuf;
use std::process::{Command, Output};

use rbrcap::cli::parse_csv;

fn rbrcap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbrcap")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn assert_error(out: &Output, code: i32, kind: &str) {
    assert_eq!(out.status.code(), Some(code), "stderr: {}", stderr(out));
    let err = stderr(out);
    let lines: Vec<&str> = err.lines().filter(|l| l.starts_with("error ")).collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with(&format!("error kind={kind} code={code} message=\"")), "{}", lines[0]);
    assert!(lines[0].ends_with('"'));
}

#[test]
fn config_errors_exit_2() {
    assert_error(&rbrcap(&["bounds", "--p", "1.5", "--bbar", "1"]), 2, "config");
    assert_error(&rbrcap(&["bounds", "--p", "0", "--bbar", "1"]), 2, "config");
    assert_error(&rbrcap(&["bounds", "--p", "0.2", "--bbar", "-1"]), 2, "config");
    assert_error(&rbrcap(&["bounds", "--p", "0.2", "--bbar", "5:1:3"]), 2, "config");
    assert_error(&rbrcap(&["simulate", "--p", "0.2", "--bbar", "1", "--policy", "nonsense"]), 2, "config");
    assert_error(&rbrcap(&["smith", "--amplitude", "-1"]), 2, "config");
    assert_error(&rbrcap(&["no-such-command"]), 2, "config");
    assert_error(&rbrcap(&["bounds", "--bbar", "1"]), 2, "config");
}

#[test]
fn io_errors_exit_4() {
    let missing = scratch("does/not/exist/out.csv");
    assert_error(&rbrcap(&["bounds", "--p", "0.1", "--bbar", "1", "--out", missing.to_str().unwrap()]), 4, "io");
    let absent = scratch("absent-input.csv");
    let svg = scratch("absent.svg");
    assert_error(&rbrcap(&["plot", "--input", absent.to_str().unwrap(), "--out", svg.to_str().unwrap()]), 4, "io");
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(rbrcap(&["--help"]).status.code(), Some(0));
    let v = rbrcap(&["--version"]);
    assert_eq!(v.status.code(), Some(0));
    assert!(stdout(&v).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn zero_amplitude_smith() {
    let out = rbrcap(&["smith", "--amplitude", "0"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.lines().any(|l| l == "capacity_bits=0"), "{text}");
    assert!(text.lines().any(|l| l == "support 0 1"), "{text}");
}

#[test]
fn single_point_csv_has_header_and_one_row() {
    let out = rbrcap(&["bounds", "--p", "0.3", "--bbar", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 2);
    assert!(data[0].starts_with("p,b_bar,n_tilde,"));
    let (reports, _) = parse_csv::<f64>(&text).unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].params.b_bar(), 2.0);
}

#[test]
fn linear_grid_has_61_rows_and_empty_battery_row() {
    let csv = scratch("linear.csv");
    let out = rbrcap(&["bounds", "--p", "0.3", "--bbar", "0:10:61:linear", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 62);
    let (reports, _) = parse_csv::<f64>(&text).unwrap();
    let first = &reports[0];
    assert_eq!(first.params.b_bar(), 0.0);
    assert_eq!(first.causal_upper.value(), 0.0);
    assert_eq!(first.noncausal_upper.value(), 0.0);
    assert_eq!(first.noncausal_lower_smith.value(), 0.0);
    assert_eq!(reports.last().unwrap().params.b_bar(), 10.0);
}

#[test]
fn policy_hand_point() {
    let out = rbrcap(&["policy", "--p", "0.5", "--bbar", "2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.lines().any(|l| l == "n_tilde=2"), "{text}");
    let value: f64 = text.lines().find_map(|l| l.strip_prefix("value_bits=")).unwrap().parse().unwrap();
    assert!((value - 0.405_639_062_229_566_4).abs() < 1e-12);
}

#[test]
fn simulation_is_seeded() {
    let args = ["simulate", "--p", "0.5", "--bbar", "2", "--steps", "20000", "--seed", "9", "--policy", "greedy"];
    let (a, b) = (rbrcap(&args), rbrcap(&args));
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("battery_violations=0"));
}

#[test]
fn both_formats_share_a_stem() {
    let stem = scratch("both.svg");
    let out = rbrcap(&["bounds", "--p", "0.5", "--bbar", "0.5:5:4", "--format", "both", "--out", stem.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let svg = std::fs::read_to_string(&stem).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    let csv = std::fs::read_to_string(stem.with_extension("csv")).unwrap();
    assert_eq!(parse_csv::<f64>(&csv).unwrap().0.len(), 4);
}
