//! Runs the binary on the fixture models and checks exit codes and report contents.

use std::path::PathBuf;
use std::process::{Command, Output};

use scale_evolve_cli::report::Json;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scale-evolve")).args(args).env_remove("SCALE_EVOLVE_THREADS").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn band() -> String {
    fixture("band.toml").display().to_string()
}

fn logistic() -> String {
    fixture("logistic.toml").display().to_string()
}

fn parse(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("bad json ({e}): {}", String::from_utf8_lossy(&o.stdout)))
}

fn to_json(v: &serde_json::Value) -> Json {
    match v {
        serde_json::Value::Null => Json::Null,
        serde_json::Value::Bool(b) => Json::Bool(*b),
        serde_json::Value::Number(n) => match n.as_i64() {
            Some(i) => Json::Int(i),
            None => Json::Num(n.as_f64().unwrap()),
        },
        serde_json::Value::String(s) => Json::Str(s.clone()),
        serde_json::Value::Array(a) => Json::Arr(a.iter().map(to_json).collect()),
        serde_json::Value::Object(m) => Json::Obj(m.iter().map(|(k, v)| (k.clone(), to_json(v))).collect()),
    }
}

#[test]
fn horizon_matches_its_certificate() {
    let o = run(&["horizon", "--model", &band(), "--alpha", "1.0", "--alpha-prime", "0.5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = parse(&o);
    let c = &v["certificate"];
    let k = c["k_bound"].as_f64().unwrap();
    let m = c["m_alpha"].as_f64().unwrap();
    let expected = 0.5 / (2.0 * k * std::f64::consts::E * m);
    let h = v["horizon"].as_f64().unwrap();
    assert!((h - expected).abs() <= 1e-14 * expected, "{h} vs {expected}");
    assert_eq!(v["seed"], 0);
}

#[test]
fn json_report_round_trips_exactly() {
    let o = run(&["solve", "--model", &band(), "--alpha", "1.0", "--alpha-prime", "0.5", "--t", "0.05"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    let again = to_json(&parse(&o)).render();
    assert_eq!(text.trim_end(), again.trim_end());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = ["logistic", "check-g", "--model", &logistic(), "--seed", "7", "--samples", "300"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn malformed_model_reports_location() {
    let o = run(&["horizon", "--model", &fixture("malformed.toml").display().to_string(), "--alpha", "1", "--alpha-prime", "0.5"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 6"), "{}", stderr(&o));
}

#[test]
fn unknown_model_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.toml");
    let text = std::fs::read_to_string(fixture("band.toml")).unwrap().replace("[birth]", "[birth]\nratoi = 1.0");
    std::fs::write(&path, text).unwrap();
    let o = run(&["horizon", "--model", path.to_str().unwrap(), "--alpha", "1", "--alpha-prime", "0.5"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("ratoi"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&run(&["horizon", "--alpha", "1", "--alpha-prime", "0.5"])), 2);
    assert_eq!(code(&run(&["horizon", "--model", &band(), "--alpha", "0.5", "--alpha-prime", "1.0"])), 2);
    assert_eq!(code(&run(&["solve", "--model", &band(), "--alpha", "1", "--alpha-prime", "0.5", "--s", "1", "--t", "0"])), 2);
    assert_eq!(code(&run(&["horizon", "--model", &band(), "--alpha", "1", "--alpha-prime", "0.5", "--format", "csv"])), 2);
    assert_eq!(code(&run(&["logistic", "check-g", "--model", &band()])), 2);
    assert_eq!(code(&run(&["no-such-command"])), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_scale-evolve"))
        .args(["horizon", "--model", &band(), "--alpha", "1", "--alpha-prime", "0.5"])
        .env("SCALE_EVOLVE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn thread_count_does_not_change_results() {
    let args = ["solve", "--model", &band(), "--alpha", "1.0", "--alpha-prime", "0.5", "--t", "0.05"];
    let one = Command::new(env!("CARGO_BIN_EXE_scale-evolve")).args(args).env("SCALE_EVOLVE_THREADS", "1").output().unwrap();
    let four = Command::new(env!("CARGO_BIN_EXE_scale-evolve")).args(args).env("SCALE_EVOLVE_THREADS", "4").output().unwrap();
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn span_past_the_horizon_is_a_compute_error() {
    let o = run(&["solve", "--model", &band(), "--alpha", "1.0", "--alpha-prime", "0.5", "--t", "100"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("horizon"), "{}", stderr(&o));
}

#[test]
fn unwritable_output_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("missing").join("r.json");
    let o = run(&["horizon", "--model", &band(), "--alpha", "1", "--alpha-prime", "0.5", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn out_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let args = ["horizon", "--model", &band(), "--alpha", "1", "--alpha-prime", "0.5"];
    let direct = run(&args);
    let mut with_out = args.to_vec();
    with_out.extend(["--out", out.to_str().unwrap()]);
    assert_eq!(code(&run(&with_out)), 0);
    assert_eq!(std::fs::read(&out).unwrap(), direct.stdout);
}

#[test]
fn truncation_study_csv_lists_sizes_in_order() {
    let o = run(&[
        "truncation-study", "--model", &band(), "--alpha", "1.0", "--alpha-prime", "0.5", "--t", "0.05", "--n-list", "8,16,32", "--format",
        "csv",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    let head = lines.next().unwrap();
    assert!(head.starts_with("N,e_N"), "{head}");
    let rows: Vec<(usize, f64)> = lines
        .map(|l| {
            let mut f = l.split(',');
            (f.next().unwrap().parse().unwrap(), f.next().unwrap().parse().unwrap())
        })
        .collect();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![8, 16, 32]);
    assert!(rows[2].1 <= rows[0].1);
}

#[test]
fn logistic_bounds_report_lowering_estimate() {
    let o = run(&["logistic", "bounds", "--model", &logistic(), "--alpha", "1.5", "--alpha-prime", "0.5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = parse(&o);
    assert_eq!(v["l1_within_bound"], true);
    assert!(v["measured_l1"].as_f64().unwrap() <= v["bound_l1"].as_f64().unwrap());
}

#[test]
fn logistic_evolve_reports_closure_defect() {
    let o = run(&["logistic", "evolve", "--model", &logistic(), "--alpha", "1.5", "--alpha-prime", "0.75", "--t", "0.05"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = parse(&o);
    assert!(v["budget"]["closure_defect"].as_f64().unwrap() >= 0.0);
    let strict = run(&[
        "logistic", "evolve", "--model", &logistic(), "--alpha", "1.5", "--alpha-prime", "0.75", "--t", "0.05", "--defect-tol", "1e-12",
    ]);
    assert_eq!(code(&strict), 1);
}

#[test]
fn check_g_passes_on_dominating_competition() {
    let o = run(&["logistic", "check-g", "--model", &logistic(), "--samples", "300"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(parse(&o)["pass"], true);
}
