use mfpkit::simlab::{self, Scenario};
use mfpkit::{mfp, MfpConfig};
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SCENARIO: &str = r#"
seed = 31

[simulate.scenario]
n = 200
family = "gaussian"

[[simulate.scenario.covariates]]
name = "x1"
marginal = { kind = "uniform", low = 0.5, high = 4.0 }
form = { kind = "log" }
coefficient = 1.0

[[simulate.scenario.covariates]]
name = "x2"
marginal = { kind = "normal", mean = 0.0, sd = 1.0 }
form = { kind = "linear" }
coefficient = 0.5

[[simulate.scenario.covariates]]
name = "x3"
marginal = { kind = "normal", mean = 0.0, sd = 1.0 }
form = { kind = "null" }
coefficient = 0.0
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfpkit"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn json(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn text(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("report.txt")).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a simulated dataset and returns its path.
fn simulated(dir: &Path) -> PathBuf {
    let cfg = write(dir, "sim.toml", SCENARIO);
    let out = dir.join("sim");
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("data.csv")
}

fn num(x: f64) -> String {
    if x == 0.0 || (1e-4..1e6).contains(&x.abs()) {
        format!("{x:.6}")
    } else {
        format!("{x:.6e}")
    }
}

#[test]
fn mfp_report_matches_library_call() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let out = dir.path().join("mfp");
    let o = run(&["mfp", "--data", s(&data), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let cfg: toml::Table = toml::from_str(SCENARIO).unwrap();
    let mut sc = cfg["simulate"]["scenario"].as_table().unwrap().clone();
    sc.insert("seed".into(), toml::Value::Integer(31));
    let scenario: Scenario = toml::Value::Table(sc).try_into().unwrap();
    let d = simlab::generate(&scenario).unwrap();
    let lib = mfp(&d, &["x1", "x2", "x3"], &MfpConfig::default()).unwrap();
    let expected = serde_json::to_value(&lib).unwrap();
    let got = json(&out)["report"]["mfp"].clone();
    if let Some(path) = first_difference(&got, &expected, String::new()) {
        panic!("CLI and library differ at {path}");
    }
}

fn first_difference(a: &Value, b: &Value, path: String) -> Option<String> {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            let keys: std::collections::BTreeSet<&String> = x.keys().chain(y.keys()).collect();
            keys.into_iter().find_map(|k| match (x.get(k), y.get(k)) {
                (Some(u), Some(v)) => first_difference(u, v, format!("{path}.{k}")),
                _ => Some(format!("{path}.{k}")),
            })
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => x
            .iter()
            .zip(y)
            .enumerate()
            .find_map(|(i, (u, v))| first_difference(u, v, format!("{path}[{i}]"))),
        _ if a == b => None,
        _ => Some(format!("{path}: {a} vs {b}")),
    }
}

#[test]
fn text_numbers_are_recoverable_from_json() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let out = dir.path().join("mfp");
    assert!(run(&["mfp", "--data", s(&data), "--out", s(&out)]).status.success());
    let report = json(&out);
    let txt = text(&out);
    let mut checked = 0;
    for d in report["report"]["mfp"]["decisions"].as_object().unwrap().values() {
        for step in d["steps"].as_array().into_iter().flatten() {
            for key in ["statistic", "p_value", "alpha"] {
                let v = step[key].as_f64().unwrap();
                assert!(txt.contains(&num(v)), "{key} {v} missing from text");
                checked += 1;
            }
        }
    }
    for c in report["report"]["mfp"]["fit"]["coefficients"].as_array().unwrap() {
        assert!(txt.contains(&num(c.as_f64().unwrap())));
        checked += 1;
    }
    assert!(checked > 10);
}

#[test]
fn stability_is_byte_identical_for_equal_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let cfg = write(dir.path(), "stab.toml", "method = \"backward\"\n[resample]\nreplications = 40\n");
    let mut reports = Vec::new();
    for (i, workers) in ["1", "2"].iter().enumerate() {
        let out = dir.path().join(format!("stab{i}"));
        let o = run(&[
            "stability", "--config", s(&cfg), "--data", s(&data), "--seed", "9", "--workers", workers, "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        reports.push(std::fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let v: Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["report"]["stability"]["successful"], 40);
}

#[test]
fn stochastic_commands_require_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    for cmd in ["stability", "cutpoint-demo"] {
        let o = run(&[cmd, "--data", s(&data), "--out", s(&dir.path().join("x"))]);
        assert_eq!(o.status.code(), Some(2), "{cmd}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
    }
}

#[test]
fn cutpoint_demo_reports_inflated_rate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cut");
    let o = run(&["cutpoint-demo", "--seed", "4", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("Monte Carlo s.e."));
    assert!(stdout.contains("warnings:"));
    let v = json(&out);
    let rate = v["report"]["min_p"]["rate"].as_f64().unwrap();
    assert!(rate > 0.2, "{rate}");
    assert!(stdout.contains(&num(rate)));
    assert!(!v["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn missing_outcome_exits_with_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", "a,b\n1,2\n2,3\n");
    let o = run(&["fit", "--data", s(&data), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`y`"));
}

#[test]
fn bad_config_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "alpha_select = 0.05\nunknown_key = 1\n");
    let o = run(&["mfp", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown_key"));
    let o = run(&["mfp", "--alpha-fp", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn separated_binomial_fit_exits_with_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("y,x\n");
    for i in 0..40 {
        csv.push_str(&format!("{},{}\n", u8::from(i >= 20), i));
    }
    let data = write(dir.path(), "sep.csv", &csv);
    let cfg = write(dir.path(), "c.toml", "family = \"binomial\"\n");
    let o = run(&["fit", "--config", s(&cfg), "--data", s(&data), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_values_are_dropped_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("y,x,z\n");
    for i in 0..30 {
        let z = if i % 10 == 3 { "NA".to_string() } else { format!("{}", (i * 7) % 5) };
        csv.push_str(&format!("{},{},{z}\n", 0.3 * f64::from(i) + f64::from(i % 3), i));
    }
    let data = write(dir.path(), "m.csv", &csv);
    let out = dir.path().join("o");
    let o = run(&["fit", "--data", s(&data), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out);
    assert_eq!(v["report"]["data"]["rows_dropped"], 3);
    assert_eq!(v["report"]["fit"]["n"], 27);
    assert!(text(&out).contains("dropped 3 of 30 rows"));
}

#[test]
fn select_shrink_and_fixed_powers() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let out = dir.path().join("sel");
    let o = run(&["select", "--data", s(&data), "--criterion", "bic", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(text(&out).contains("final model:"));

    let out = dir.path().join("shr");
    let cfg = write(dir.path(), "shr.toml", "method = \"mfp\"\n[shrinkage]\nmode = \"parameterwise\"\n");
    let o = run(&["shrink", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out);
    assert!(!v["report"]["shrinkage"]["factors"].as_array().unwrap().is_empty());

    let out = dir.path().join("fit");
    let cfg = write(dir.path(), "fit.toml", "candidates = [\"x1\"]\n[variables.x1]\npowers = [0]\n");
    let o = run(&["fit", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&out)["report"]["fit"]["labels"].as_array().unwrap().len(), 2);
}

#[test]
fn simulate_evaluates_a_procedure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sim.toml",
        &format!("method = \"backward\"\n{}\n", SCENARIO.replace("[simulate.scenario]", "[simulate]\nreplications = 20\n\n[simulate.scenario]")),
    );
    let out = dir.path().join("o");
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out);
    assert_eq!(v["report"]["evaluation"]["successful"], 20);
    assert!(out.join("data.csv").exists());
}
