use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"))
}

fn dptco(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dptco"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_generator(dir: &Path) -> PathBuf {
    let out = dir.join("gen");
    let o = dptco(&["run", path_str(&scenario("generator_only")), "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    out
}

#[test]
fn run_writes_all_outputs_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ex2");
    let o = dptco(&["run", path_str(&scenario("example2")), "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    for f in ["trajectory.csv", "manifest.json", "generator.svg", "tracking.svg"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scenario_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["monitors"]
        .as_array()
        .unwrap()
        .iter()
        .all(|m| m["pass"] == true));
}

#[test]
fn unacknowledged_criterion_failure_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("generator_only")).unwrap();
    let mut json: serde_json::Value = serde_json::from_str(&text).unwrap();
    json["acknowledge_criteria_override"] = serde_json::Value::Bool(false);
    let path = dir.path().join("strict.json");
    std::fs::write(&path, json.to_string()).unwrap();
    let o = dptco(&["run", path_str(&path), "--out", path_str(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("generator criterion"), "{}", stderr(&o));
}

#[test]
fn optimum_prints_certificate() {
    let o = dptco(&["optimum", path_str(&scenario("example2"))]);
    assert_eq!(o.status.code(), Some(0));
    let cert: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let z = cert["z_star"].as_array().unwrap();
    assert!((z[0].as_f64().unwrap() - 0.7263).abs() < 1e-3);
    assert!((z[1].as_f64().unwrap() - 0.7183).abs() < 1e-3);
}

#[test]
fn verify_reproduces_manifest_monitors() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_generator(dir.path());
    let o = dptco(&[
        "verify",
        path_str(&out.join("trajectory.csv")),
        path_str(&scenario("generator_only")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let json_start = text.find('[').unwrap();
    let verified: serde_json::Value = serde_json::from_str(&text[json_start..]).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(verified, manifest["monitors"]);
}

#[test]
fn truncated_csv_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_generator(dir.path());
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let cut = dir.path().join("cut.csv");
    std::fs::write(&cut, &csv[..csv.len() / 2]).unwrap();
    let o = dptco(&["verify", path_str(&cut), path_str(&scenario("generator_only"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn tampered_trajectory_violates_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_generator(dir.path());
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines: Vec<String> = csv.lines().map(str::to_string).collect();
    let target = lines.len() / 2;
    let mut fields: Vec<String> = lines[target].split(',').map(str::to_string).collect();
    fields[2] = "1.0e3".into();
    let t = fields[0].clone();
    lines[target] = fields.join(",");
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let o = dptco(&["verify", path_str(&bad), path_str(&scenario("generator_only"))]);
    assert_eq!(o.status.code(), Some(2));
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("generator_envelope")).unwrap();
    assert!(line.contains("FAIL") && line.contains("first violation"), "{line}");
    let t: f64 = t.parse().unwrap();
    assert!(line.contains(&format!("{t:.6}")), "{line}");
}

#[test]
fn sweep_runs_each_scenario_into_its_own_directory() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    for name in ["generator_only", "example1_dc2"] {
        std::fs::copy(scenario(name), input.join(format!("{name}.json"))).unwrap();
    }
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_dptco"))
        .args(["sweep", path_str(&input), "--out", path_str(&out)])
        .env("DPTCO_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    for name in ["generator_only", "example1_dc2"] {
        assert!(out.join(name).join("manifest.json").is_file());
    }
}

#[test]
fn seed_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("seeded");
    let o = dptco(&[
        "run",
        path_str(&scenario("generator_only")),
        "--out",
        path_str(&out),
        "--seed",
        "42",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 42);
}
