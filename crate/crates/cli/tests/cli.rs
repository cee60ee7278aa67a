use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn ipr(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipr"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env_remove("IPR_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn metric(path: &Path, key: &str) -> f64 {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .filter_map(|l| l.split_once(','))
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v.parse().unwrap())
        .unwrap_or_else(|| panic!("{key} missing in {}", path.display()))
}

fn stderr_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stderr).expect("machine-readable error")
}

#[test]
fn benders_and_direct_objectives_agree() {
    let dir = tempfile::tempdir().unwrap();
    let toy = fixture("toy-2.json");
    let toy = toy.to_str().unwrap();
    for m in ["benders", "direct"] {
        let o = ipr(dir.path(), &["solve-ipr", toy, "--method", m]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let b = metric(&dir.path().join("ipr_benders_objective.csv"), "objective");
    let d = metric(&dir.path().join("ipr_direct_objective.csv"), "objective");
    assert!((b - d).abs() <= 1e-6 * d.abs());
}

#[test]
fn validate_names_the_broken_rule() {
    let dir = tempfile::tempdir().unwrap();
    let o = ipr(
        dir.path(),
        &["validate", fixture("broken-leg-order.json").to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["rule"], "leg_ordering");
    let o = ipr(dir.path(), &["validate", fixture("toy-1.json").to_str().unwrap()]);
    assert!(o.status.success());
}

#[test]
fn evaluate_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let toy = fixture("toy-2.json");
    let toy = toy.to_str().unwrap();
    assert!(ipr(dir.path(), &["solve-ipr", toy, "--method", "direct"])
        .status
        .success());
    let plan = dir.path().join("ipr_direct_plan.csv");
    let mut runs = Vec::new();
    for sub in ["a", "b"] {
        let out = dir.path().join(sub);
        let o = ipr(
            &out,
            &[
                "evaluate",
                toy,
                "--plan",
                plan.to_str().unwrap(),
                "--seed",
                "7",
                "--replications",
                "40",
            ],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        runs.push(std::fs::read(out.join("evaluation.csv")).unwrap());
    }
    assert_eq!(runs[0], runs[1]);
    let head = String::from_utf8_lossy(&runs[0]).lines().next().unwrap().to_string();
    assert!(head.starts_with("# tool=ipr version="));
    assert!(head.contains("seed=7"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let toy = fixture("toy-2.json");
    let toy = toy.to_str().unwrap();
    let o = ipr(dir.path(), &["solve-ipr", toy, "--gamma", "0"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["error"], "infeasible");

    let o = ipr(
        dir.path(),
        &[
            "solve-ipr",
            fixture("bottleneck.json").to_str().unwrap(),
            "--max-iterations",
            "1",
        ],
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(dir.path().join("ipr_benders_plan.csv").exists());

    let o = ipr(dir.path(), &["no-such-command"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "usage");

    let o = ipr(dir.path(), &["solve-of", "/nonexistent.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "io");
}

#[test]
fn benchmark_and_sweep_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let inc = fixture("incident.json");
    let inc = inc.to_str().unwrap();
    for s in ["status-quo", "capacity"] {
        let o = ipr(dir.path(), &["benchmark", inc, "--strategy", s]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(dir.path().join(format!("benchmark_{s}_evaluation.csv")).exists());
    }
    let o = ipr(
        dir.path(),
        &["psi-sweep", inc, "--grid", "10,0,1", "--method", "direct"],
    );
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("psi_sweep.csv")).unwrap();
    let psis: Vec<&str> = text.lines().skip(2).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(psis, ["0.000000000", "1.000000000", "10.000000000"]);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ipr"))
        .args(["solve-of", fixture("toy-1.json").to_str().unwrap()])
        .env("IPR_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!((metric(&dir.path().join("of_objective.csv"), "objective_min") - 27.5).abs() < 1e-9);
}
