use std::path::Path;
use std::process::{Command, Output};

use qfilter_cli::config::ExperimentConfig;
use serde_json::Value;

fn qfilter(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfilter"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .map(|it| {
            it.map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
                .collect()
        })
        .unwrap_or_default();
    v.sort();
    v
}

#[test]
fn reduction_run_writes_tables_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "r.json",
        r#"{"experiment":"reduction","trajectories":64,"horizon":2,"seed":4}"#,
    );
    let o = qfilter(&["run", &cfg, "--out", "out/red"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let names = files_in(&tmp.path().join("out"));
    assert_eq!(
        names,
        [
            "red_ensemble.csv",
            "red_report.json",
            "red_terminal.csv",
            "red_traces.csv"
        ]
    );
    let terminal = std::fs::read_to_string(tmp.path().join("out/red_terminal.csv")).unwrap();
    let mut lines = terminal.lines();
    assert_eq!(lines.next().unwrap(), "trajectory,x,y,z,V,alpha,Y,fidelity");
    assert_eq!(lines.count(), 64);

    let report: Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("out/red_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["metadata"]["seed"], 4);
    assert!(report["metadata"]["build"]
        .as_str()
        .unwrap()
        .starts_with("qfilter"));
    let echoed: ExperimentConfig =
        serde_json::from_value(report["metadata"]["config"].clone()).unwrap();
    assert_eq!(echoed.trajectories, 64);
    assert_eq!(echoed.clone().resolve().unwrap(), echoed);
    assert!(report["results"]["excited_fraction"].is_number());
}

#[test]
fn seed_override_changes_output_and_repeats_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "r.json",
        r#"{"experiment":"reduction","trajectories":32,"horizon":1}"#,
    );
    let read = |name: &str| std::fs::read(tmp.path().join(name)).unwrap();
    for (out, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        let o = qfilter(&["run", &cfg, "--seed", seed, "--out", out], tmp.path());
        assert!(o.status.success());
    }
    assert_eq!(read("a_terminal.csv"), read("b_terminal.csv"));
    assert_ne!(read("a_terminal.csv"), read("c_terminal.csv"));
}

#[test]
fn invalid_config_exits_2_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, body) in [
        ("dt.json", r#"{"experiment":"reduction","dt":0}"#),
        ("neg.json", r#"{"experiment":"stabilize","dt":-1e-3}"#),
        ("kind.json", r#"{"experiment":"teleport"}"#),
        ("field.json", r#"{"experiment":"reduction","bogus":1}"#),
        (
            "gain.json",
            r#"{"experiment":"stabilize","gains":{"fidelity":-1,"commutator":1}}"#,
        ),
    ] {
        let cfg = write(tmp.path(), name, body);
        let o = qfilter(&["run", &cfg, "--out", "out/x"], tmp.path());
        assert_eq!(o.status.code(), Some(2), "{name}");
        assert!(!o.stderr.is_empty());
    }
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn missing_config_file_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qfilter(&["run", "nope.json"], tmp.path());
    assert_ne!(o.status.code(), Some(0));
    assert!(files_in(tmp.path()).is_empty());
}

#[test]
fn unknown_suite_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qfilter(&["verify", "everything"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_usage_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(qfilter(&["launch"], tmp.path()).status.code(), Some(2));
    assert_eq!(
        qfilter(&["verify", "lemma", "--threads", "0"], tmp.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn verify_invariants_reports_json() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qfilter(&["verify", "invariants", "--out", "inv"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["suite"], "invariants");
    assert_eq!(report["passed"], true);
    assert!(report["properties"].as_array().unwrap().len() >= 5);
    assert!(tmp.path().join("inv_verify.json").exists());
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let c = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(c).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn mixed_qubit_reduces_to_both_poles() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "r.json",
        r#"{"experiment":"reduction","initial":"maximally-mixed","trajectories":200,"horizon":5,"seed":17}"#,
    );
    let o = qfilter(&["run", &cfg, "--out", "red"], tmp.path());
    assert!(o.status.success());
    let z = column(
        &std::fs::read_to_string(tmp.path().join("red_terminal.csv")).unwrap(),
        "z",
    );
    assert_eq!(z.len(), 200);
    assert!(z.iter().filter(|z| z.abs() > 0.99).count() >= 198);
    let up = z.iter().filter(|&&z| z > 0.99).count() as f64;
    // 3 binomial standard errors around 100
    assert!((up - 100.0).abs() <= 3.0 * (200.0f64 * 0.25).sqrt(), "{up}");
}

#[test]
fn stabilized_ensemble_fidelity_ends_high() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "s.json",
        r#"{"experiment":"stabilize","target":"ground","trajectories":200,"horizon":5,"seed":3,
            "picard":{"ensemble_size":500}}"#,
    );
    let o = qfilter(&["run", &cfg, "--out", "stab"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ens = std::fs::read_to_string(tmp.path().join("stab_ensemble.csv")).unwrap();
    let fidelity = column(&ens, "fidelity_mean");
    assert!(*fidelity.last().unwrap() > 0.99, "{fidelity:?}");
    let traces = std::fs::read_to_string(tmp.path().join("stab_traces.csv")).unwrap();
    assert_eq!(
        traces.lines().next().unwrap(),
        "trajectory,t,x,y,z,V,alpha,Y,fidelity"
    );
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::from_path(&path)
            .and_then(|c| c.resolve())
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(cfg.output.is_some());
        n += 1;
    }
    assert!(n >= 9);
}
