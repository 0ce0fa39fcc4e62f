use std::path::{Path, PathBuf};
use std::process::Command;

use horlap::cli::{RunReport, PARTIAL_CONVERGENCE, PERIODIC_SURROGATE};

const GRUSHIN: &str = r#"{
  "schema_version": "1",
  "chart": {"vars": ["x", "y"],
            "axes": [{"type": "interval", "lo": "-4", "hi": "4"},
                     {"type": "periodic", "period": "1"}]},
  "generators": [{"name": "X1", "components": ["1", "0"]},
                 {"name": "X2", "components": ["0", "x"]}],
  "log_density": "0",
  "seed": 42,
  "allow_nonperiodic": false
}"#;

fn put(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn horlap(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_horlap")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn report(p: &Path) -> RunReport {
    RunReport::from_json(&std::fs::read(p).unwrap()).unwrap()
}

#[test]
fn analyze_grushin_axis_jump() {
    let dir = tempfile::tempdir().unwrap();
    let spec = put(dir.path(), "g.json", GRUSHIN);
    let pts = put(dir.path(), "p.csv", "0,0\n0,1/3\n1/2,0\n-2,1/4\n");
    let out = dir.path().join("r.json");
    let (code, err) = horlap(&[
        "--spec", spec.to_str().unwrap(), "analyze", "--points", pts.to_str().unwrap(),
        "--degree-bound", "4", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let r = report(&out);
    let dims: Vec<(u64, u64)> = r.results["fibers"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| (f["dim_ev"].as_u64().unwrap(), f["dim_mod"].as_u64().unwrap()))
        .collect();
    assert_eq!(dims, vec![(1, 2), (1, 2), (2, 2), (2, 2)]);
}

#[test]
fn flag_grushin_origin() {
    let dir = tempfile::tempdir().unwrap();
    let spec = put(dir.path(), "g.json", GRUSHIN);
    let pts = put(dir.path(), "p.csv", "0,0\n");
    let out = dir.path().join("r.json");
    let (code, _) = horlap(&["--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap(), "flag", "--probes", pts.to_str().unwrap()]);
    assert_eq!(code, 0);
    let g = &report(&out).results["growth_vectors"][0];
    assert_eq!(g["dims"], serde_json::json!([1, 2]));
    assert_eq!(g["step"], 2);
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = put(dir.path(), "m.json", r#"{"schema_version":"1","chart":{"vars":["x"],"axes":[{"type":"periodic","period":"1"}]}}"#);
    let (code, err) = horlap(&["--spec", missing.to_str().unwrap(), "spectrum", "--grid", "8"]);
    assert_eq!(code, 2);
    assert!(err.contains("generators"), "{err}");

    let nonper = put(
        dir.path(),
        "n.json",
        r#"{"schema_version":"1","chart":{"vars":["x","y"],"axes":[{"type":"periodic","period":"1"},{"type":"periodic","period":"1"}]},
            "generators":[{"name":"X","components":["0","x"]}]}"#,
    );
    let (code, err) = horlap(&["--spec", nonper.to_str().unwrap(), "spectrum", "--grid", "8,8"]);
    assert_eq!(code, 2);
    assert!(err.contains("periodic"), "{err}");

    let spec = put(dir.path(), "g.json", GRUSHIN);
    let (code, _) = horlap(&["--spec", spec.to_str().unwrap(), "spectrum", "--grid", "8,8,8"]);
    assert_eq!(code, 2);
    let (code, _) = horlap(&["spectrum", "--grid", "8"]);
    assert_eq!(code, 2);
}

#[test]
fn non_convergence_exit_3_with_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let spec = put(dir.path(), "g.json", GRUSHIN);
    let out = dir.path().join("r.json");
    let (code, _) = horlap(&[
        "--spec", spec.to_str().unwrap(), "spectrum", "--grid", "32,16", "--num-eigs", "4",
        "--tol", "1e-300", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 3);
    let r = report(&out);
    assert_eq!(r.warnings[0].code, PARTIAL_CONVERGENCE);
    assert_eq!(r.results["partial"]["converged"], false);
    assert_eq!(r.results["partial"]["eigenvalues"].as_array().unwrap().len(), 4);
}

#[test]
fn reruns_are_byte_identical_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = put(dir.path(), "g.json", GRUSHIN);
    let mut texts = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("r{i}.json"));
        let (code, _) = horlap(&["--spec", spec.to_str().unwrap(), "spectrum", "--grid", "48,16", "--num-eigs", "5", "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0);
        let r = report(&out);
        assert_eq!(RunReport::from_json(&r.to_json()).unwrap(), r);
        texts.push(r.without_timings().to_json());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn circle_field_leafwise_matches_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let spec = put(
        dir.path(),
        "c.json",
        r#"{"schema_version":"1","chart":{"vars":["x","y"],"axes":[{"type":"periodic","period":"1"},{"type":"periodic","period":"1"}]},
            "generators":[{"name":"X","components":["1","0"]}],"seed":5}"#,
    );
    let out = dir.path().join("l.json");
    let (code, _) = horlap(&[
        "--spec", spec.to_str().unwrap(), "leafwise", "--leaf-axes", "0", "--grid", "32,8",
        "--num-eigs", "40", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let r = report(&out);
    assert!(r.results["hausdorff_defect"].as_f64().unwrap() <= 1e-8);
    assert_eq!(r.results["leafwise"].as_array().unwrap().len(), 8);
}

#[test]
fn surrogate_and_groupoid_reports() {
    let dir = tempfile::tempdir().unwrap();
    let spec = put(
        dir.path(),
        "s.json",
        r#"{"schema_version":"1","chart":{"vars":["x","y"],"axes":[{"type":"periodic","period":"2*pi"},{"type":"periodic","period":"2*pi"}]},
            "generators":[{"name":"X1","components":["1","0"]},{"name":"X2","components":["0","x"]}],"allow_nonperiodic":true}"#,
    );
    let out = dir.path().join("s.out");
    let (code, _) = horlap(&["--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap(), "subelliptic", "--epsilon", "0.5", "--grids", "16,32", "--trials", "2"]);
    assert_eq!(code, 0);
    let r = report(&out);
    assert!(r.warnings.iter().any(|w| w.code == PERIODIC_SURROGATE));
    assert_eq!(r.results["ratios"].as_array().unwrap().len(), 2);

    let (code, _) = horlap(&["--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap(), "groupoid-check", "--grid", "8,4", "--alpha", "x"]);
    assert_eq!(code, 0);
    let r = report(&out);
    assert!(r.results["cocycle_residual"].as_f64().unwrap() < 1e-13);
    assert_eq!(r.results["multiplier"].as_array().unwrap().len(), 1);
}
