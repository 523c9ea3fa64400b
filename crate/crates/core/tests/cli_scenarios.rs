use cone_capacity::scenario::{parse_config, run_scenario, Outcome, RunOptions, Status};
use cone_capacity::{ConeSpec, RadialGraph};
use std::path::Path;
use std::process::Command;

fn conecap(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_conecap")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn unit_cap_scenario_reports_equality() {
    let sc = parse_config(r#"{"kind": "capacity", "grid": {"m_theta": 64, "m_s": 128}}"#).unwrap();
    let out = run_scenario(&sc, &RunOptions::default()).unwrap();
    assert!(out.success());
    assert!(out.files.is_empty());
    let Outcome::Capacity(rep) = &out.report.result else { panic!("wrong outcome") };
    assert!((rep.capacity.cap_extrapolated - 1.0).abs() < 1e-6);
    for v in &rep.verdicts {
        if v.name != "isoperimetric" {
            assert_eq!(v.status, Status::Equality, "{v:?}");
        }
    }
}

#[test]
fn reports_are_byte_identical_without_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "p.json",
        r#"{"kind": "capacity", "surface": {"type": "perturbed_cap", "eps": 0.1}, "grid": {"m_theta": 32, "m_s": 64}, "output": "p"}"#,
    );
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let (code, _, err) = conecap(&["cap-solve", &cfg, "--out-dir", out.to_str().unwrap(), "--no-timestamp"]);
        assert_eq!(code, 0, "{err}");
        std::fs::read(out.join("p.json")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert!(v.get("generated_at").is_none());
    assert_eq!(v["scenario"]["grid"]["m_theta"], 32);
    assert_eq!(v["scenario"]["flow"]["dt"], 1e-3);

    let out = dir.path().join("c");
    let (code, _, _) = conecap(&["cap-solve", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("p.json")).unwrap()).unwrap();
    assert!(v["generated_at"].as_u64().unwrap() > 0);
}

#[test]
fn grid_scale_multiplies_resolution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"kind": "capacity", "grid": {"m_theta": 16, "m_s": 32}}"#);
    let (code, _, err) = conecap(&[
        "cap-solve", &cfg, "--out-dir", dir.path().to_str().unwrap(), "--no-timestamp", "--grid-scale", "2",
    ]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("capacity.json")).unwrap()).unwrap();
    assert_eq!(v["grid_scale"], 2);
    assert_eq!(v["result"]["capacity"]["m_theta"], 32);
    assert_eq!(v["result"]["capacity"]["m_s"], 64);
}

#[test]
fn invalid_configs_exit_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let bad_cone = write(dir.path(), "a.json", r#"{"kind": "capacity", "cone": {"n": 3, "theta0_deg": 120}}"#);
    let (code, _, err) = conecap(&["cap-solve", &bad_cone, "--out-dir", d]);
    assert_eq!(code, 2);
    assert!(err.contains("cone"), "{err}");
    let unknown = write(dir.path(), "b.json", "{\"kind\": \"capacity\",\n \"mesh\": 3}");
    let (code, _, err) = conecap(&["cap-solve", &unknown, "--out-dir", d]);
    assert_eq!(code, 2);
    assert!(err.contains("unknown field") && err.contains("line 2"), "{err}");
    let imcf = write(dir.path(), "c.json", r#"{"kind": "imcf"}"#);
    let (code, _, err) = conecap(&["cap-solve", &imcf, "--out-dir", d]);
    assert_eq!(code, 2);
    assert!(err.contains("expected"), "{err}");
}

#[test]
fn imcf_and_penrose_verbs_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let imcf = write(
        dir.path(),
        "f.json",
        r#"{"kind": "imcf", "cone": {"n": 3, "theta0_deg": 60}, "surface": {"type": "perturbed_cap", "eps": 0.2}, "grid": {"m_theta": 64}, "flow": {"t_end": 2.0, "dt": 0.002}}"#,
    );
    let (code, stdout, err) = conecap(&["imcf-run", &imcf, "--out-dir", d, "--no-timestamp"]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("imcf_trace.csv"));
    let trace = std::fs::read_to_string(dir.path().join("imcf_trace.csv")).unwrap();
    assert!(trace.starts_with("t,area,I,h,umbilicity,area_ratio_err"));
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("imcf.json")).unwrap()).unwrap();
    assert_eq!(v["result"]["h_monotone"], true);

    let pen = write(
        dir.path(),
        "m.json",
        r#"{"kind": "penrose", "schwarzschild": {"mass": 2.0}, "grid": {"m_theta": 32, "m_s": 64}}"#,
    );
    let (code, _, err) = conecap(&["penrose-check", &pen, "--out-dir", d, "--no-timestamp"]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("penrose.json")).unwrap()).unwrap();
    assert_eq!(v["result"]["factor_two_on_sigma"], true);
    assert!((v["result"]["mass_expansion"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert_eq!(v["result"]["verdicts"].as_array().unwrap().len(), 6);
}

#[test]
fn profile_csv_paths_resolve_next_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let cone = ConeSpec::half_space(3).unwrap();
    RadialGraph::perturbed_cap(cone, 200, 1.0, 0.1, 2)
        .unwrap()
        .write_csv(dir.path().join("shape.csv"))
        .unwrap();
    let cfg = write(
        dir.path(),
        "s.json",
        r#"{"kind": "capacity", "surface": {"type": "profile_csv", "path": "shape.csv"}, "grid": {"m_theta": 32, "m_s": 64}}"#,
    );
    let out = dir.path().join("out");
    let (code, _, err) = conecap(&["cap-solve", &cfg, "--out-dir", out.to_str().unwrap(), "--no-timestamp"]);
    assert_eq!(code, 0, "{err}");
}

#[test]
fn sweep_writes_one_row_per_point_and_flags_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let cfg = write(
        dir.path(),
        "s.json",
        r#"{"kind": "sweep", "grid": {"m_theta": 32, "m_s": 64}, "sweep": {"kind": "capacity", "eps": [0.0, 0.1], "mode": [2, 4], "workers": 2}}"#,
    );
    let (code, _, err) = conecap(&["sweep", &cfg, "--out-dir", d, "--no-timestamp"]);
    assert_eq!(code, 0, "{err}");
    let mut rdr = csv::Reader::from_path(dir.path().join("sweep.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(&headers[0], "index");
    assert!(headers.iter().any(|h| h == "min_margin"));
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| &r[headers.iter().position(|h| h == "status").unwrap()] == "ok"));

    // a point that is not mean convex cannot be flowed
    let cfg = write(
        dir.path(),
        "t.json",
        r#"{"kind": "sweep", "cone": {"n": 3, "theta0_deg": 60}, "grid": {"m_theta": 64}, "flow": {"t_end": 0.1}, "output": "flows", "sweep": {"kind": "imcf", "eps": [0.05, 0.2], "mode": [4]}}"#,
    );
    let (code, _, err) = conecap(&["sweep", &cfg, "--out-dir", d, "--no-timestamp"]);
    assert_eq!(code, 1);
    assert!(err.contains("point 1"), "{err}");
    assert!(dir.path().join("flows.csv").exists());
}
