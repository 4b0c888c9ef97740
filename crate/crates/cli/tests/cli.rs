use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

const DISK: &str = r#"{"domain": {"type": "ball", "center": [0, 0], "radius": 1}, "eps": 0.2}"#;

fn curvgame(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_curvgame")).args(args).output().expect("spawn curvgame");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_writes_a_converged_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", DISK);
    let out = tmp.path().join("run");
    let (code, err) = curvgame(&["solve", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(code, 0, "{err}");
    let m = json(&out.join("solve_manifest.json"));
    assert_eq!(m["converged"], true);
    let tol = m["config"]["solver"]["tol_iter"].as_f64().unwrap();
    assert!(m["residual"].as_f64().unwrap() < tol);
    assert_eq!(m["config"]["solver"]["k"], 0.5);
    let text = fs::read_to_string(out.join("field.dat")).unwrap();
    let header: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(header["dim"], 2);
    assert_eq!(header["meta"]["config"], m["config"]);
}

#[test]
fn solve_is_bitwise_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", DISK);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(curvgame(&["solve", "--config", &cfg, "--out", s(&a)]).0, 0);
    assert_eq!(curvgame(&["solve", "--config", &cfg, "--out", s(&b), "--threads", "1"]).0, 0);
    assert_eq!(fs::read(a.join("field.dat")).unwrap(), fs::read(b.join("field.dat")).unwrap());
}

#[test]
fn malformed_config_fails_before_any_output() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    for (i, text) in [r#"{"eps": "#, r#"{"epsilon": 0.2}"#, r#"{"domain": {"type": "torus"}}"#].iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("bad{i}.json"), text);
        let (code, err) = curvgame(&["solve", "--config", &cfg, "--out", s(&out)]);
        assert_eq!(code, 1, "{text}: {err}");
        assert!(!out.exists());
    }
    let (code, _) = curvgame(&["solve", "--config", &tmp.path().join("missing.json").to_string_lossy(), "--out", s(&out)]);
    assert_eq!(code, 1);
    assert!(!out.exists());
}

#[test]
fn invalid_parameters_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", DISK);
    let out = tmp.path().join("run");
    for extra in [
        &["--grid-h", "0.3"][..],
        &["--eps", "0"],
        &["--eps", "-0.1"],
        &["--axis-count", "1"],
        &["--quad-order", "0"],
        &["--tol-iter", "0"],
        &["--k", "-1"],
        &["--threads", "0"],
    ] {
        let mut args = vec!["solve", "--config", &cfg, "--out", s(&out)];
        args.extend_from_slice(extra);
        let (code, err) = curvgame(&args);
        assert_eq!(code, 1, "{extra:?}: {err}");
        assert!(!out.exists(), "{extra:?}");
    }
    assert_eq!(curvgame(&["solve", "--out", s(&out)]).0, 1);
    assert_eq!(curvgame(&["frobnicate"]).0, 1);
    assert_eq!(curvgame(&["--help"]).0, 0);
}

#[test]
fn non_convergence_exits_2_with_a_partial_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", DISK);
    let out = tmp.path().join("run");
    let (code, err) = curvgame(&["solve", "--config", &cfg, "--max-iter", "3", "--out", s(&out)]);
    assert_eq!(code, 2, "{err}");
    assert!(out.join("field.dat").exists());
    assert_eq!(json(&out.join("solve_manifest.json"))["converged"], false);
}

#[test]
fn simulate_is_reproducible_and_thread_independent() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", DISK);
    let solved = tmp.path().join("solved");
    assert_eq!(curvgame(&["solve", "--config", &cfg, "--out", s(&solved)]).0, 0);
    let field = solved.join("field.dat");
    let run = |name: &str, threads: &str| {
        let out = tmp.path().join(name);
        let args = [
            "simulate", "--field", s(&field), "--point", "0.3,0.1", "--point", "-0.5,0", "--n-episodes", "3000",
            "--seed", "11", "--traces", "3", "--threads", threads, "--out", s(&out),
        ];
        let (code, err) = curvgame(&args);
        assert_eq!(code, 0, "{err}");
        out
    };
    let (a, b) = (run("a", "1"), run("b", "4"));
    for f in ["estimate.json", "traces.jsonl"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let est = json(&a.join("estimate.json"));
    let rows = est["estimates"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["seed"], 12);
    assert_eq!(est["config"]["eps"], 0.2);
    assert_eq!(fs::read_to_string(a.join("traces.jsonl")).unwrap().lines().count(), 6);
    let other = tmp.path().join("c");
    let args = ["simulate", "--field", s(&field), "--point", "0.3,0.1", "--n-episodes", "3000", "--seed", "12", "--out", s(&other)];
    assert_eq!(curvgame(&args).0, 0);
    assert_ne!(json(&other.join("estimate.json"))["estimates"][0], rows[0]["estimate"]);
}

#[test]
fn a_step_larger_than_the_domain_ends_in_one_round() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"domain": {"type": "ball", "center": [0, 0], "radius": 0.1}, "eps": 0.5,
            "paul": "mirror", "carol": {"fixed": [0, 1]}, "n_episodes": 50}"#,
    );
    let out = tmp.path().join("run");
    let (code, err) = curvgame(&["simulate", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(code, 0, "{err}");
    let e = &json(&out.join("estimate.json"))["estimates"][0]["estimate"];
    assert!((e["mean"].as_f64().unwrap() - 0.25 * 0.5).abs() < 1e-15);
    assert_eq!(e["stderr"], 0.0);
    assert_eq!(e["mean_tau"], 1.0);
}

#[test]
fn simulate_rejects_bad_inputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", DISK);
    let out = tmp.path().join("run");
    for extra in [
        &["--paul", "gradient"][..],
        &["--paul", "mirror", "--carol", "aligned", "--point", "2,0"],
        &["--paul", "mirror", "--carol", "aligned", "--point", "0,0,0"],
        &["--paul", "fixed:0,0", "--carol", "aligned"],
        &["--paul", "mirror", "--carol", "aligned", "--n-episodes", "1"],
    ] {
        let mut args = vec!["simulate", "--config", &cfg, "--out", s(&out)];
        args.extend_from_slice(extra);
        let (code, err) = curvgame(&args);
        assert_eq!(code, 1, "{extra:?}: {err}");
        assert!(!out.exists());
    }
}

#[test]
fn diagnostic_mode_reports_the_martingale_checks() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", DISK);
    let out = tmp.path().join("run");
    let args = ["simulate", "--config", &cfg, "--mode", "diagnostic", "--paul", "mirror", "--z", "0.1,0", "--n-episodes", "4000", "--out", s(&out)];
    let (code, err) = curvgame(&args);
    assert_eq!(code, 0, "{err}");
    let d = json(&out.join("diagnostic.json"));
    assert_eq!(d["config"]["carol"], "radial");
    assert_eq!(d["reports"][0]["pass"], true);
}

#[test]
fn verify_passes_by_default_and_flags_a_wrong_constant() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("ok");
    let (code, err) = curvgame(&["verify", "--out", s(&out)]);
    assert_eq!(code, 0, "{err}");
    let v = json(&out.join("verify.json"));
    assert_eq!(v["pass"], true);
    let names: Vec<&str> = v["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    for n in ["band_lemma", "band_identity", "operator_forms", "oracle_identity", "dpp_convergence", "dpp_comparison", "oracle_convergence"] {
        assert!(names.contains(&n), "{n}");
    }
    let bad = tmp.path().join("bad");
    let (code, err) = curvgame(&["verify", "--k", "1.0", "--out", s(&bad)]);
    assert_eq!(code, 3);
    assert!(err.contains("oracle_identity"), "{err}");
    assert_eq!(json(&bad.join("verify.json"))["pass"], false);
}

fn node_count_inside_unit_disk(header: &Value) -> usize {
    let h = header["h"].as_f64().unwrap();
    let o: Vec<f64> = header["origin"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let n: Vec<usize> = header["shape"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as usize).collect();
    let mut count = 0;
    for i in 0..n[0] {
        for j in 0..n[1] {
            let (x, y) = (o[0] + i as f64 * h, o[1] + j as f64 * h);
            count += usize::from(x * x + y * y < 1.0);
        }
    }
    count
}

#[test]
fn levelset_sizes_are_nested() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", DISK);
    let solved = tmp.path().join("solved");
    assert_eq!(curvgame(&["solve", "--config", &cfg, "--out", s(&solved)]).0, 0);
    let field = solved.join("field.dat");
    let out = tmp.path().join("ls");
    let (code, err) = curvgame(&["levelset", "--field", s(&field), "--t-list", "0,0.1,0.25,0.4,0.6", "--out", s(&out)]);
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(out.join("levelset.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    let sizes: Vec<usize> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(sizes.windows(2).all(|w| w[1] <= w[0]), "{sizes:?}");
    let header: Value = serde_json::from_str(fs::read_to_string(&field).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(sizes[0], node_count_inside_unit_disk(&header));
    // Above the oracle's maximum both sets are empty.
    assert_eq!((sizes[4], rows[4][4]), (0, "0.0000000000000000e0"));
    let points = fs::read_to_string(out.join("levelset_points.csv")).unwrap();
    assert_eq!(points.lines().count() - 1, sizes.iter().sum::<usize>());
    assert_eq!(curvgame(&["levelset", "--out", s(&tmp.path().join("none"))]).0, 1);
}

#[test]
fn converge_writes_a_table_for_balls_only() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", DISK);
    let out = tmp.path().join("cv");
    let (code, err) = curvgame(&["converge", "--config", &cfg, "--eps-list", "0.2,0.1", "--t-list", "0.1,0.25", "--out", s(&out)]);
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(csv.starts_with("eps,h,iterations,sup_error,boundary_max,center_value,hausdorff_t0.1,hausdorff_t0.25\n"));
    assert_eq!(csv.lines().count(), 3);
    let m = json(&out.join("convergence_manifest.json"));
    assert_eq!(m["rows"][1]["h"], 0.05);
    assert_eq!(m["timings"].as_array().unwrap().len(), 2);

    let ellipse = write_config(
        tmp.path(),
        "e.json",
        r#"{"domain": {"type": "ellipse", "center": [0, 0], "semi_axes": [1, 0.5]}, "eps": 0.2}"#,
    );
    assert_eq!(curvgame(&["converge", "--config", &ellipse, "--out", s(&tmp.path().join("e"))]).0, 1);
    assert_eq!(curvgame(&["converge", "--config", &cfg, "--eps-list", "0.1,0.2", "--out", s(&tmp.path().join("u"))]).0, 1);
}
