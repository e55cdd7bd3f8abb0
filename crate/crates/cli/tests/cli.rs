use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn jdd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jdd"))
        .current_dir(dir)
        .env_remove("JDD_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = jdd(dir, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn setup() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("sim.json"),
        r#"{"drift":[{"kind":"mean_reversion","theta":1.5}],"sigma_g":0.08,"lambda":0.5,
            "mu_beta":0.0,"sigma_beta":0.05,"dt":0.05,"steps":160,"x0":[0.2],
            "schedule":[{"time":1.0,"goal":1},{"time":5.0,"goal":0}]}"#,
    )
    .unwrap();
    fs::write(
        dir.path().join("goals.json"),
        r#"{"goals":[{"label":"cup","pos":[0.2]},{"label":"box","pos":[1.0]}]}"#,
    )
    .unwrap();
    ok(
        dir.path(),
        &["simulate", "--config", "sim.json", "--goals", "goals.json", "--out", "traj.csv", "--quiet"],
    );
    dir
}

#[test]
fn no_args_prints_usage_and_exits_2() {
    let o = jdd(Path::new("."), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn even_window_is_rejected() {
    let dir = setup();
    let o = jdd(dir.path(), &["km", "--traj", "traj.csv", "--window", "20"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("window must be odd"));
}

#[test]
fn unknown_flag_is_rejected() {
    let o = jdd(Path::new("."), &["km", "--bogus"]);
    assert!(!o.status.success());
}

#[test]
fn simulate_defaults_to_seed_zero_and_env_seed_overrides() {
    let dir = setup();
    let a = fs::read_to_string(dir.path().join("traj.csv")).unwrap();
    assert!(a.starts_with("# config_hash="));
    assert!(a.lines().next().unwrap().ends_with("seed=0"));
    let again = ok(dir.path(), &["simulate", "--config", "sim.json", "--goals", "goals.json", "--quiet"]);
    assert_eq!(a, again);
    let env = Command::new(env!("CARGO_BIN_EXE_jdd"))
        .current_dir(dir.path())
        .env("JDD_SEED", "5")
        .args(["simulate", "--config", "sim.json", "--goals", "goals.json", "--quiet"])
        .output()
        .unwrap();
    let env = String::from_utf8(env.stdout).unwrap();
    assert!(env.lines().next().unwrap().ends_with("seed=5"));
    assert_ne!(env, a);
    let flag = Command::new(env!("CARGO_BIN_EXE_jdd"))
        .current_dir(dir.path())
        .env("JDD_SEED", "5")
        .args(["simulate", "--config", "sim.json", "--goals", "goals.json", "--quiet", "--seed", "0"])
        .output()
        .unwrap();
    assert_eq!(String::from_utf8(flag.stdout).unwrap(), a);
}

#[test]
fn km_columns() {
    let dir = setup();
    let out = ok(dir.path(), &["km", "--traj", "traj.csv", "--dim", "0"]);
    assert_eq!(out.lines().nth(1), Some("t,M1,M2,M4,M6,sigma_beta_sq,lambda,sigma_g_sq"));
    assert_eq!(out.lines().count(), 2 + 160);
}

#[test]
fn pipeline_from_goal_trace_to_reach() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["infer-goals", "--traj", "traj.csv", "--goals", "goals.json", "--mode", "det", "--out", "g.csv", "--quiet"]);
    let g = fs::read_to_string(d.join("g.csv")).unwrap();
    assert_eq!(g.lines().nth(1), Some("t,g_x,S_settled,S_move,S_jump,switch"));
    ok(d, &["fit-sindy", "--traj", "traj.csv", "--goal-trace", "g.csv", "--goals", "goals.json", "--out", "s.json"]);
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("s.json")).unwrap()).unwrap();
    assert_eq!(s["kind"], "sindy");
    assert!(s["models"][0]["m1"]["path"].is_array());
    fs::write(d.join("labels.csv"), {
        let mut l = String::from("label\n");
        for i in 0..160 {
            l.push_str(if (20..100).contains(&i) { "box\n" } else { "0\n" });
        }
        l
    })
    .unwrap();
    ok(d, &["fit-nll", "--traj", "traj.csv", "--goals", "goals.json", "--labels", "labels.csv", "--out", "n.json"]);
    let n: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("n.json")).unwrap()).unwrap();
    assert_eq!(n["model"]["params"].as_array().unwrap().len(), 2);
    assert!(n["model"]["fits"][0][0]["iterations"].as_u64().unwrap() > 0);
    for m in ["s.json", "n.json"] {
        let p: serde_json::Value =
            serde_json::from_str(&ok(d, &["predict", "--model", m, "--x0", "0.5", "--goal", "1"])).unwrap();
        assert!(p["map"][0].as_f64().unwrap().is_finite());
        let grid = ok(d, &["reach", "--model", m, "--x0", "0.5", "--slices", "0.5,1", "--cells", "11"]);
        assert_eq!(grid.lines().nth(1), Some("t,x,logp"));
        assert_eq!(grid.lines().count(), 2 + 3 * 11);
        assert!(grid.lines().last().unwrap().starts_with("collapsed,"));
    }
}

#[test]
fn plotdata_kinds() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["fit-nll", "--traj", "traj.csv", "--goals", "goals.json", "--out", "n.json"]);
    let pdf = ok(d, &["plotdata", "pdf-curve", "--model", "n.json", "--x0", "0.5", "--cells", "9"]);
    assert_eq!(pdf.lines().nth(1), Some("curve,x,pdf,logpdf"));
    assert_eq!(pdf.lines().count(), 2 + 2 * 9);
    let jm = ok(d, &["plotdata", "jump-markers", "--traj", "traj.csv", "--quiet"]);
    assert_eq!(jm.lines().nth(1), Some("dim,step,t,increment"));
    let gt = ok(d, &["plotdata", "goal-trace", "--traj", "traj.csv", "--goals", "goals.json", "--mode", "nn"]);
    assert!(gt.starts_with("# config_hash="));
    let rs = ok(d, &["plotdata", "reach-slice", "--model", "n.json", "--x0", "0.5", "--slices", "1", "--cells", "7", "--quiet"]);
    assert_eq!(rs.lines().count(), 2 + 7);
}

#[test]
fn playback_and_eval_are_reproducible() {
    let dir = setup();
    let d = dir.path();
    let pb = ok(
        d,
        &["playback", "--traj", "traj.csv", "--goals", "goals.json", "--strategy", "sindy-det", "--mode", "offline", "--quiet"],
    );
    let v: serde_json::Value = serde_json::from_str(&pb).unwrap();
    assert_eq!(v["predictions"].as_array().unwrap().len(), 160);
    fs::create_dir(d.join("runs")).unwrap();
    fs::copy(d.join("traj.csv"), d.join("runs/a.csv")).unwrap();
    let args = ["eval", "--dir", "runs", "--goals", "goals.json", "--strategies", "nll-nn,sindy-det", "--quiet"];
    let a = ok(d, &[&args[..], &["--out", "r1/report.json"]].concat());
    let b = ok(d, &[&args[..], &["--out", "r2/report.json"]].concat());
    assert_eq!(a, b);
    for f in ["report.json", "report.cells.csv", "report.summary.csv", "report.txt"] {
        assert_eq!(fs::read(d.join("r1").join(f)).unwrap(), fs::read(d.join("r2").join(f)).unwrap(), "{f}");
    }
    let cells = fs::read_to_string(d.join("r1/report.cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 2 + 2);
    let bad = jdd(d, &["eval", "--dir", "runs", "--goals", "goals.json", "--strategies", "nll-xyz"]);
    assert!(!bad.status.success());
}
