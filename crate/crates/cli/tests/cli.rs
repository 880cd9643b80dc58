use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bmt_core::{generate_dgp, simulation::replication_rng, write_dataset, DgpConfig, ReportBundle};

fn bmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bmt")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_sample(dir: &Path) {
    let mut d = DgpConfig::new(120, 12, 2, 0.5, 2.0, 0.25);
    d.seed = 3;
    let real = generate_dgp(&d, &mut replication_rng(3, 0, 0)).unwrap();
    write_dataset(&dir.join("data.csv"), &real.dataset, "y").unwrap();
    fs::write(
        dir.join("run.toml"),
        "input = \"data.csv\"\ntarget = \"y\"\ncontrols = [\"y_lag1\"]\n\
         methods = [\"bmt\", \"ocmt\", \"lasso_bic\"]\nhorizons = [1, 2]\n",
    )
    .unwrap();
}

#[test]
fn metrics_example() {
    let o = bmt(&["metrics", "--selected", "1,2,3,4", "--true", "1,2", "--n", "100"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let line = out.lines().find(|l| l.starts_with("mcc ")).unwrap();
    let v: f64 = line[4..].parse().unwrap();
    assert!((v - 0.6999).abs() < 1e-4, "{v}");
}

#[test]
fn wedge_example() {
    let o = bmt(&["theory", "wedge", "--alpha", "0.2"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "(0.5, 0.8333)");
}

#[test]
fn theory_subcommands_run() {
    for args in [
        vec!["theory", "thresholds", "--beta", "1,0.5"],
        vec!["theory", "noncentrality", "--beta", "1", "--rho", "0.5", "--t", "50"],
        vec!["theory", "irrepresentable", "--loadings", "0.5,0.5,0.5", "--support", "1,2"],
        vec![
            "theory", "dominance", "--loadings", "0.5,0.5,0.5,0.4,0.5", "--others", "2,3",
            "--proxies", "4,5",
        ],
    ] {
        let o = bmt(&args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!stdout(&o).is_empty());
    }
    let o = bmt(&["theory", "thresholds", "--beta", "1,0.5"]);
    assert_eq!(stdout(&o).trim(), "0.666667,1.000000");
}

#[test]
fn exit_codes() {
    assert_eq!(bmt(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(bmt(&["metrics", "--n"]).status.code(), Some(1));
    assert_eq!(bmt(&["metrics", "--selected", "0", "--true", "1", "--n", "3"]).status.code(), Some(1));
    assert_eq!(bmt(&["theory", "wedge", "--alpha", "2"]).status.code(), Some(1));
    assert_eq!(bmt(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "target = \"y\"\n").unwrap();
    let missing = dir.path().join("missing.csv");
    let o = bmt(&["select", "--config", cfg.to_str().unwrap(), "--input", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(&cfg, "target = \"y\"\nno_such_key = 1\n").unwrap();
    assert_eq!(bmt(&["select", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "y,a,b\n1,2,3\n4,x,6\n7,8,9\n").unwrap();
    let o = bmt(&["select", "--config", cfg.to_str().unwrap(), "--input", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn select_and_forecast_reports() {
    let dir = tempfile::tempdir().unwrap();
    write_sample(dir.path());
    let cfg = dir.path().join("run.toml");
    let o = bmt(&["select", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let b = ReportBundle::from_json(&stdout(&o)).unwrap();
    assert_eq!(b.methods.len(), 3);
    assert_eq!(b.t, 120);
    assert_eq!(b.provenance.config_hash.len(), 64);
    assert!(b.methods[0].selected.contains(&"x1".to_string()));

    let out = dir.path().join("f.json");
    let o = bmt(&["forecast", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let b = ReportBundle::from_json(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!((b.t, b.t_eval), (96, 24));
    for m in &b.methods {
        assert_eq!(m.forecasts.len(), 2);
        assert!(m.forecasts.iter().all(|f| f.rmsfe.is_finite() && f.rmsfe > 0.0));
    }
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("g.toml");
    fs::write(
        &grid,
        "t = [80]\nn = [10]\nk = [2]\nvif = [2.0, 4.0]\npi = [0.25]\nmethods = [\"bmt\", \"ocmt\"]\n",
    )
    .unwrap();
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let o = bmt(&[
            "simulate", "--grid", grid.to_str().unwrap(), "--reps", "10", "--seed", "7",
            "--workers", workers, "--output", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "3");
    for f in ["mcc.csv", "model_size.csv", "rmse.csv", "grid.json"] {
        let x = fs::read(a.join(f)).unwrap();
        assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f}");
        assert_eq!(x, fs::read(c.join(f)).unwrap(), "{f}");
    }
    let mcc = fs::read_to_string(a.join("mcc.csv")).unwrap();
    assert_eq!(mcc.lines().count(), 3);
    assert!(mcc.starts_with("design,t,n,k,alpha,vif,pi,bmt,ocmt\n"));
}
