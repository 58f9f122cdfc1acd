use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn errw(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_errw"))
        .args(args)
        .current_dir(dir)
        .env_remove("ERRW_OUT_DIR")
        .output()
        .expect("spawn errw")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn oracle_reports_localization_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let o = errw(dir.path(), &["oracle", "--alpha", "0.9", "--rho", "1.5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let first = text.lines().next().unwrap();
    assert!(first.contains("Localizes"), "{text}");
    assert!(first.contains("part 4"), "{text}");
}

#[test]
fn oracle_outside_the_box_uses_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = errw(dir.path(), &["oracle", "--alpha", "1.2", "--rho", "0.4"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("theory_phase: n/a"), "{text}");
    assert!(text.contains("table1_phase: Transient"), "{text}");
}

#[test]
fn oracle_path_table_has_unit_mass() {
    let dir = tempfile::tempdir().unwrap();
    let o = errw(
        dir.path(),
        &["oracle", "--scheme", "davis-example", "--depth", "10"],
    );
    assert!(o.status.success());
    let table = fs::read_to_string(dir.path().join("oracle_paths.csv")).unwrap();
    let total: f64 = table
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("moves"))
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-10);
    assert!(table.starts_with("# errw "));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        errw(dir.path(), &["simulate", "--horizon", "0"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        errw(dir.path(), &["simulate", "--scheme", "nope"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        errw(dir.path(), &["simulate", "--stop", "escape"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(errw(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        errw(dir.path(), &["sweep", "--alphas", "0.3", "--runs", "1"])
            .status
            .code(),
        Some(1)
    );
    fs::write(dir.path().join("bad.toml"), "[run]\nhorizn = 10\n").unwrap();
    assert_eq!(
        errw(dir.path(), &["--config", "bad.toml", "simulate"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(errw(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn calibration_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = errw(
        dir.path(),
        &[
            "calibrate",
            "--runs",
            "4",
            "--horizon",
            "50",
            "--points",
            "0.9:0.05,0.9:1.5",
        ],
    );
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(!dir.path().join("thresholds.toml").exists());
}

#[test]
fn config_file_values_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "[scheme]\npreset = \"power-dt\"\nalpha = 0.8\nrho = 0.7\n\n[run]\nhorizon = 500\nruns = 3\nseed = 9\n\n[output]\ndir = \"out\"\n",
    )
    .unwrap();
    let o = errw(
        dir.path(),
        &["--config", "run.toml", "simulate", "--runs", "2"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("out/simulate.jsonl")).unwrap();
    assert!(text.contains("# alpha = 0.8\n"));
    assert!(text.contains("# rho = 0.7\n"));
    assert!(text.contains("# runs = 2\n"));
    assert!(text.contains("# seed = 9\n"));
    let runs = text
        .lines()
        .filter(|l| l.starts_with("{\"final_position\""))
        .count();
    assert_eq!(runs, 2);
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_errw"))
        .args(["diagnose", "--horizon", "1000", "--stride", "10"])
        .current_dir(dir.path())
        .env("ERRW_OUT_DIR", "envout")
        .output()
        .unwrap();
    assert!(o.status.success());
    let m = fs::read_to_string(dir.path().join("envout/diagnose_martingale.csv")).unwrap();
    assert!(m.lines().any(|l| l == "n,M,Theta,S2"));
    let n = fs::read_to_string(dir.path().join("envout/diagnose_crossings.csv")).unwrap();
    assert!(n.lines().any(|l| l == "x,N"));
}

#[test]
fn sweep_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let o = errw(
        dir.path(),
        &[
            "sweep",
            "--alphas",
            "0.9",
            "--rhos",
            "0.05,1.5",
            "--runs",
            "3",
            "--horizon",
            "2000",
            "--seed",
            "5",
        ],
    );
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(
        rows[0],
        "alpha,rho,n_runs,horizon,frac_recurrent_like,frac_transient_like,frac_localized_like,theory_label,master_seed"
    );
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0.9,0.05,3,2000,"));
    assert!(rows[1].ends_with(",Recurrent,5"));
    assert!(rows[2].ends_with(",Localizes,5"));
}

#[test]
fn urn_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = errw(
        dir.path(),
        &[
            "urn",
            "--gamma",
            "1.5",
            "--rho",
            "0.5",
            "--n",
            "10",
            "--samples",
            "100",
            "--seed",
            "1",
        ],
    );
    assert!(o.status.success());
    let samples = fs::read_to_string(dir.path().join("urn.csv")).unwrap();
    let rows: Vec<&str> = samples.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "method,gamma,rho,n,b_star,h,censored");
    assert_eq!(rows.len(), 201);
    let bound = fs::read_to_string(dir.path().join("urn_bound.csv")).unwrap();
    assert_eq!(bound.lines().filter(|l| l.ends_with(",true")).count(), 2);
}

#[test]
fn davis_stay_fraction_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = errw(
        dir.path(),
        &[
            "simulate",
            "--scheme",
            "davis-example",
            "--stop",
            "escape:2,visits:10000@1",
            "--runs",
            "2000",
            "--seed",
            "7",
        ],
    );
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("simulate.jsonl")).unwrap();
    let agg = text.lines().last().unwrap();
    let v: serde_json::Value = serde_json::from_str(agg).unwrap();
    let stay = v["aggregate"]["stay_fraction"].as_f64().unwrap();
    // 2000 runs: standard error about 0.0104
    assert!((stay - 0.682_569_450_330_857_8).abs() < 0.04, "{stay}");
}

#[test]
fn identical_invocations_give_identical_bytes() {
    let invocations: Vec<Vec<&str>> = vec![
        vec![
            "simulate",
            "--rho",
            "0.6",
            "--horizon",
            "20000",
            "--runs",
            "6",
            "--seed",
            "3",
            "--trajectory",
            "--diagnostics",
            "--dump-runs",
            "2",
        ],
        vec![
            "sweep",
            "--alphas",
            "0.9",
            "--rhos",
            "0.45,1.5",
            "--runs",
            "4",
            "--horizon",
            "5000",
            "--seed",
            "3",
        ],
        vec!["urn", "--n", "10,100", "--samples", "50", "--seed", "3"],
        vec![
            "diagnose",
            "--rho",
            "0.6",
            "--horizon",
            "30000",
            "--seed",
            "3",
        ],
        vec!["oracle", "--alpha", "0.9", "--rho", "0.4", "--depth", "8"],
    ];
    for args in invocations {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let oa = errw(a.path(), &args);
        let ob = errw(b.path(), &args);
        assert!(oa.status.success() && ob.status.success(), "{args:?}");
        assert_eq!(oa.stdout, ob.stdout);
        let mut files: Vec<_> = fs::read_dir(a.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        files.sort();
        assert!(!files.is_empty());
        for f in files {
            let x = fs::read(a.path().join(&f)).unwrap();
            let y = fs::read(b.path().join(&f)).unwrap();
            assert_eq!(x, y, "{args:?}: {f:?} differs");
            assert!(x.starts_with(b"# errw "), "{f:?} lacks a header");
        }
    }
}
