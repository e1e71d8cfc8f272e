use std::fs;
use std::process::{Command, Output};

fn dcl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcl"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("dcl runs")
}

#[test]
fn bounds_report_without_running() {
    let out = dcl(&["cs", "--seed", "4", "--bounds"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for key in ["rho_min", "kappa", "2rho_min/L", "q ", "eta_max(tau=0)"] {
        assert!(text.contains(key), "missing {key} in\n{text}");
    }
    let geo = String::from_utf8(dcl(&["geomedian", "--bounds"]).stdout).unwrap();
    assert!(geo.contains("unbounded"));
}

#[test]
fn configuration_errors_exit_2() {
    for args in [
        vec!["lasso"],
        vec!["cs", "--algo", "admm"],
        vec!["cs", "--horizon-ms", "0"],
        vec!["cs", "--record-every", "0"],
        vec!["cs", "--alpha", "-1"],
        vec!["matcomp", "--algo", "prox-dgd"],
        vec!["cs", "--seed", "minus-one"],
    ] {
        let out = dcl(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn divergence_exits_3_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("run.csv");
    let out = dcl(&[
        "cs", "--algo", "pg-extra", "--alpha", "50", "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!csv.exists());
}

#[test]
fn writes_reproducible_csv() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let out = dcl(&[
            "geomedian",
            "--algo",
            "pg-extra,async-pd",
            "--seed",
            "7",
            "--horizon-ms",
            "400",
            "--record-every",
            "5",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read_to_string(path).unwrap()
    };
    let first = run("a.csv");
    assert_eq!(first, run("b.csv"));
    assert_eq!(first.lines().next(), Some("algo,seed,k,sim_time_ms,rel_error,residual"));
    assert!(first.lines().skip(1).any(|l| l.starts_with("pg-extra,7,")));
    assert!(first.lines().skip(1).any(|l| l.starts_with("async-pd,7,")));

    let stdout = dcl(&[
        "geomedian", "--algo", "pg-extra,async-pd", "--seed", "7", "--horizon-ms", "400",
        "--record-every", "5",
    ]);
    assert_eq!(String::from_utf8(stdout.stdout).unwrap(), first);
}
