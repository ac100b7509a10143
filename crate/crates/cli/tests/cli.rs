use std::process::{Command, Output};

use maxload::{rho, Distribution};
use serde_json::Value;

fn maxload(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxload"))
        .args(args)
        .env_remove("MAXLOAD_THREADS")
        .output()
        .expect("run maxload")
}

fn json(args: &[&str]) -> Value {
    let out = maxload(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn f(v: &Value, key: &str) -> f64 {
    v[key]
        .as_f64()
        .unwrap_or_else(|| panic!("missing {key} in {v}"))
}

#[test]
fn bound_examples() {
    let v = json(&["bound", "uniform:3", "--m", "3", "--k", "2"]);
    assert!((f(&v, "lower") - 0.6151).abs() < 1e-4);
    assert_eq!(f(&v, "upper"), 1.0);
    assert!((f(&v, "rho") - 0.866).abs() < 1e-3);
    assert_eq!(v["cor2_upper"]["regime"], "vacuous");

    let v = json(&["bound", "uniform:16", "--m", "8", "--k", "2"]);
    assert!((f(&v, "rho") - 1.0).abs() < 1e-15);

    let v = json(&["bound", "inline:1", "--m", "5", "--k", "3"]);
    assert_eq!((f(&v, "lower"), f(&v, "upper")), (1.0, 1.0));
}

#[test]
fn restricted_bound_uses_zero_based_subset() {
    let v = json(&[
        "bound",
        "uniform:4",
        "--m",
        "4",
        "--k",
        "2",
        "--subset",
        "2,1",
    ]);
    assert_eq!(v["subset"], serde_json::json!([1, 2]));
    assert!((f(&v, "upper") - 0.75).abs() < 1e-15);
    assert_eq!(v["upper_source"], "restricted");
    let e = json(&[
        "oracle",
        "uniform:4",
        "--m",
        "4",
        "--k",
        "2",
        "--subset",
        "1,2",
    ]);
    assert!((f(&e, "probability") - 0.5).abs() < 1e-15);
}

#[test]
fn rho_round_trips_through_json() {
    for (spec, dist) in [
        ("linear:7", Distribution::linear(7).unwrap()),
        ("zipf:9:1.3", Distribution::zipf(9, 1.3).unwrap()),
        (
            "inline:3,1,1,5",
            maxload::validate_distribution(&[3.0, 1.0, 1.0, 5.0]).unwrap(),
        ),
    ] {
        let v = json(&["bound", spec, "--m", "13", "--k", "3"]);
        let expect = rho(13, 3.0, &dist).unwrap().value();
        assert!((f(&v, "rho") - expect).abs() <= 1e-12, "{spec}");
    }
}

#[test]
fn solve_examples() {
    assert_eq!(
        f(&json(&["solve", "uniform:100", "--k", "2"]), "m_star"),
        20.0
    );
    assert!((f(&json(&["solve", "uniform:27", "--m", "27"]), "k_star") - 3.0).abs() < 1e-9);
    assert_eq!(f(&json(&["solve", "inline:1", "--m", "9"]), "k_star"), 9.0);
    let v = json(&["solve", "uniform:27", "--m", "27", "--delta", "0.5"]);
    assert_eq!(f(&v, "k_low"), 1.0);
}

#[test]
fn wait_examples() {
    let v = json(&["wait", "uniform:365", "--k", "2"]);
    assert!((f(&v, "quadrature_ew") - 24.6166).abs() < 1e-4);
    assert!((f(&v, "cor6_lower") - 9.371).abs() < 1e-3);
    assert!((f(&v, "cor6_upper") - 38.210).abs() < 1e-3);
    assert_eq!(
        f(&json(&["wait", "inline:1", "--k", "4"]), "quadrature_ew"),
        4.0
    );
    assert_eq!(
        f(&json(&["wait", "uniform:50", "--k", "1"]), "quadrature_ew"),
        1.0
    );
    let v = json(&[
        "wait",
        "uniform:100",
        "--k",
        "2",
        "--trials",
        "2000",
        "--seed",
        "3",
    ]);
    let scaled = f(&v, "scaled_ew");
    assert!(f(&v, "c_k") <= scaled && scaled <= 2.0);
    let sim = &v["sim"];
    assert!((f(sim, "mean") - f(&v, "quadrature_ew")).abs() < 4.0 * f(sim, "std_error"));
}

#[test]
fn simulate_reports_interval() {
    let v = json(&[
        "simulate",
        "uniform:3",
        "--m",
        "3",
        "--k",
        "2",
        "--trials",
        "20000",
        "--seed",
        "1",
    ]);
    assert!(f(&v, "wilson_low") <= 7.0 / 9.0 && 7.0 / 9.0 <= f(&v, "wilson_high"));
}

#[test]
fn sweep_csv_shape_and_invariants() {
    let out = maxload(&[
        "sweep",
        "uniform:6",
        "--k",
        "2,3",
        "--rho-max",
        "2",
        "--points",
        "12",
        "--trials",
        "500",
        "--seed",
        "5",
        "--exact",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("dist,k,m,rho,lower,upper,empirical,wilson_low,wilson_high,exact")
    );
    let d = Distribution::uniform(6).unwrap();
    let mut rows = 0;
    for line in lines {
        let c: Vec<&str> = line.split(',').collect();
        assert_eq!(c.len(), 10);
        assert_eq!(c[0], "uniform:6");
        let num = |i: usize| c[i].parse::<f64>().unwrap();
        let (k, m) = (c[1].parse::<u32>().unwrap(), c[2].parse::<u64>().unwrap());
        assert!((num(3) - rho(m, f64::from(k), &d).unwrap().value()).abs() <= 1e-12);
        assert!(num(4) <= num(5));
        assert!(num(4) - 1e-12 <= num(9) && num(9) <= num(5) + 1e-12);
        assert!(num(7) <= num(6) && num(6) <= num(8));
        rows += 1;
    }
    assert!(rows > 10);
    assert!(text.ends_with('\n') && !text.contains('\r'));
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| maxload(args).status.code();
    // Parse errors.
    assert_eq!(
        code(&["bound", "uniform:x", "--m", "3", "--k", "2"]),
        Some(2)
    );
    assert_eq!(
        code(&["bound", "inline:1,-1", "--m", "3", "--k", "2"]),
        Some(2)
    );
    assert_eq!(code(&["bound", "uniform:3", "--m", "3"]), Some(2));
    assert_eq!(
        code(&["solve", "uniform:3", "--m", "3", "--k", "2"]),
        Some(2)
    );
    // Domain errors.
    assert_eq!(
        code(&["bound", "uniform:3", "--m", "3", "--k", "0"]),
        Some(3)
    );
    assert_eq!(
        code(&[
            "bound",
            "uniform:3",
            "--m",
            "3",
            "--k",
            "2",
            "--subset",
            "3"
        ]),
        Some(3)
    );
    assert_eq!(
        code(&["solve", "uniform:3", "--k", "2", "--delta", "1.5"]),
        Some(3)
    );
    assert_eq!(
        code(&[
            "sweep",
            "uniform:20",
            "--k",
            "20",
            "--exact",
            "--trials",
            "10"
        ]),
        Some(3)
    );
    assert_eq!(
        code(&["sweep", "uniform:20", "--k", "2", "--points", "1"]),
        Some(3)
    );
}

#[test]
fn parse_error_names_token() {
    let out = maxload(&["bound", "gamma:3", "--m", "3", "--k", "2"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("`gamma`"));
}

#[test]
fn bad_thread_count_is_a_parse_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_maxload"))
        .args(["bound", "uniform:3", "--m", "3", "--k", "2"])
        .env("MAXLOAD_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fast_check_passes() {
    let out = maxload(&["check", "--level", "fast", "--seed", "1"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(out.status.code(), Some(0), "{v}");
    assert_eq!(v["passed"], true);
    assert_eq!(v["criteria"].as_array().unwrap().len(), 7);
}

#[test]
fn corrupted_bound_fails_check() {
    let out = maxload(&["check", "--level", "fast", "--inject-fault", "halve-upper"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], false);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sandwich correctness"));
    let out = maxload(&["check", "--inject-fault", "double-lower"]);
    assert_eq!(out.status.code(), Some(1));
}
