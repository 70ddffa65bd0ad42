// frozen reference values keep the full precision of the high-precision
// computation they were copied from
#![allow(clippy::excessive_precision)]

//! End-to-end tests driving the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

/// Pinned copy of the kernel-mc config wire format; the round-trip test
/// fails if the echoed schema drifts.
#[derive(Debug, PartialEq, serde::Deserialize)]
struct KernelMcConfigSchema {
    command: String,
    kappa: f64,
    tau: f64,
    y_r: f64,
    y_theta: f64,
    paths: u64,
    dt: f64,
    seed: u64,
    r_min: f64,
    r_max: f64,
    n_r: usize,
    theta_min: f64,
    theta_max: f64,
    n_theta: usize,
    bridge: bool,
    output_dir: String,
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_conekernel"))
}

fn run(args: &[&str], out_dir: &Path) -> Output {
    let mut cmd = bin();
    cmd.args(args).arg("--out").arg(out_dir);
    cmd.output().expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("read {name}: {e}"))
}

#[test]
fn exponents_reports_expected_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "exponents",
            "--kappa",
            "1.5707963267948966",
            "--matrix",
            "4,0,1",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "report.json")).unwrap();
    let kt = report["results"]["kappa_tilde"].as_f64().unwrap();
    let lc = report["results"]["lambda_c"]["value"].as_f64().unwrap();
    assert!((kt - 2.2142974355881808).abs() < 1e-10, "kappa_tilde {kt}");
    assert!(
        (lc - std::f64::consts::PI / 2.2142974355881808).abs() < 1e-10,
        "lambda_c {lc}"
    );
}

#[test]
fn kappa_tilde_routes_agree_on_skew_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "kappa-tilde",
            "--kappa",
            "2.0",
            "--alpha",
            "0.3",
            "--matrix",
            "2,1,2",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "report.json")).unwrap();
    // reference from a 30-digit evaluation of the closed form
    let closed = report["results"]["closed_form"].as_f64().unwrap();
    assert!((closed - 2.2963668972524734).abs() < 1e-12, "{closed}");
    let disagreement = report["results"]["max_disagreement"].as_f64().unwrap();
    assert!(disagreement < 1e-10, "route disagreement {disagreement}");
}

#[test]
fn eigenvalue_cap_matches_bracket() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["eigenvalue-cap", "--kappa", "3.141592653589793"],
        dir.path(),
    );
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "report.json")).unwrap();
    let lambda = report["results"]["lambda"].as_f64().unwrap();
    let lower = report["results"]["lower"].as_f64().unwrap();
    let upper = report["results"]["upper"].as_f64().unwrap();
    assert!(
        (lambda - 2.0).abs() < 1e-7,
        "hemisphere eigenvalue {lambda}"
    );
    assert!((lower - std::f64::consts::LOG2_E).abs() < 1e-9);
    assert!((upper - 2.3438369879580846).abs() < 1e-8);
}

#[test]
fn malformed_matrix_exits_with_not_spd() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["exponents", "--kappa", "1.0", "--matrix", "1,2,1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"]["code"], "NOT_SPD");
}

#[test]
fn missing_parameter_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["eigenvalue-cap"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"]["code"], "MISSING_PARAMETER");
}

#[test]
fn cap_bracketing_failure_is_a_numerical_error() {
    // opening small enough to push the Legendre root past the scan cap
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["eigenvalue-cap", "--kappa", "0.01"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"]["code"], "ROOT_BRACKETING");
}

#[test]
fn config_file_supplies_values_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(
        &cfg_path,
        r#"{"kappa": 3.141592653589793, "matrix": "4,0,1"}"#,
    )
    .unwrap();

    // file only: kappa = pi maps to kappa_tilde = pi for any matrix
    let out_a = dir.path().join("a");
    let st = bin()
        .args(["exponents", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out_a)
        .output()
        .unwrap();
    assert!(
        st.status.success(),
        "{}",
        String::from_utf8_lossy(&st.stderr)
    );
    let report: serde_json::Value = serde_json::from_str(&read(&out_a, "report.json")).unwrap();
    assert!(
        (report["results"]["kappa_tilde"].as_f64().unwrap() - std::f64::consts::PI).abs() < 1e-12
    );

    // flag overrides the file kappa
    let out_b = dir.path().join("b");
    let st = bin()
        .args(["exponents", "--config"])
        .arg(&cfg_path)
        .args(["--kappa", "1.5707963267948966", "--out"])
        .arg(&out_b)
        .output()
        .unwrap();
    assert!(st.status.success());
    let report: serde_json::Value = serde_json::from_str(&read(&out_b, "report.json")).unwrap();
    assert!(
        (report["results"]["kappa_tilde"].as_f64().unwrap() - 2.2142974355881808).abs() < 1e-10
    );
}

#[test]
fn echoed_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "kernel-mc",
            "--kappa",
            "1.5707963267948966",
            "--tau",
            "0.25",
            "--y-r",
            "1.0",
            "--paths",
            "2000",
            "--dt",
            "0.002",
            "--seed",
            "5",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "report.json")).unwrap();

    // feed the echoed config back as a config file; outputs must be identical
    let cfg_path = dir.path().join("echo.json");
    std::fs::write(&cfg_path, report["config"].to_string()).unwrap();
    let out2 = dir.path().join("rerun");
    let st = bin()
        .args(["kernel-mc", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out2)
        .output()
        .unwrap();
    assert!(
        st.status.success(),
        "{}",
        String::from_utf8_lossy(&st.stderr)
    );

    let first: serde_json::Value = report;
    let second: serde_json::Value = serde_json::from_str(&read(&out2, "report.json")).unwrap();
    assert_eq!(first["results"], second["results"]);
    // the echoed config re-parses through the pinned schema, equivalently
    // up to the output directory
    let mut cfg_a: KernelMcConfigSchema = serde_json::from_value(first["config"].clone()).unwrap();
    let mut cfg_b: KernelMcConfigSchema = serde_json::from_value(second["config"].clone()).unwrap();
    cfg_a.output_dir.clear();
    cfg_b.output_dir.clear();
    assert_eq!(cfg_a, cfg_b);
    assert_eq!(
        read(dir.path(), "cells.csv"),
        read(&out2, "cells.csv"),
        "cells must be byte-identical"
    );
}

#[test]
fn kernel_mc_byte_identical_across_thread_counts_and_reruns() {
    // identical config (including the relative output_dir) at different
    // worker counts must produce byte-identical artifacts
    let args = [
        "kernel-mc",
        "--kappa",
        "1.5707963267948966",
        "--tau",
        "0.25",
        "--y-r",
        "1.0",
        "--paths",
        "20000",
        "--dt",
        "0.0025",
        "--seed",
        "42",
        "--out",
        "out",
    ];
    let mut outputs = Vec::new();
    for threads in ["1", "4", "4"] {
        let dir = tempfile::tempdir().unwrap();
        let st = bin()
            .args(args)
            .current_dir(dir.path())
            .env("CONEKERNEL_THREADS", threads)
            .output()
            .unwrap();
        assert!(
            st.status.success(),
            "{}",
            String::from_utf8_lossy(&st.stderr)
        );
        let out = dir.path().join("out");
        outputs.push((read(&out, "report.json"), read(&out, "cells.csv")));
    }
    assert_eq!(outputs[0], outputs[1], "thread count changed the report");
    assert_eq!(outputs[1], outputs[2], "rerun changed the report");
}

#[test]
fn kernel_exact_writes_grid_and_mass() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "kernel-exact",
            "--kappa",
            "3.141592653589793",
            "--tau",
            "0.01",
            "--y-r",
            "0.6",
            "--n-r",
            "6",
            "--n-theta",
            "5",
            "--mass",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(dir.path(), "kernel_slice.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "r,theta,x1,x2,g");
    assert_eq!(lines.count(), 30);
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "report.json")).unwrap();
    // rho(y) = 6 sqrt(tau): near-total survival
    let mass = report["results"]["mass"].as_f64().unwrap();
    assert!(mass > 0.999 && mass <= 1.0 + 1e-6, "mass {mass}");
}

#[test]
fn verify_bound_reports_fits_and_growth() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "verify-bound",
            "--kappa",
            "1.5707963267948966",
            "--refinements",
            "1",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "report.json")).unwrap();
    let vslope = report["results"]["vertex_fit"]["slope"].as_f64().unwrap();
    assert!((vslope - 2.0).abs() / 2.0 < 0.05, "vertex slope {vslope}");
    let bslope = report["results"]["boundary_fit"]["slope"].as_f64().unwrap();
    assert!((bslope - 1.0).abs() < 0.05, "boundary slope {bslope}");
    let growth = report["results"]["feasibility_growth"][0].as_f64().unwrap();
    assert!(growth < 2.0, "subcritical growth {growth}");
}

#[test]
fn duality_runs_time_dependent_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "duality",
            "--kappa",
            "1.5707963267948966",
            "--t",
            "0.4",
            "--x-r",
            "1.2",
            "--y-r",
            "0.9",
            "--paths",
            "150000",
            "--dt",
            "0.003",
            "--seed",
            "7",
            "--coeffs",
            "diag-sin:2,1,1,0",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "report.json")).unwrap();
    let z = report["results"]["z_score"].as_f64().unwrap();
    assert!(z.abs() < 4.0, "duality z {z}");
}
