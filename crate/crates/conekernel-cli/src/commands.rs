//! Subcommand implementations: flag/file merging, dispatch, report assembly.

use crate::output::{fmt, write_csv, write_report, CliError, Report, SCHEMA_VERSION};
use clap::Args;
use conekernel::exponent::{
    cap_degree_root, cap_eigenvalue_bounds, first_dirichlet_eigenvalue_arc,
    first_dirichlet_eigenvalue_cap, kappa_tilde_closed_form, kappa_tilde_geometric,
    kappa_tilde_quadrature, lambda_c_constant, lambda_c_heat_2d, ExponentError, SpdMatrix2,
};
use conekernel::geometry::{Point2, Wedge2D};
use conekernel::mc::{
    duality_residual, simulate_killed_density, McConfig, McError, PolarBinning, TimeCoefficients,
};
use conekernel::verify::{
    check_upper_bound, feasibility_samples, fit_boundary_exponent, fit_gaussian_sigma,
    fit_vertex_exponent, BoundSpec, KernelSample, VerifyError,
};
use conekernel::wedge::{heat_kernel_wedge, kernel_mass, KernelError, SeriesControl};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::{Path, PathBuf};

type FileConfig = Option<serde_json::Value>;

/// Flag value, else config-file value, else default.
fn pick<T: Clone + serde::de::DeserializeOwned>(
    cli: &Option<T>,
    file: &FileConfig,
    key: &str,
    default: T,
) -> Result<T, CliError> {
    if let Some(v) = cli {
        return Ok(v.clone());
    }
    if let Some(cfg) = file {
        if let Some(raw) = cfg.get(key) {
            return serde_json::from_value(raw.clone()).map_err(|e| {
                CliError::validation("BAD_CONFIG", format!("config key '{key}': {e}"))
            });
        }
    }
    Ok(default)
}

/// Required: flag or config-file value.
fn require<T: Clone + serde::de::DeserializeOwned>(
    cli: &Option<T>,
    file: &FileConfig,
    key: &str,
) -> Result<T, CliError> {
    if let Some(v) = cli {
        return Ok(v.clone());
    }
    if let Some(cfg) = file {
        if let Some(raw) = cfg.get(key) {
            return serde_json::from_value(raw.clone()).map_err(|e| {
                CliError::validation("BAD_CONFIG", format!("config key '{key}': {e}"))
            });
        }
    }
    Err(CliError::validation(
        "MISSING_PARAMETER",
        format!("'{key}' must be given as a flag or in the config file"),
    ))
}

fn parse_matrix(text: &str) -> Result<SpdMatrix2, CliError> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::validation("BAD_MATRIX", format!("'{text}': {e}")))?;
    if parts.len() != 3 {
        return Err(CliError::validation(
            "BAD_MATRIX",
            format!("expected 'a,b,c', got '{text}'"),
        ));
    }
    SpdMatrix2::new(parts[0], parts[1], parts[2])
        .map_err(|e| CliError::validation("NOT_SPD", e.to_string()))
}

fn exponent_err(e: ExponentError) -> CliError {
    match e {
        ExponentError::NotSpd { .. } => CliError::validation("NOT_SPD", e.to_string()),
        ExponentError::InvalidOpening(_) => CliError::validation("INVALID_OPENING", e.to_string()),
        ExponentError::Precondition(_) => CliError::validation("PRECONDITION", e.to_string()),
        ExponentError::RootBracketing { .. } => {
            CliError::numerical("ROOT_BRACKETING", e.to_string())
        }
        ExponentError::Quadrature(_) => CliError::numerical("NON_CONVERGENT", e.to_string()),
        ExponentError::SpecFun(_) => CliError::numerical("NON_CONVERGENT", e.to_string()),
    }
}

fn kernel_err(e: KernelError) -> CliError {
    match e {
        KernelError::MaxTermsExceeded { .. } => CliError::numerical("MAX_TERMS", e.to_string()),
        KernelError::InvalidTau(_) => CliError::validation("INVALID_TAU", e.to_string()),
        KernelError::Geometry(_) => CliError::validation("OUTSIDE_DOMAIN", e.to_string()),
        KernelError::Quadrature(_) => CliError::numerical("NON_CONVERGENT", e.to_string()),
    }
}

fn mc_err(e: McError) -> CliError {
    match e {
        McError::InvalidConfig(_) => CliError::validation("INVALID_CONFIG", e.to_string()),
        McError::StartOutsideDomain(..) => CliError::validation("OUTSIDE_DOMAIN", e.to_string()),
        McError::ParabolicityViolated { .. } => CliError::validation("PARABOLICITY", e.to_string()),
        McError::PointNotBinned(..) => CliError::validation("POINT_NOT_BINNED", e.to_string()),
    }
}

fn verify_err(e: VerifyError) -> CliError {
    match e {
        VerifyError::InsufficientData { .. } => {
            CliError::validation("INSUFFICIENT_DATA", e.to_string())
        }
        VerifyError::BoundaryArtifact { .. } => {
            CliError::numerical("BOUNDARY_ARTIFACT", e.to_string())
        }
        VerifyError::Precondition(_) => CliError::validation("PRECONDITION", e.to_string()),
        VerifyError::Geometry(_) => CliError::validation("OUTSIDE_DOMAIN", e.to_string()),
        VerifyError::Kernel(k) => kernel_err(k),
        VerifyError::Exponent(x) => exponent_err(x),
    }
}

fn wedge_domain(kappa: f64) -> Result<Wedge2D, CliError> {
    Wedge2D::symmetric(kappa).map_err(|e| CliError::validation("INVALID_OPENING", e.to_string()))
}

// ---------------------------------------------------------------- exponents

#[derive(Debug, Args)]
pub struct ExponentsArgs {
    /// Sector opening angle in radians, in (0, 2*pi).
    #[arg(long)]
    kappa: Option<f64>,
    /// Sector orientation angle in radians.
    #[arg(long)]
    alpha: Option<f64>,
    /// Constant coefficient matrix "a,b,c" for ((a,b),(b,c)).
    #[arg(long)]
    matrix: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ExponentsConfig {
    pub command: String,
    pub kappa: f64,
    pub alpha: f64,
    pub matrix: [f64; 3],
    pub output_dir: String,
}

pub fn run_exponents(
    args: &ExponentsArgs,
    file: &FileConfig,
    out: &Path,
) -> Result<PathBuf, CliError> {
    let kappa: f64 = require(&args.kappa, file, "kappa")?;
    let alpha: f64 = pick(&args.alpha, file, "alpha", 0.0)?;
    let matrix_text: String = pick(&args.matrix, file, "matrix", "1,0,1".to_string())?;
    let a = parse_matrix(&matrix_text)?;

    let kt = kappa_tilde_closed_form(&a, kappa, alpha).map_err(exponent_err)?;
    let lc = lambda_c_constant(&a, kappa, alpha).map_err(exponent_err)?;
    let heat = lambda_c_heat_2d(kappa).map_err(exponent_err)?;
    let arc = first_dirichlet_eigenvalue_arc(kappa).map_err(exponent_err)?;

    let (m_a, m_b, m_c) = a.entries();
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "exponents",
        config: ExponentsConfig {
            command: "exponents".into(),
            kappa,
            alpha,
            matrix: [m_a, m_b, m_c],
            output_dir: out.display().to_string(),
        },
        results: json!({
            "kappa_tilde": kt,
            "lambda_c": lc,
            "lambda_heat_2d": heat,
            "arc_eigenvalue": arc,
        }),
        diagnostics: json!({}),
    };
    write_report(out, &report)
}

// --------------------------------------------------------------- kappa-tilde

#[derive(Debug, Args)]
pub struct KappaTildeArgs {
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Coefficient matrix "a,b,c".
    #[arg(long)]
    matrix: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct KappaTildeConfig {
    pub command: String,
    pub kappa: f64,
    pub alpha: f64,
    pub matrix: [f64; 3],
    pub output_dir: String,
}

pub fn run_kappa_tilde(
    args: &KappaTildeArgs,
    file: &FileConfig,
    out: &Path,
) -> Result<PathBuf, CliError> {
    let kappa: f64 = require(&args.kappa, file, "kappa")?;
    let alpha: f64 = pick(&args.alpha, file, "alpha", 0.0)?;
    let matrix_text: String = pick(&args.matrix, file, "matrix", "1,0,1".to_string())?;
    let a = parse_matrix(&matrix_text)?;

    let closed = kappa_tilde_closed_form(&a, kappa, alpha).map_err(exponent_err)?;
    let quad = kappa_tilde_quadrature(&a, kappa, alpha).map_err(exponent_err)?;
    let geom = kappa_tilde_geometric(&a, kappa, alpha).map_err(exponent_err)?;
    let max_disagreement = (closed - quad).abs().max((closed - geom).abs());

    let (m_a, m_b, m_c) = a.entries();
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "kappa-tilde",
        config: KappaTildeConfig {
            command: "kappa-tilde".into(),
            kappa,
            alpha,
            matrix: [m_a, m_b, m_c],
            output_dir: out.display().to_string(),
        },
        results: json!({
            "closed_form": closed,
            "quadrature": quad,
            "geometric": geom,
            "max_disagreement": max_disagreement,
        }),
        diagnostics: json!({}),
    };
    write_report(out, &report)
}

// ------------------------------------------------------------- eigenvalue-cap

#[derive(Debug, Args)]
pub struct EigenvalueCapArgs {
    /// Cap opening angle in radians (polar opening is kappa/2).
    #[arg(long)]
    kappa: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct EigenvalueCapConfig {
    pub command: String,
    pub kappa: f64,
    pub output_dir: String,
}

pub fn run_eigenvalue_cap(
    args: &EigenvalueCapArgs,
    file: &FileConfig,
    out: &Path,
) -> Result<PathBuf, CliError> {
    let kappa: f64 = require(&args.kappa, file, "kappa")?;
    let ev = first_dirichlet_eigenvalue_cap(kappa).map_err(exponent_err)?;
    let nu_star = cap_degree_root(kappa).map_err(exponent_err)?;
    let (lower, upper) = cap_eigenvalue_bounds(kappa).map_err(exponent_err)?;

    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "eigenvalue-cap",
        config: EigenvalueCapConfig {
            command: "eigenvalue-cap".into(),
            kappa,
            output_dir: out.display().to_string(),
        },
        results: json!({
            "lambda": ev.lambda,
            "nu_star": nu_star,
            "lower": lower,
            "upper": upper,
        }),
        diagnostics: json!({ "bracket_width": upper - lower }),
    };
    write_report(out, &report)
}

// -------------------------------------------------------------- kernel-exact

#[derive(Debug, Args)]
pub struct KernelExactArgs {
    #[arg(long)]
    kappa: Option<f64>,
    /// Elapsed time t - s.
    #[arg(long)]
    tau: Option<f64>,
    /// Base point radius.
    #[arg(long)]
    y_r: Option<f64>,
    /// Base point angle from the clockwise edge, in (0, kappa).
    #[arg(long)]
    y_theta: Option<f64>,
    #[arg(long)]
    r_min: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    n_r: Option<usize>,
    #[arg(long)]
    theta_min: Option<f64>,
    #[arg(long)]
    theta_max: Option<f64>,
    #[arg(long)]
    n_theta: Option<usize>,
    /// Also integrate the kernel mass over the wedge.
    #[arg(long)]
    mass: bool,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct KernelExactConfig {
    pub command: String,
    pub kappa: f64,
    pub tau: f64,
    pub y_r: f64,
    pub y_theta: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub n_r: usize,
    pub theta_min: f64,
    pub theta_max: f64,
    pub n_theta: usize,
    pub mass: bool,
    pub output_dir: String,
}

pub fn run_kernel_exact(
    args: &KernelExactArgs,
    file: &FileConfig,
    out: &Path,
) -> Result<PathBuf, CliError> {
    let kappa: f64 = require(&args.kappa, file, "kappa")?;
    let tau: f64 = require(&args.tau, file, "tau")?;
    let y_r: f64 = require(&args.y_r, file, "y_r")?;
    let y_theta: f64 = pick(&args.y_theta, file, "y_theta", kappa / 2.0)?;
    let r_min: f64 = pick(&args.r_min, file, "r_min", 0.1 * tau.sqrt())?;
    let r_max: f64 = pick(&args.r_max, file, "r_max", y_r + 4.0 * tau.sqrt())?;
    let n_r: usize = pick(&args.n_r, file, "n_r", 32)?;
    let theta_min: f64 = pick(&args.theta_min, file, "theta_min", 0.05 * kappa)?;
    let theta_max: f64 = pick(&args.theta_max, file, "theta_max", 0.95 * kappa)?;
    let n_theta: usize = pick(&args.n_theta, file, "n_theta", 16)?;
    let want_mass = args.mass
        || file
            .as_ref()
            .and_then(|c| c.get("mass"))
            .and_then(|v| v.as_bool())
            .unwrap_or(false);

    if !(r_min > 0.0 && r_max > r_min && n_r >= 1 && n_theta >= 1) {
        return Err(CliError::validation(
            "INVALID_GRID",
            format!("need 0 < r_min < r_max and positive counts; got r_min={r_min}, r_max={r_max}, n_r={n_r}, n_theta={n_theta}"),
        ));
    }
    if !(theta_min > 0.0 && theta_max < kappa && theta_max > theta_min) {
        return Err(CliError::validation(
            "INVALID_GRID",
            format!("need 0 < theta_min < theta_max < kappa; got [{theta_min}, {theta_max}] vs kappa={kappa}"),
        ));
    }

    let domain = wedge_domain(kappa)?;
    let y = domain.point_at(y_r, y_theta);
    if !domain.contains(y) {
        return Err(CliError::validation(
            "OUTSIDE_DOMAIN",
            format!("base point (r={y_r}, theta={y_theta}) is outside the open wedge"),
        ));
    }
    let ctrl = SeriesControl::default();

    let mut rows = Vec::with_capacity(n_r * n_theta);
    let mut g_min = f64::INFINITY;
    let mut g_max = f64::NEG_INFINITY;
    for i in 0..n_r {
        let r = if n_r == 1 {
            r_min
        } else {
            r_min + (r_max - r_min) * i as f64 / (n_r - 1) as f64
        };
        for j in 0..n_theta {
            let theta = if n_theta == 1 {
                theta_min
            } else {
                theta_min + (theta_max - theta_min) * j as f64 / (n_theta - 1) as f64
            };
            let x = domain.point_at(r, theta);
            let g = heat_kernel_wedge(&domain, tau, x, y, &ctrl).map_err(kernel_err)?;
            g_min = g_min.min(g);
            g_max = g_max.max(g);
            rows.push(vec![fmt(r), fmt(theta), fmt(x.x), fmt(x.y), fmt(g)]);
        }
    }
    write_csv(out, "kernel_slice.csv", "r,theta,x1,x2,g", rows)?;

    let mass_value = if want_mass {
        Some(kernel_mass(&domain, tau, y, &ctrl).map_err(kernel_err)?)
    } else {
        None
    };

    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "kernel-exact",
        config: KernelExactConfig {
            command: "kernel-exact".into(),
            kappa,
            tau,
            y_r,
            y_theta,
            r_min,
            r_max,
            n_r,
            theta_min,
            theta_max,
            n_theta,
            mass: want_mass,
            output_dir: out.display().to_string(),
        },
        results: json!({
            "n_points": n_r * n_theta,
            "g_min": g_min,
            "g_max": g_max,
            "mass": mass_value,
        }),
        diagnostics: json!({ "csv": "kernel_slice.csv" }),
    };
    write_report(out, &report)
}

// ----------------------------------------------------------------- kernel-mc

#[derive(Debug, Args)]
pub struct KernelMcArgs {
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    y_r: Option<f64>,
    #[arg(long)]
    y_theta: Option<f64>,
    #[arg(long)]
    paths: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    r_min: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    n_r: Option<usize>,
    #[arg(long)]
    theta_min: Option<f64>,
    #[arg(long)]
    theta_max: Option<f64>,
    #[arg(long)]
    n_theta: Option<usize>,
    /// Brownian-bridge boundary-crossing correction (true/false).
    #[arg(long)]
    bridge: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct KernelMcConfig {
    pub command: String,
    pub kappa: f64,
    pub tau: f64,
    pub y_r: f64,
    pub y_theta: f64,
    pub paths: u64,
    pub dt: f64,
    pub seed: u64,
    pub r_min: f64,
    pub r_max: f64,
    pub n_r: usize,
    pub theta_min: f64,
    pub theta_max: f64,
    pub n_theta: usize,
    pub bridge: bool,
    pub output_dir: String,
}

pub fn run_kernel_mc(
    args: &KernelMcArgs,
    file: &FileConfig,
    out: &Path,
) -> Result<PathBuf, CliError> {
    let kappa: f64 = require(&args.kappa, file, "kappa")?;
    let tau: f64 = require(&args.tau, file, "tau")?;
    let y_r: f64 = require(&args.y_r, file, "y_r")?;
    let y_theta: f64 = pick(&args.y_theta, file, "y_theta", kappa / 2.0)?;
    let paths: u64 = pick(&args.paths, file, "paths", 100_000)?;
    let dt: f64 = pick(&args.dt, file, "dt", tau / 200.0)?;
    let seed: u64 = pick(&args.seed, file, "seed", 1)?;
    let r_min: f64 = pick(&args.r_min, file, "r_min", 0.1 * y_r)?;
    let r_max: f64 = pick(&args.r_max, file, "r_max", y_r + 4.0 * tau.sqrt())?;
    let n_r: usize = pick(&args.n_r, file, "n_r", 10)?;
    let theta_min: f64 = pick(&args.theta_min, file, "theta_min", 0.05 * kappa)?;
    let theta_max: f64 = pick(&args.theta_max, file, "theta_max", 0.95 * kappa)?;
    let n_theta: usize = pick(&args.n_theta, file, "n_theta", 8)?;
    let bridge: bool = pick(&args.bridge, file, "bridge", true)?;

    let domain = wedge_domain(kappa)?;
    let y = domain.point_at(y_r, y_theta);
    let binning =
        PolarBinning::regular(r_min, r_max, n_r, theta_min, theta_max, n_theta).map_err(mc_err)?;
    let cfg = McConfig {
        n_paths: paths,
        dt,
        seed,
        binning,
        bridge_correction: bridge,
    };
    let coeffs = TimeCoefficients::constant(SpdMatrix2::identity());
    let est = simulate_killed_density(&coeffs, &domain, 0.0, y, tau, &cfg).map_err(mc_err)?;

    let rows = est.cells.iter().map(|c| {
        vec![
            fmt(c.r_lo),
            fmt(c.r_hi),
            fmt(c.theta_lo),
            fmt(c.theta_hi),
            fmt(c.centroid.x),
            fmt(c.centroid.y),
            c.count.to_string(),
            fmt(c.value),
            fmt(c.stderr),
        ]
    });
    write_csv(
        out,
        "cells.csv",
        "r_lo,r_hi,theta_lo,theta_hi,centroid_x,centroid_y,count,value,stderr",
        rows,
    )?;

    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "kernel-mc",
        config: KernelMcConfig {
            command: "kernel-mc".into(),
            kappa,
            tau,
            y_r,
            y_theta,
            paths,
            dt,
            seed,
            r_min,
            r_max,
            n_r,
            theta_min,
            theta_max,
            n_theta,
            bridge,
            output_dir: out.display().to_string(),
        },
        results: json!({
            "survivors": est.survivors,
            "total": est.total,
            "survival_fraction": est.survivors as f64 / est.total as f64,
        }),
        diagnostics: json!({ "csv": "cells.csv" }),
    };
    write_report(out, &report)
}

// -------------------------------------------------------------- verify-bound

#[derive(Debug, Args)]
pub struct VerifyBoundArgs {
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Exponent scale relative to critical: lambda = scale * pi/kappa.
    #[arg(long)]
    lambda_scale: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Grid refinement levels for the feasibility trend (level 0 plus this
    /// many decade extensions toward vertex and boundary).
    #[arg(long)]
    refinements: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct VerifyBoundConfig {
    pub command: String,
    pub kappa: f64,
    pub tau: f64,
    pub lambda_scale: f64,
    pub sigma: f64,
    pub refinements: u32,
    pub output_dir: String,
}

pub fn run_verify_bound(
    args: &VerifyBoundArgs,
    file: &FileConfig,
    out: &Path,
) -> Result<PathBuf, CliError> {
    let kappa: f64 = require(&args.kappa, file, "kappa")?;
    let tau: f64 = pick(&args.tau, file, "tau", 1.0)?;
    let lambda_scale: f64 = pick(&args.lambda_scale, file, "lambda_scale", 0.9)?;
    let sigma: f64 = pick(&args.sigma, file, "sigma", 0.125)?;
    let refinements: u32 = pick(&args.refinements, file, "refinements", 2)?;

    let domain = wedge_domain(kappa)?;
    let ctrl = SeriesControl::default();
    let sampler = move |t: f64, x: Point2, yy: Point2| heat_kernel_wedge(&domain, t, x, yy, &ctrl);
    let y = domain.point_at(4.5 * tau.sqrt(), 0.5 * kappa);

    // exponent fits against the exact kernel
    let vertex_fit = fit_vertex_exponent(sampler, &domain, tau, y, 12).map_err(verify_err)?;
    let boundary_fit = fit_boundary_exponent(sampler, &domain, tau, y, 12).map_err(verify_err)?;

    // Gaussian rate fit along the bisector, deep interior
    let mut gauss_samples = Vec::new();
    for i in 0..16 {
        let x = domain.point_at(y.norm() + (0.5 + 0.25 * i as f64) * tau.sqrt(), 0.5 * kappa);
        let value = sampler(tau, x, y).map_err(kernel_err)?;
        gauss_samples.push(KernelSample { tau, x, y, value });
    }
    let gaussian_fit = fit_gaussian_sigma(&gauss_samples, 2).map_err(verify_err)?;

    // feasibility trend across refinement levels
    let lambda = lambda_scale * std::f64::consts::PI / kappa;
    let spec = BoundSpec::two_weight(lambda, lambda, sigma, 1.0);
    let mut feasible = Vec::new();
    let mut fit_rows = Vec::new();
    for level in 0..=refinements {
        let samples = feasibility_samples(sampler, &domain, tau, y, level).map_err(verify_err)?;
        let rep = check_upper_bound(&samples, &spec, &domain).map_err(verify_err)?;
        if level == 0 {
            for s in &samples {
                fit_rows.push(vec![
                    "feasibility".to_string(),
                    fmt(s.x.norm()),
                    fmt(s.value),
                ]);
            }
        }
        feasible.push(json!({
            "level": level,
            "feasible_constant": rep.feasible_constant,
            "n_evaluated": rep.n_evaluated,
            "argmax_r": rep.argmax.x.norm(),
        }));
    }
    let growths: Vec<f64> = (1..feasible.len())
        .map(|i| {
            feasible[i]["feasible_constant"].as_f64().unwrap()
                / feasible[i - 1]["feasible_constant"].as_f64().unwrap()
        })
        .collect();

    write_csv(out, "fit_points.csv", "kind,abscissa,value", fit_rows)?;

    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "verify-bound",
        config: VerifyBoundConfig {
            command: "verify-bound".into(),
            kappa,
            tau,
            lambda_scale,
            sigma,
            refinements,
            output_dir: out.display().to_string(),
        },
        results: json!({
            "vertex_fit": vertex_fit,
            "vertex_target": std::f64::consts::PI / kappa,
            "boundary_fit": boundary_fit,
            "gaussian_fit": gaussian_fit,
            "feasibility": feasible,
            "feasibility_growth": growths,
        }),
        diagnostics: json!({ "csv": "fit_points.csv" }),
    };
    write_report(out, &report)
}

// ------------------------------------------------------------------- duality

#[derive(Debug, Args)]
pub struct DualityArgs {
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    x_r: Option<f64>,
    #[arg(long)]
    x_theta: Option<f64>,
    #[arg(long)]
    y_r: Option<f64>,
    #[arg(long)]
    y_theta: Option<f64>,
    #[arg(long)]
    paths: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Coefficients: "identity", "const:a,b,c", or
    /// "diag-sin:b1,a1,b2,a2" for diag(b1 + a1 sin t, b2 + a2 sin t).
    #[arg(long)]
    coeffs: Option<String>,
    #[arg(long)]
    r_min: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    n_r: Option<usize>,
    #[arg(long)]
    theta_min: Option<f64>,
    #[arg(long)]
    theta_max: Option<f64>,
    #[arg(long)]
    n_theta: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct DualityConfig {
    pub command: String,
    pub kappa: f64,
    pub s: f64,
    pub t: f64,
    pub x_r: f64,
    pub x_theta: f64,
    pub y_r: f64,
    pub y_theta: f64,
    pub paths: u64,
    pub dt: f64,
    pub seed: u64,
    pub coeffs: String,
    pub r_min: f64,
    pub r_max: f64,
    pub n_r: usize,
    pub theta_min: f64,
    pub theta_max: f64,
    pub n_theta: usize,
    pub output_dir: String,
}

fn parse_coefficients(text: &str) -> Result<TimeCoefficients, CliError> {
    if text == "identity" {
        return Ok(TimeCoefficients::constant(SpdMatrix2::identity()));
    }
    if let Some(rest) = text.strip_prefix("const:") {
        return Ok(TimeCoefficients::constant(parse_matrix(rest)?));
    }
    if let Some(rest) = text.strip_prefix("diag-sin:") {
        let parts: Vec<f64> = rest
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::validation("BAD_COEFFS", format!("'{text}': {e}")))?;
        if parts.len() != 4 {
            return Err(CliError::validation(
                "BAD_COEFFS",
                format!("diag-sin needs 'b1,a1,b2,a2', got '{rest}'"),
            ));
        }
        let (b1, a1, b2, a2) = (parts[0], parts[1], parts[2], parts[3]);
        let lo1 = b1 - a1.abs();
        let lo2 = b2 - a2.abs();
        if lo1 <= 0.0 || lo2 <= 0.0 {
            return Err(CliError::validation(
                "BAD_COEFFS",
                format!(
                    "diag-sin coefficients must stay positive: ranges [{lo1}, ..], [{lo2}, ..]"
                ),
            ));
        }
        let nu1 = lo1.min(lo2);
        let nu2 = (b1 + a1.abs()).max(b2 + a2.abs());
        return TimeCoefficients::new(
            move |t: f64| {
                SpdMatrix2::diagonal(b1 + a1 * t.sin(), b2 + a2 * t.sin())
                    .expect("positive by construction")
            },
            nu1,
            nu2,
            &[0.0],
        )
        .map_err(mc_err);
    }
    Err(CliError::validation(
        "BAD_COEFFS",
        format!("unknown coefficient spec '{text}'"),
    ))
}

pub fn run_duality(args: &DualityArgs, file: &FileConfig, out: &Path) -> Result<PathBuf, CliError> {
    let kappa: f64 = require(&args.kappa, file, "kappa")?;
    let s: f64 = pick(&args.s, file, "s", 0.0)?;
    let t: f64 = require(&args.t, file, "t")?;
    let x_r: f64 = require(&args.x_r, file, "x_r")?;
    let x_theta: f64 = pick(&args.x_theta, file, "x_theta", 0.6 * kappa)?;
    let y_r: f64 = require(&args.y_r, file, "y_r")?;
    let y_theta: f64 = pick(&args.y_theta, file, "y_theta", 0.4 * kappa)?;
    let paths: u64 = pick(&args.paths, file, "paths", 200_000)?;
    let dt: f64 = pick(&args.dt, file, "dt", (t - s) / 150.0)?;
    let seed: u64 = pick(&args.seed, file, "seed", 1)?;
    let coeffs_text: String = pick(&args.coeffs, file, "coeffs", "identity".to_string())?;
    let r_lo_default = 0.25 * x_r.min(y_r);
    let r_hi_default = x_r.max(y_r) + 3.0 * (t - s).max(1e-12).sqrt();
    let r_min: f64 = pick(&args.r_min, file, "r_min", r_lo_default)?;
    let r_max: f64 = pick(&args.r_max, file, "r_max", r_hi_default)?;
    let n_r: usize = pick(&args.n_r, file, "n_r", 8)?;
    let theta_min: f64 = pick(&args.theta_min, file, "theta_min", 0.05 * kappa)?;
    let theta_max: f64 = pick(&args.theta_max, file, "theta_max", 0.95 * kappa)?;
    let n_theta: usize = pick(&args.n_theta, file, "n_theta", 8)?;

    let domain = wedge_domain(kappa)?;
    let coeffs = parse_coefficients(&coeffs_text)?;
    let x = domain.point_at(x_r, x_theta);
    let y = domain.point_at(y_r, y_theta);
    let binning =
        PolarBinning::regular(r_min, r_max, n_r, theta_min, theta_max, n_theta).map_err(mc_err)?;
    let cfg = McConfig {
        n_paths: paths,
        dt,
        seed,
        binning,
        bridge_correction: true,
    };
    let rep = duality_residual(&coeffs, &domain, s, t, x, y, &cfg).map_err(mc_err)?;

    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "duality",
        config: DualityConfig {
            command: "duality".into(),
            kappa,
            s,
            t,
            x_r,
            x_theta,
            y_r,
            y_theta,
            paths,
            dt,
            seed,
            coeffs: coeffs_text,
            r_min,
            r_max,
            n_r,
            theta_min,
            theta_max,
            n_theta,
            output_dir: out.display().to_string(),
        },
        results: serde_json::to_value(&rep)
            .map_err(|e| CliError::validation("SERIALIZE", e.to_string()))?,
        diagnostics: json!({}),
    };
    write_report(out, &report)
}
