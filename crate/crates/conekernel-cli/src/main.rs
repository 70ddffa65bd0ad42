//! Batch front-end for the conekernel toolkit.
//!
//! Each subcommand reads its parameters from flags (optionally seeded from a
//! JSON config file; flags win), dispatches into the library, and writes a
//! deterministic `report.json` plus CSV tables for gridded output into the
//! output directory. Reports embed no timestamps; pass `--emit-metadata` for
//! a separate sidecar carrying wall-clock information.
//!
//! Exit codes: 0 success, 1 validation error, 2 numerical failure. Errors
//! are printed to stderr as a JSON object `{"error": {"code", "message"}}`.
//!
//! `CONEKERNEL_THREADS` caps the worker pool; results are byte-identical for
//! every thread count.

mod commands;
mod output;

use clap::{Parser, Subcommand};
use output::{fail, CliError};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "conekernel",
    about = "Green's function exponents, kernels, and bound checks on wedge domains"
)]
struct Cli {
    /// Output directory for report.json and CSV tables.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// JSON config file; explicit flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Write a run_meta.json sidecar with wall-clock metadata.
    #[arg(long, global = true)]
    emit_metadata: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Critical exponents and transformed opening for constant coefficients.
    Exponents(commands::ExponentsArgs),
    /// The transformed opening angle by all three routes.
    KappaTilde(commands::KappaTildeArgs),
    /// First Dirichlet eigenvalue of a spherical cap with its bracket.
    EigenvalueCap(commands::EigenvalueCapArgs),
    /// Exact wedge heat kernel on a polar grid.
    KernelExact(commands::KernelExactArgs),
    /// Monte Carlo killed-diffusion density estimate.
    KernelMc(commands::KernelMcArgs),
    /// Exponent fits and bound-feasibility scan against the exact kernel.
    VerifyBound(commands::VerifyBoundArgs),
    /// Duality residual between an operator and its time reversal.
    Duality(commands::DualityArgs),
}

fn main() {
    // worker cap; counts merge associatively so results do not depend on it
    if let Ok(threads) = std::env::var("CONEKERNEL_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }

    let cli = Cli::parse();
    let file_config = match cli
        .config
        .as_ref()
        .map(output::load_config_file)
        .transpose()
    {
        Ok(v) => v,
        Err(e) => fail(e),
    };

    let started = std::time::SystemTime::now();
    let result = match &cli.command {
        Command::Exponents(args) => commands::run_exponents(args, &file_config, &cli.out),
        Command::KappaTilde(args) => commands::run_kappa_tilde(args, &file_config, &cli.out),
        Command::EigenvalueCap(args) => commands::run_eigenvalue_cap(args, &file_config, &cli.out),
        Command::KernelExact(args) => commands::run_kernel_exact(args, &file_config, &cli.out),
        Command::KernelMc(args) => commands::run_kernel_mc(args, &file_config, &cli.out),
        Command::VerifyBound(args) => commands::run_verify_bound(args, &file_config, &cli.out),
        Command::Duality(args) => commands::run_duality(args, &file_config, &cli.out),
    };

    match result {
        Ok(report_path) => {
            if cli.emit_metadata {
                if let Err(e) = output::write_metadata(&cli.out, started) {
                    fail(CliError::io(e));
                }
            }
            println!("{}", report_path.display());
        }
        Err(e) => fail(e),
    }
}
