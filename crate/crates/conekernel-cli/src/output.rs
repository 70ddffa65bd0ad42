//! Report writing, config-file loading, and the error-object protocol.

use serde::Serialize;
use std::path::{Path, PathBuf};

/// Report schema version; bump on breaking layout changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub struct CliError {
    /// Machine-readable code, e.g. "NOT_SPD".
    pub code: &'static str,
    pub message: String,
    /// Process exit status: 1 validation, 2 numerical.
    pub exit: i32,
}

impl CliError {
    pub fn validation(code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
            exit: 1,
        }
    }

    pub fn numerical(code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
            exit: 2,
        }
    }

    pub fn io(err: std::io::Error) -> Self {
        CliError {
            code: "IO",
            message: err.to_string(),
            exit: 1,
        }
    }
}

/// Print the machine-readable error object and exit.
pub fn fail(e: CliError) -> ! {
    eprintln!(
        "{}",
        serde_json::json!({ "error": { "code": e.code, "message": e.message } })
    );
    std::process::exit(e.exit);
}

/// Full report: echoed effective config plus results and diagnostics.
#[derive(Debug, Serialize)]
pub struct Report<C: Serialize, R: Serialize> {
    pub schema_version: u32,
    pub command: &'static str,
    pub config: C,
    pub results: R,
    pub diagnostics: serde_json::Value,
}

/// Serialize the report to `<out>/report.json` (deterministic: struct field
/// order, shortest round-trip floats, no timestamps).
pub fn write_report<C: Serialize, R: Serialize>(
    out_dir: &Path,
    report: &Report<C, R>,
) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out_dir).map_err(CliError::io)?;
    let path = out_dir.join("report.json");
    let mut body = serde_json::to_string_pretty(report)
        .map_err(|e| CliError::validation("SERIALIZE", e.to_string()))?;
    body.push('\n');
    std::fs::write(&path, body).map_err(CliError::io)?;
    Ok(path)
}

/// Write a CSV table with the given header and shortest-round-trip numeric
/// formatting.
pub fn write_csv(
    out_dir: &Path,
    name: &str,
    header: &str,
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out_dir).map_err(CliError::io)?;
    let path = out_dir.join(name);
    let mut body = String::from(header);
    body.push('\n');
    for row in rows {
        body.push_str(&row.join(","));
        body.push('\n');
    }
    std::fs::write(&path, body).map_err(CliError::io)?;
    Ok(path)
}

pub fn load_config_file(path: &PathBuf) -> Result<serde_json::Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::validation("BAD_CONFIG", format!("{}: {e}", path.display())))
}

/// Wall-clock sidecar, separate from the deterministic report.
pub fn write_metadata(out_dir: &Path, started: std::time::SystemTime) -> std::io::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let unix = |t: std::time::SystemTime| {
        t.duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0)
    };
    let meta = serde_json::json!({
        "started_unix": unix(started),
        "finished_unix": unix(std::time::SystemTime::now()),
    });
    std::fs::write(out_dir.join("run_meta.json"), format!("{meta}\n"))
}

/// Shortest round-trip decimal for CSV cells.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}
