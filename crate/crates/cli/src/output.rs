//! Versioned CSV and atomic file writes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Writes `contents` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// Shortest round-trip form; stable across runs.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

/// CSV text with a comment line naming the schema version, columns and config hash.
pub fn csv(columns: &[&str], rows: &[Vec<f64>], config_hash: &str) -> String {
    let mut s = String::new();
    let cols = columns.join(",");
    let _ = writeln!(s, "# kfp-csv v{SCHEMA_VERSION}; columns={cols}; config_sha256={config_hash}");
    let _ = writeln!(s, "{cols}");
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&x| num(x)).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}
