//! Tabular output: CSV and JSON with a fixed row schema.
//!
//! CSV carries floats at 17 significant digits so a round-trip through text
//! is bit-exact; JSON uses shortest-round-trip encoding, which parses back
//! to the identical values.

use std::io::Write;

use serde::Serialize;

use crate::CliError;

pub const CSV_HEADER: &str = "sweep_param,sweep_value,state,site,epsilon,q,sx,sy,sz,residual,error";

/// One output row: a site of a state at a sweep point, or a recorded
/// per-point failure (numeric fields absent, `error` populated).
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct OutputRow {
    pub sweep_param: String,
    pub sweep_value: f64,
    pub state: String,
    pub site: usize,
    pub epsilon: f64,
    pub q: Option<f64>,
    pub sx: Option<f64>,
    pub sy: Option<f64>,
    pub sz: Option<f64>,
    pub residual: Option<f64>,
    pub error: String,
}

fn full(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(full).unwrap_or_default()
}

/// Commas and newlines would break the fixed schema; the messages are ours,
/// so substitution beats quoting machinery.
fn sanitize(message: &str) -> String {
    message.replace([',', '\n', '\r'], ";")
}

pub fn write_csv<W: Write>(mut w: W, rows: &[OutputRow]) -> Result<(), CliError> {
    if rows.is_empty() {
        return Err(CliError::Validation("refusing to emit an empty table".into()));
    }
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    writeln!(w, "{CSV_HEADER}").map_err(io)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.sweep_param,
            full(r.sweep_value),
            r.state,
            r.site,
            full(r.epsilon),
            opt(r.q),
            opt(r.sx),
            opt(r.sy),
            opt(r.sz),
            opt(r.residual),
            sanitize(&r.error),
        )
        .map_err(io)?;
    }
    Ok(())
}

pub fn write_json<W: Write>(mut w: W, rows: &[OutputRow]) -> Result<(), CliError> {
    if rows.is_empty() {
        return Err(CliError::Validation("refusing to emit an empty table".into()));
    }
    serde_json::to_writer_pretty(&mut w, rows).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(w).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}
