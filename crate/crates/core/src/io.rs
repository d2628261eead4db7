//! On-disk formats shared by the CLI and the plotting scripts.
//!
//! * Series CSV: a `# schema: conic-flow-series/1` line, a header row with
//!   the columns of [`SERIES_COLUMNS`], then one row per accepted step.
//!   Floats use the shortest representation that round-trips, so a CSV
//!   regenerated from checkpoints compares equal byte for byte.
//! * Checkpoint: one line of JSON ([`CheckpointHeader`]) followed by the raw
//!   little-endian `f64` arrays `phi` and `phidot`, `cells` values each.
//!   `read_checkpoint` refuses files with trailing bytes.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::class_flow::FlowMode;
use crate::diagnostics::DiagnosticsRecord;
use crate::flow::FlowState;

pub const SERIES_SCHEMA: &str = "conic-flow-series/1";
pub const CHECKPOINT_SCHEMA: &str = "conic-flow-checkpoint/1";

pub const SERIES_COLUMNS: [&str; 17] = [
    "t",
    "dt",
    "area",
    "class_area",
    "class_defect",
    "sup_phi",
    "inf_phi",
    "sup_phidot",
    "inf_phidot",
    "positivity_margin",
    "trace_lower",
    "trace_upper",
    "ke_residual_sup",
    "curvature_min",
    "curvature_max",
    "gauss_bonnet_defect",
    "sup_abs_phidot",
];

pub fn write_series_header<W: Write>(mut w: W) -> io::Result<()> {
    writeln!(w, "# schema: {SERIES_SCHEMA}")?;
    writeln!(w, "{}", SERIES_COLUMNS.join(","))
}

pub fn write_series_row<W: Write>(mut w: W, r: &DiagnosticsRecord) -> io::Result<()> {
    let ke = r.ke_residual_sup.map(|v| v.to_string()).unwrap_or_default();
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.t,
        r.dt,
        r.area,
        r.class_area,
        r.class_defect,
        r.sup_phi,
        r.inf_phi,
        r.sup_phidot,
        r.inf_phidot,
        r.positivity_margin,
        r.trace_lower,
        r.trace_upper,
        ke,
        r.curvature_min,
        r.curvature_max,
        r.gauss_bonnet_defect,
        r.sup_abs_phidot(),
    )
}

pub fn write_series<W: Write>(mut w: W, records: &[DiagnosticsRecord]) -> io::Result<()> {
    write_series_header(&mut w)?;
    for r in records {
        write_series_row(&mut w, r)?;
    }
    Ok(())
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

/// Parses a series CSV back into records.
pub fn read_series<R: BufRead>(r: R) -> io::Result<Vec<DiagnosticsRecord>> {
    let mut lines = r.lines();
    let schema = lines.next().ok_or_else(|| invalid("empty series file"))??;
    if schema.trim() != format!("# schema: {SERIES_SCHEMA}") {
        return Err(invalid(format!("unsupported series schema line {schema:?}")));
    }
    let header = lines.next().ok_or_else(|| invalid("missing header row"))??;
    if header.trim() != SERIES_COLUMNS.join(",") {
        return Err(invalid("series header does not match the frozen column list"));
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != SERIES_COLUMNS.len() {
            return Err(invalid(format!("row {}: expected {} fields", lineno + 1, SERIES_COLUMNS.len())));
        }
        let num = |i: usize| -> io::Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| invalid(format!("row {}: bad number in column {}", lineno + 1, SERIES_COLUMNS[i])))
        };
        out.push(DiagnosticsRecord {
            t: num(0)?,
            dt: num(1)?,
            area: num(2)?,
            class_area: num(3)?,
            class_defect: num(4)?,
            sup_phi: num(5)?,
            inf_phi: num(6)?,
            sup_phidot: num(7)?,
            inf_phidot: num(8)?,
            positivity_margin: num(9)?,
            trace_lower: num(10)?,
            trace_upper: num(11)?,
            ke_residual_sup: if fields[12].is_empty() { None } else { Some(num(12)?) },
            curvature_min: num(13)?,
            curvature_max: num(14)?,
            gauss_bonnet_defect: num(15)?,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub schema: String,
    /// Grid shape: `[n]` for the football, `[n, n]` for the torus.
    pub grid: Vec<usize>,
    pub cells: usize,
    pub t: f64,
    /// Size of the step that produced the state, so its diagnostics record
    /// can be rebuilt from the file alone.
    pub dt: f64,
    pub epsilon: f64,
    pub mode: FlowMode,
    pub positivity_margin: f64,
    pub fields: Vec<String>,
}

pub fn write_checkpoint<W: Write>(mut w: W, state: &FlowState, dt: f64, grid: &[usize]) -> io::Result<()> {
    let header = CheckpointHeader {
        schema: CHECKPOINT_SCHEMA.to_string(),
        grid: grid.to_vec(),
        cells: state.phi.len(),
        t: state.t,
        dt,
        epsilon: state.epsilon,
        mode: state.mode,
        positivity_margin: state.positivity_margin,
        fields: vec!["phi".to_string(), "phidot".to_string()],
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for v in state.phi.iter().chain(&state.phidot) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(mut r: R) -> io::Result<(CheckpointHeader, FlowState)> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: CheckpointHeader = serde_json::from_str(line.trim_end()).map_err(|e| invalid(e.to_string()))?;
    if header.schema != CHECKPOINT_SCHEMA {
        return Err(invalid(format!("unsupported checkpoint schema {:?}", header.schema)));
    }
    let mut read_field = || -> io::Result<Vec<f64>> {
        let mut buf = vec![0u8; 8 * header.cells];
        r.read_exact(&mut buf)?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of eight bytes")))
            .collect())
    };
    let phi = read_field()?;
    let phidot = read_field()?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(invalid("trailing bytes after checkpoint arrays"));
    }
    let state = FlowState {
        t: header.t,
        epsilon: header.epsilon,
        mode: header.mode,
        phi,
        phidot,
        positivity_margin: header.positivity_margin,
    };
    Ok((header, state))
}
