//! CSV/JSON readers and writers for the experiment artifacts. Floats are
//! written with the shortest round-trip representation, so identical runs
//! produce byte-identical files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::Serialize;

use crate::boundary::BoundaryPartition;
use crate::energy::EnergyTrace;
use crate::error::{Error, Result};
use crate::solver::{AngularDensityField, TraceBlock};
use crate::stability::StabilityReport;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value)
        .map_err(|e| Error::Parse(format!("serializing {}: {e}", path.display())))?;
    writer.write_all(b"\n")?;
    Ok(())
}

/// face_id, ordinate_id, nu_dot_v, side.
pub fn write_partition_csv(path: &Path, partition: &BoundaryPartition) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "face_id,ordinate_id,nu_dot_v,side")?;
    for e in &partition.gamma_plus {
        writeln!(w, "{},{},{},plus", e.face, e.ordinate, e.nu_dot_v)?;
    }
    for e in &partition.gamma_minus {
        writeln!(w, "{},{},{},minus", e.face, e.ordinate, e.nu_dot_v)?;
    }
    Ok(())
}

/// face_id, ordinate_id, t, u, nu_dot_v.
pub fn write_trace_csv(path: &Path, block: &TraceBlock, dt: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "face_id,ordinate_id,t,u,nu_dot_v")?;
    for (row, e) in block.entries.iter().enumerate() {
        for n in 0..block.n_nodes() {
            let t = n as f64 * dt;
            writeln!(
                w,
                "{},{},{},{},{}",
                e.face,
                e.ordinate,
                t,
                block.values[(row, n)],
                e.nu_dot_v
            )?;
        }
    }
    Ok(())
}

/// t, E.
pub fn write_energy_csv(path: &Path, trace: &EnergyTrace) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,E")?;
    for (n, e) in trace.values.iter().enumerate() {
        writeln!(w, "{},{}", n as f64 * trace.dt, e)?;
    }
    Ok(())
}

/// experiment_id, coeff_norm, meas_norm, ratio.
pub fn write_ensemble_csv(path: &Path, reports: &[StabilityReport]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "experiment_id,coeff_norm,meas_norm,ratio")?;
    for r in reports {
        let ratio = r
            .ratio
            .map(|v| v.to_string())
            .unwrap_or_else(|| "degenerate".to_string());
        writeln!(
            w,
            "{},{},{},{}",
            r.experiment_id, r.coefficient_diff_norm, r.measurement_norm, ratio
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FieldSidecar {
    shape: [usize; 3],
    order: &'static str,
    dtype: &'static str,
    dt: f64,
    horizon: f64,
}

/// Dump the interior history as little-endian f64 with a JSON sidecar
/// describing shape and layout.
pub fn dump_field_binary(base: &Path, field: &AngularDensityField) -> Result<Vec<String>> {
    let interior = field.interior.as_ref().ok_or_else(|| {
        Error::IncompleteData("field dump needs the recorded interior history".into())
    })?;
    let bin_path = base.with_extension("bin");
    let json_path = base.with_extension("json");
    let mut w = BufWriter::new(File::create(&bin_path)?);
    for v in interior.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    drop(w);
    let shape = interior.shape();
    write_json(
        &json_path,
        &FieldSidecar {
            shape: [shape[0], shape[1], shape[2]],
            order: "time,cell,ordinate (row-major)",
            dtype: "f64-le",
            dt: field.dt,
            horizon: field.horizon,
        },
    )?;
    Ok(vec![
        bin_path.display().to_string(),
        json_path.display().to_string(),
    ])
}

fn parse_field<T: std::str::FromStr>(raw: &str, line: usize, what: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: cannot parse {what} from {raw:?}")))
}

/// Load a coefficient field from CSV rows (cell_id, ordinate_id, value);
/// a header line is allowed; every grid point must be covered exactly once.
pub fn read_coefficient_csv(path: &str, n_cells: usize, n_ord: usize) -> Result<Array2<f64>> {
    let reader = BufReader::new(
        File::open(path).map_err(|e| Error::Parse(format!("cannot open {path}: {e}")))?,
    );
    let mut values = Array2::from_elem((n_cells, n_ord), f64::NAN);
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (idx == 0 && trimmed.starts_with("cell")) {
            continue;
        }
        let parts: Vec<&str> = trimmed.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!(
                "line {}: expected cell_id,ordinate_id,value",
                idx + 1
            )));
        }
        let cell: usize = parse_field(parts[0], idx + 1, "cell_id")?;
        let ord: usize = parse_field(parts[1], idx + 1, "ordinate_id")?;
        let value: f64 = parse_field(parts[2], idx + 1, "value")?;
        if cell >= n_cells || ord >= n_ord {
            return Err(Error::Parse(format!(
                "line {}: index ({cell}, {ord}) outside the {n_cells}x{n_ord} grid",
                idx + 1
            )));
        }
        values[(cell, ord)] = value;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::IncompleteData(format!(
            "{path} does not cover every (cell, ordinate) pair"
        )));
    }
    Ok(values)
}

/// Load raw phase-kernel values from CSV rows
/// (cell_id, ordinate_out, ordinate_in, value).
pub fn read_phase_csv(path: &str, n_cells: usize, n_ord: usize) -> Result<Array3<f64>> {
    let reader = BufReader::new(
        File::open(path).map_err(|e| Error::Parse(format!("cannot open {path}: {e}")))?,
    );
    let mut values = Array3::from_elem((n_cells, n_ord, n_ord), f64::NAN);
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (idx == 0 && trimmed.starts_with("cell")) {
            continue;
        }
        let parts: Vec<&str> = trimmed.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Parse(format!(
                "line {}: expected cell_id,ordinate_out,ordinate_in,value",
                idx + 1
            )));
        }
        let cell: usize = parse_field(parts[0], idx + 1, "cell_id")?;
        let out: usize = parse_field(parts[1], idx + 1, "ordinate_out")?;
        let inn: usize = parse_field(parts[2], idx + 1, "ordinate_in")?;
        let value: f64 = parse_field(parts[3], idx + 1, "value")?;
        if cell >= n_cells || out >= n_ord || inn >= n_ord {
            return Err(Error::Parse(format!(
                "line {}: index outside the kernel dimensions",
                idx + 1
            )));
        }
        values[(cell, out, inn)] = value;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::IncompleteData(format!(
            "{path} does not cover every kernel entry"
        )));
    }
    Ok(values)
}
