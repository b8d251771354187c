//! Scattering phase kernel p(x, v, v') with quadrature-weighted row
//! normalization: sum_j' p(cell, j, j') w_j' = 1 for every row.

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::mesh::SpatialMesh;
use crate::velocity::VelocitySet;

/// Tolerance on the normalization invariant.
pub const ROW_SUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub enum PhaseKernel {
    /// p == 1/|V| everywhere; scattering reduces to the weighted ordinate
    /// mean, which the solver exploits.
    Isotropic {
        inv_measure: f64,
        n_cells: usize,
        n_ord: usize,
    },
    /// Tabulated kernel indexed (cell, ordinate_out, ordinate_in).
    Tabulated { values: Array3<f64> },
}

impl PhaseKernel {
    pub fn value(&self, cell: usize, j_out: usize, j_in: usize) -> f64 {
        match self {
            PhaseKernel::Isotropic { inv_measure, .. } => {
                let _ = (cell, j_out, j_in);
                *inv_measure
            }
            PhaseKernel::Tabulated { values } => values[(cell, j_out, j_in)],
        }
    }

    pub fn n_cells(&self) -> usize {
        match self {
            PhaseKernel::Isotropic { n_cells, .. } => *n_cells,
            PhaseKernel::Tabulated { values } => values.shape()[0],
        }
    }

    pub fn n_ord(&self) -> usize {
        match self {
            PhaseKernel::Isotropic { n_ord, .. } => *n_ord,
            PhaseKernel::Tabulated { values } => values.shape()[1],
        }
    }

    /// Largest deviation of any quadrature-weighted row sum from one.
    pub fn max_row_sum_error(&self, vset: &VelocitySet) -> f64 {
        match self {
            PhaseKernel::Isotropic { inv_measure, .. } => {
                (vset.measure * inv_measure - 1.0).abs()
            }
            PhaseKernel::Tabulated { values } => {
                let mut worst = 0.0f64;
                for c in 0..values.shape()[0] {
                    for j in 0..values.shape()[1] {
                        let mut s = 0.0;
                        for (jp, w) in vset.weights.iter().enumerate() {
                            s += values[(c, j, jp)] * w;
                        }
                        worst = worst.max((s - 1.0).abs());
                    }
                }
                worst
            }
        }
    }

    /// Materialize the kernel as a dense table (test and export helper).
    pub fn to_table(&self) -> Array3<f64> {
        match self {
            PhaseKernel::Isotropic {
                inv_measure,
                n_cells,
                n_ord,
            } => Array3::from_elem((*n_cells, *n_ord, *n_ord), *inv_measure),
            PhaseKernel::Tabulated { values } => values.clone(),
        }
    }
}

/// Normalize a nonnegative raw kernel row by row.
pub fn normalize_phase(raw: &Array3<f64>, vset: &VelocitySet) -> Result<PhaseKernel> {
    let (n_cells, n_out, n_in) = (raw.shape()[0], raw.shape()[1], raw.shape()[2]);
    if n_out != vset.len() || n_in != vset.len() {
        return Err(Error::IncompleteData(format!(
            "kernel ordinate axes ({n_out}, {n_in}) do not match the velocity set ({})",
            vset.len()
        )));
    }
    if raw.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Domain("raw kernel must be nonnegative and finite".into()));
    }
    let mut values = raw.clone();
    for c in 0..n_cells {
        for j in 0..n_out {
            let mut s = 0.0;
            for (jp, w) in vset.weights.iter().enumerate() {
                s += raw[(c, j, jp)] * w;
            }
            if !(s > 0.0) {
                return Err(Error::DegenerateKernel(format!(
                    "row (cell {c}, ordinate {j}) has zero quadrature sum"
                )));
            }
            for jp in 0..n_in {
                values[(c, j, jp)] /= s;
            }
        }
    }
    Ok(PhaseKernel::Tabulated { values })
}

/// The canonical isotropic kernel p == 1/|V|.
pub fn isotropic_phase(mesh: &SpatialMesh, vset: &VelocitySet) -> PhaseKernel {
    PhaseKernel::Isotropic {
        inv_measure: 1.0 / vset.measure,
        n_cells: mesh.n_cells(),
        n_ord: vset.len(),
    }
}
