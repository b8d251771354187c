//! Coefficient fields over the (cell, ordinate) grid, source factors for the
//! linearized problem, and the admissibility report against a uniform bound.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::SpatialMesh;
use crate::solver::AngularDensityField;
use crate::velocity::VelocitySet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientLabel {
    SigmaA,
    SigmaS,
    SigmaT,
    Source,
    Other,
}

/// Scalar field sampled at (cell, ordinate). Cross-sections are kept per
/// ordinate even when physically isotropic, since the model allows full
/// (x, v) dependence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientField {
    pub values: Array2<f64>,
    pub label: CoefficientLabel,
}

impl CoefficientField {
    pub fn new(values: Array2<f64>, label: CoefficientLabel) -> Result<Self> {
        let nonneg_required = matches!(
            label,
            CoefficientLabel::SigmaA | CoefficientLabel::SigmaS | CoefficientLabel::SigmaT
        );
        if nonneg_required && values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Domain(format!(
                "{label:?} field must be nonnegative and finite"
            )));
        }
        Ok(Self { values, label })
    }

    pub fn constant(value: f64, n_cells: usize, n_ord: usize, label: CoefficientLabel) -> Self {
        Self {
            values: Array2::from_elem((n_cells, n_ord), value),
            label,
        }
    }

    /// Pointwise sum, used to assemble sigma_t = sigma_a + sigma_s.
    pub fn sum(a: &CoefficientField, b: &CoefficientField, label: CoefficientLabel) -> Self {
        Self {
            values: &a.values + &b.values,
            label,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// L2 norm over the cell x ordinate grid with cell-area and ordinate
    /// weights.
    pub fn l2_norm(&self, mesh: &SpatialMesh, vset: &VelocitySet) -> f64 {
        let area = mesh.cell_area();
        let mut acc = 0.0;
        for c in 0..self.values.nrows() {
            for j in 0..self.values.ncols() {
                let v = self.values[(c, j)];
                acc += v * v * area * vset.weights[j];
            }
        }
        acc.sqrt()
    }
}

/// Uniform bound of the admissible class.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdmissibilityBounds {
    pub m: f64,
}

impl AdmissibilityBounds {
    pub fn new(m: f64) -> Result<Self> {
        if !(m > 0.0) {
            return Err(Error::Domain(format!("bound M must be positive, got {m}")));
        }
        Ok(Self { m })
    }
}

/// Time profile of the source factor R(x, v, t).
#[derive(Debug, Clone)]
pub enum SourceFactor {
    /// R identically equal to one constant.
    Constant(f64),
    /// Separable R(x, v, t) = spatial(x, v) * profile(t); the profile is
    /// sampled at the solver's time nodes.
    Separable {
        spatial: Array2<f64>,
        profile: Vec<f64>,
    },
    /// Fully tabulated samples indexed (time node, cell, ordinate).
    Field(Array3<f64>),
}

impl SourceFactor {
    pub fn value(&self, step: usize, cell: usize, ordinate: usize) -> f64 {
        match self {
            SourceFactor::Constant(c) => *c,
            SourceFactor::Separable { spatial, profile } => {
                spatial[(cell, ordinate)] * profile[step.min(profile.len() - 1)]
            }
            SourceFactor::Field(values) => values[(step, cell, ordinate)],
        }
    }

    /// Smallest value on the t = 0 slice over the full grid.
    pub fn min_at_start(&self, n_cells: usize, n_ord: usize) -> f64 {
        match self {
            SourceFactor::Constant(c) => *c,
            SourceFactor::Separable { spatial, profile } => {
                let p0 = profile.first().copied().unwrap_or(0.0);
                let ext = spatial.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
                (ext.0 * p0).min(ext.1 * p0)
            }
            SourceFactor::Field(values) => {
                let mut lo = f64::INFINITY;
                for c in 0..n_cells {
                    for j in 0..n_ord {
                        lo = lo.min(values[(0, c, j)]);
                    }
                }
                lo
            }
        }
    }
}

/// Discrete norms of a coefficient or solution field compared against the
/// uniform bound. Report-only: nothing is enforced, so experiments can probe
/// violations deliberately.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub bound: f64,
    pub sup_norm: f64,
    /// sqrt(int_0^T sup|u|^2 + sup|du/dt|^2 dt); zero for static coefficients.
    pub h1_linf: f64,
    /// sqrt(int_0^T ||u||^2 + ||du/dt||^2 + ||d2u/dt2||^2 dt).
    pub h2_l2: f64,
    /// sqrt(int_0^T ||grad u||^2 + ||grad du/dt||^2 dt).
    pub grad_h1_l2: f64,
    /// Quantity compared against the bound.
    pub total: f64,
    pub pass: bool,
}

/// Sup-norm check for a static coefficient field.
pub fn check_coefficient_admissibility(
    field: &CoefficientField,
    bounds: &AdmissibilityBounds,
) -> AdmissibilityReport {
    let sup = field.sup_norm();
    AdmissibilityReport {
        bound: bounds.m,
        sup_norm: sup,
        h1_linf: 0.0,
        h2_l2: 0.0,
        grad_h1_l2: 0.0,
        total: sup,
        pass: sup <= bounds.m,
    }
}

/// Discrete norms of a recorded solution field.
///
/// Time derivatives use forward differences (backward at the last node);
/// spatial gradients use centered differences with a one-sided fallback at
/// boundary cells, matching the first-order accuracy of the solver.
pub fn check_field_admissibility(
    field: &AngularDensityField,
    mesh: &SpatialMesh,
    vset: &VelocitySet,
    bounds: &AdmissibilityBounds,
) -> Result<AdmissibilityReport> {
    let values = field.interior.as_ref().ok_or_else(|| {
        Error::IncompleteData("admissibility norms need the recorded interior field".into())
    })?;
    let n_nodes = values.shape()[0];
    let n_cells = values.shape()[1];
    let n_ord = values.shape()[2];
    if n_nodes < 3 {
        return Err(Error::InsufficientData(
            "admissibility norms need at least 3 time nodes".into(),
        ));
    }
    let dt = field.dt;
    let area = mesh.cell_area();
    let (nx, ny) = (mesh.nx(), mesh.ny());
    let (hx, hy) = (mesh.cell_size[0], mesh.cell_size[1]);

    let l2_sq = |slice: &Array2<f64>| -> f64 {
        let mut acc = 0.0;
        for c in 0..n_cells {
            for j in 0..n_ord {
                acc += slice[(c, j)] * slice[(c, j)] * area * vset.weights[j];
            }
        }
        acc
    };
    let sup_sq = |slice: &Array2<f64>| -> f64 {
        slice.iter().fold(0.0f64, |m, v| m.max(v * v))
    };
    let grad_l2_sq = |slice: &Array2<f64>| -> f64 {
        let mut acc = 0.0;
        for j in 0..n_ord {
            for iy in 0..ny {
                for ix in 0..nx {
                    let c = iy * nx + ix;
                    let gx = if ix == 0 {
                        (slice[(c + 1, j)] - slice[(c, j)]) / hx
                    } else if ix == nx - 1 {
                        (slice[(c, j)] - slice[(c - 1, j)]) / hx
                    } else {
                        (slice[(c + 1, j)] - slice[(c - 1, j)]) / (2.0 * hx)
                    };
                    let gy = if iy == 0 {
                        (slice[(c + nx, j)] - slice[(c, j)]) / hy
                    } else if iy == ny - 1 {
                        (slice[(c, j)] - slice[(c - nx, j)]) / hy
                    } else {
                        (slice[(c + nx, j)] - slice[(c - nx, j)]) / (2.0 * hy)
                    };
                    acc += (gx * gx + gy * gy) * area * vset.weights[j];
                }
            }
        }
        acc
    };

    let slice_at = |n: usize| values.index_axis(ndarray::Axis(0), n).to_owned();
    // Forward-difference time derivative at node n (backward at the end).
    let dt_slice = |n: usize| -> Array2<f64> {
        if n + 1 < n_nodes {
            (&slice_at(n + 1) - &slice_at(n)) / dt
        } else {
            (&slice_at(n) - &slice_at(n - 1)) / dt
        }
    };
    let dtt_slice = |n: usize| -> Array2<f64> {
        let m = n.clamp(1, n_nodes - 2);
        (&slice_at(m + 1) - &(2.0 * &slice_at(m)) + &slice_at(m - 1)) / (dt * dt)
    };

    // Trapezoidal time weights.
    let tw = |n: usize| -> f64 {
        if n == 0 || n == n_nodes - 1 {
            0.5 * dt
        } else {
            dt
        }
    };

    let mut sup_norm = 0.0f64;
    let mut h1_linf_sq = 0.0;
    let mut h2_l2_sq = 0.0;
    let mut grad_sq = 0.0;
    for n in 0..n_nodes {
        let u = slice_at(n);
        let du = dt_slice(n);
        let ddu = dtt_slice(n);
        sup_norm = sup_norm.max(sup_sq(&u).sqrt());
        h1_linf_sq += tw(n) * (sup_sq(&u) + sup_sq(&du));
        h2_l2_sq += tw(n) * (l2_sq(&u) + l2_sq(&du) + l2_sq(&ddu));
        grad_sq += tw(n) * (grad_l2_sq(&u) + grad_l2_sq(&du));
    }

    let h1_linf = h1_linf_sq.sqrt();
    let h2_l2 = h2_l2_sq.sqrt();
    let grad_h1_l2 = grad_sq.sqrt();
    let total = h1_linf + h2_l2 + grad_h1_l2;
    Ok(AdmissibilityReport {
        bound: bounds.m,
        sup_norm,
        h1_linf,
        h2_l2,
        grad_h1_l2,
        total,
        pass: total <= bounds.m,
    })
}
