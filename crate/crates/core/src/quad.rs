//! Shared quadrature helpers. Boundary integrals use the face-area times
//! ordinate-weight rule of the recorded traces and the trapezoidal rule in
//! time, so every module integrates identically.

use ndarray::Array2;

use crate::solver::TraceEntry;

/// Weight applied to the squared trace value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxWeight {
    /// Signed nu . v factor (negative on inflow pairs).
    Signed,
    /// Unweighted surface integral.
    One,
}

/// Trapezoidal time weight for node `n` of `n_nodes`.
pub fn trapezoid_weight(n: usize, n_nodes: usize, dt: f64) -> f64 {
    if n_nodes == 1 {
        0.0
    } else if n == 0 || n == n_nodes - 1 {
        0.5 * dt
    } else {
        dt
    }
}

/// int_0^T sum over entries of w(entry) * value^2 dS dv dt.
pub fn trace_integral_sq(
    entries: &[TraceEntry],
    values: &Array2<f64>,
    dt: f64,
    weight: FluxWeight,
) -> f64 {
    let n_nodes = values.ncols();
    let mut total = 0.0;
    for n in 0..n_nodes {
        let tw = trapezoid_weight(n, n_nodes, dt);
        let mut shell = 0.0;
        for (row, e) in entries.iter().enumerate() {
            let coef = match weight {
                FluxWeight::Signed => e.nu_dot_v,
                FluxWeight::One => 1.0,
            };
            let v = values[(row, n)];
            shell += coef * v * v * e.area * e.weight;
        }
        total += tw * shell;
    }
    total
}
