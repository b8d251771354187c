//! Linear-in-time weight machinery: the weight phi(x, v, t) = -beta t + v.x,
//! the transport derivative B = |v|^2 - beta of the weight, the geometric
//! level constants, the time cutoff, the auxiliary field z = chi * du/dt,
//! and numerical evaluation of the two weighted inequalities that bound the
//! initial and bulk terms by the operator residual and outflow data.
//!
//! Exponential weights exp(2 s phi) are evaluated with a per-s max
//! subtraction: every reported integral carries a common shift exp(-m(s)),
//! which cancels in the fitted ratios and is recorded in the report.

use ndarray::{Array2, Array3, Axis};
use serde::Serialize;

use crate::boundary::vx_extrema;
use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::mesh::SpatialMesh;
use crate::phase::PhaseKernel;
use crate::quad::trapezoid_weight;
use crate::solver::{
    apply_streaming, scattering_integral, time_differentiate_history, time_differentiate_rows,
    AngularDensityField, Inflow, TraceBlock,
};
use crate::velocity::VelocitySet;

/// Largest admissible sup-norm of the terminal slice for the weighted
/// inequalities (they are stated for fields vanishing at the final time).
pub const TERMINAL_TOL: f64 = 1e-10;

/// The weight phi(x, v, t) = -beta t + v . x.
pub fn weight_phi(x: [f64; 2], v: [f64; 2], t: f64, beta: f64) -> f64 {
    -beta * t + v[0] * x[0] + v[1] * x[1]
}

/// B = |v|^2 - beta, the value of d/dt phi + v . grad phi; must be positive.
pub fn weight_b(v: [f64; 2], beta: f64) -> Result<f64> {
    let speed_sq = v[0] * v[0] + v[1] * v[1];
    if !(beta > 0.0 && beta < speed_sq) {
        return Err(Error::Domain(format!(
            "beta must lie strictly in (0, |v|^2) = (0, {speed_sq}), got {beta}"
        )));
    }
    Ok(speed_sq - beta)
}

/// Explicit grid of weight parameters s.
#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize)]
pub struct SGridSpec {
    pub s_min: f64,
    pub s_max: f64,
    pub count: usize,
}

/// Geometry of the weight: extrema of v.x, the two intermediate levels, the
/// cutoff width, and the s grid.
#[derive(Debug, Clone, Serialize)]
pub struct CarlemanConfig {
    pub beta: f64,
    pub horizon: f64,
    /// min over the closed domain and ordinates of v . x.
    pub r_min: f64,
    /// max over the closed domain and ordinates of v . x.
    pub r_max: f64,
    pub r0: f64,
    pub r1: f64,
    /// r1 - r0, the level separation driving the absorption step.
    pub mu: f64,
    pub delta: f64,
    pub s0: f64,
    pub s_grid: Vec<f64>,
}

impl CarlemanConfig {
    /// Evaluate the cutoff at time t.
    pub fn chi(&self, t: f64) -> Result<f64> {
        cutoff_chi(t, self)
    }

    fn validate(&self) -> Result<()> {
        let shifted = self.r_max - self.beta * self.horizon;
        if !(shifted < self.r0 && self.r0 < self.r1 && self.r1 < self.r_min) {
            return Err(Error::Config(format!(
                "level ordering violated: need r_max - beta T < r0 < r1 < r_min, got {shifted} / {} / {} / {}",
                self.r0, self.r1, self.r_min
            )));
        }
        if !(self.mu > 0.0) {
            return Err(Error::Config("level separation mu must be positive".into()));
        }
        if !(self.delta > 0.0 && 2.0 * self.delta < self.horizon) {
            return Err(Error::Config(format!(
                "cutoff width delta = {} must satisfy 0 < 2 delta < T = {}",
                self.delta, self.horizon
            )));
        }
        if self.r_min - self.beta * self.delta <= self.r1 {
            return Err(Error::Config(
                "early-window level bound violated: r_min - beta delta must exceed r1".into(),
            ));
        }
        if self.r_max - self.beta * (self.horizon - 2.0 * self.delta) >= self.r0 {
            return Err(Error::Config(
                "late-window level bound violated: r_max - beta (T - 2 delta) must stay below r0"
                    .into(),
            ));
        }
        if self.s_grid.is_empty()
            || self.s_grid.windows(2).any(|w| w[1] <= w[0])
            || self.s_grid[0] <= 0.0
        {
            return Err(Error::Config(
                "s grid must be strictly increasing and positive".into(),
            ));
        }
        Ok(())
    }
}

/// Build the weight geometry for a mesh/ordinate pair and horizon.
///
/// The intermediate levels sit at the tertiles of the gap
/// (r_max - beta T, r_min), which maximizes the smallest of the three
/// slacks; the cutoff width takes 90% of the largest admissible value.
pub fn make_carleman_config(
    mesh: &SpatialMesh,
    vset: &VelocitySet,
    horizon: f64,
    beta: f64,
    s_spec: Option<SGridSpec>,
) -> Result<CarlemanConfig> {
    let min_speed_sq = vset.min_speed_sq();
    if !(beta > 0.0 && beta < min_speed_sq) {
        return Err(Error::Domain(format!(
            "beta must lie in (0, min |v|^2) = (0, {min_speed_sq}), got {beta}"
        )));
    }
    let (r_min, r_max) = vx_extrema(mesh, vset);
    let t_min = (r_max - r_min) / beta;
    if !(horizon > t_min) {
        return Err(Error::ObservationTime(format!(
            "horizon T = {horizon} must exceed (max v.x - min v.x)/beta = {t_min}"
        )));
    }
    let shifted = r_max - beta * horizon;
    let gap = r_min - shifted;
    let r0 = shifted + gap / 3.0;
    let r1 = shifted + 2.0 * gap / 3.0;
    let mu = r1 - r0;
    let delta = 0.9
        * ((r_min - r1) / beta)
            .min((r0 - shifted) / (2.0 * beta))
            .min(horizon / 3.0);
    let s0 = 5.0 / (r_min - r0);
    let (s_min, s_max, count) = match s_spec {
        Some(spec) => {
            if !(spec.s_min > 0.0 && spec.s_max > spec.s_min && spec.count >= 2) {
                return Err(Error::Config(format!(
                    "s grid spec needs 0 < s_min < s_max and count >= 2, got {spec:?}"
                )));
            }
            (spec.s_min, spec.s_max, spec.count)
        }
        None => (s0, 4.0 * s0, 8),
    };
    let s_grid: Vec<f64> = (0..count)
        .map(|i| {
            let f = i as f64 / (count - 1) as f64;
            (s_min.ln() + f * (s_max.ln() - s_min.ln())).exp()
        })
        .collect();
    let cfg = CarlemanConfig {
        beta,
        horizon,
        r_min,
        r_max,
        r0,
        r1,
        mu,
        delta,
        s0: s_min,
        s_grid,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Quintic (C^2) smoothstep cutoff: 1 on [0, T - 2 delta], 0 on
/// [T - delta, T], monotone in between.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CutoffFunction {
    pub horizon: f64,
    pub delta: f64,
}

impl CutoffFunction {
    pub fn value(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * self.horizon.max(1.0);
        if t < -slack || t > self.horizon + slack {
            return Err(Error::Domain(format!(
                "cutoff evaluated outside [0, T]: t = {t}, T = {}",
                self.horizon
            )));
        }
        let lo = self.horizon - 2.0 * self.delta;
        let hi = self.horizon - self.delta;
        if t <= lo {
            Ok(1.0)
        } else if t >= hi {
            Ok(0.0)
        } else {
            let xi = (t - lo) / self.delta;
            Ok(1.0 - xi * xi * xi * (10.0 + xi * (-15.0 + 6.0 * xi)))
        }
    }

    /// d/dt of the cutoff; vanishes outside (T - 2 delta, T - delta).
    pub fn derivative(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * self.horizon.max(1.0);
        if t < -slack || t > self.horizon + slack {
            return Err(Error::Domain(format!(
                "cutoff evaluated outside [0, T]: t = {t}, T = {}",
                self.horizon
            )));
        }
        let lo = self.horizon - 2.0 * self.delta;
        let hi = self.horizon - self.delta;
        if t <= lo || t >= hi {
            Ok(0.0)
        } else {
            let xi = (t - lo) / self.delta;
            Ok(-30.0 * xi * xi * (xi - 1.0) * (xi - 1.0) / self.delta)
        }
    }
}

pub fn cutoff_chi(t: f64, cfg: &CarlemanConfig) -> Result<f64> {
    CutoffFunction {
        horizon: cfg.horizon,
        delta: cfg.delta,
    }
    .value(t)
}

/// Extremes of phi over cell centers, corners and ordinates inside the two
/// cutoff windows; used to confirm the level bounds by scanning.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LevelSetScan {
    /// min of phi over the grid for t in [0, delta].
    pub min_phi_early: f64,
    /// max of phi over the grid for t in [T - 2 delta, T].
    pub max_phi_late: f64,
}

pub fn scan_level_sets(
    cfg: &CarlemanConfig,
    mesh: &SpatialMesh,
    vset: &VelocitySet,
    n_time_samples: usize,
) -> LevelSetScan {
    let mut points: Vec<[f64; 2]> = (0..mesh.n_cells()).map(|c| mesh.cell_center(c)).collect();
    points.extend_from_slice(&mesh.corners());
    let sample = |t0: f64, t1: f64, minimize: bool| -> f64 {
        let mut best = if minimize {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        for k in 0..n_time_samples {
            let t = t0 + (t1 - t0) * k as f64 / (n_time_samples - 1).max(1) as f64;
            for v in &vset.ordinates {
                for x in &points {
                    let p = weight_phi(*x, *v, t, cfg.beta);
                    best = if minimize { best.min(p) } else { best.max(p) };
                }
            }
        }
        best
    };
    LevelSetScan {
        min_phi_early: sample(0.0, cfg.delta, true),
        max_phi_late: sample(cfg.horizon - 2.0 * cfg.delta, cfg.horizon, false),
    }
}

/// z = chi(t) * du/dt, built from the recorded history and traces.
///
/// The terminal slice vanishes exactly because chi(T) = 0, so z always
/// satisfies the terminal precondition of the weighted inequalities. At
/// t = 0 the one-sided stencil reproduces the source product f R(.,.,0) of
/// a linearized run to first order in dt.
pub fn auxiliary_z(field: &AngularDensityField, cfg: &CarlemanConfig) -> Result<AngularDensityField> {
    let interior = field.interior.as_ref().ok_or_else(|| {
        Error::IncompleteData("auxiliary field needs the recorded interior history".into())
    })?;
    if field.n_nodes() < 3 {
        return Err(Error::InsufficientData(
            "auxiliary field needs at least 3 time nodes".into(),
        ));
    }
    if (field.horizon - cfg.horizon).abs() > 1e-9 * cfg.horizon.max(1.0) {
        return Err(Error::Config(format!(
            "field horizon {} does not match the weight geometry horizon {}",
            field.horizon, cfg.horizon
        )));
    }
    let dt = field.dt;
    let n_nodes = field.n_nodes();
    let chi: Vec<f64> = (0..n_nodes)
        .map(|n| cfg.chi((n as f64 * dt).min(cfg.horizon)))
        .collect::<Result<_>>()?;

    let mut z = time_differentiate_history(interior, dt)?;
    for (n, &c) in chi.iter().enumerate() {
        z.index_axis_mut(Axis(0), n).mapv_inplace(|v| v * c);
    }

    let diff_block = |block: &TraceBlock| -> Result<TraceBlock> {
        let mut values = time_differentiate_rows(&block.values, dt)?;
        for n in 0..n_nodes {
            let c = chi[n];
            for row in 0..values.nrows() {
                values[(row, n)] *= c;
            }
        }
        Ok(TraceBlock {
            entries: block.entries.clone(),
            values,
        })
    };

    let trace_out = diff_block(&field.trace_out)?;
    let trace_in = diff_block(&field.trace_in)?;
    let final_slice = z.index_axis(Axis(0), n_nodes - 1).to_owned();
    Ok(AngularDensityField {
        interior: Some(z),
        final_slice,
        dt,
        n_steps: field.n_steps,
        horizon: field.horizon,
        trace_out,
        trace_in,
    })
}

/// One evaluated point of a weighted inequality.
#[derive(Debug, Clone, Serialize)]
pub struct SPointReport {
    pub s: f64,
    /// s * weighted initial term (shifted by exp(-log_shift)).
    pub lhs_initial: f64,
    /// s^2 * weighted bulk term.
    pub lhs_bulk: f64,
    /// Weighted squared operator residual.
    pub rhs_source: f64,
    /// Weighted outflow term.
    pub rhs_boundary: f64,
    /// (lhs_initial + lhs_bulk) / (rhs_source + rhs_boundary); absent for
    /// an identically vanishing field.
    pub c: Option<f64>,
    /// Common exponent subtracted before exponentiation at this s.
    pub log_shift: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub lemma_id: String,
    pub geometry: CarlemanConfig,
    pub points: Vec<SPointReport>,
}

impl InequalityReport {
    /// max/min of the fitted constants over the s grid; None when any
    /// point is not applicable.
    pub fn c_spread(&self) -> Option<f64> {
        let cs: Option<Vec<f64>> = self.points.iter().map(|p| p.c).collect();
        let cs = cs?;
        let lo = cs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = cs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some(hi / lo)
    }
}

enum BoundaryWeight {
    /// Constant-weight outflow term.
    Plain,
    /// s * (nu . v)-weighted outflow term.
    SignedTimesS,
}

/// Weighted inequality with the plain transport operator
/// P u = du/dt + v.grad u + sigma_t u on the residual side and the
/// s (nu.v)-weighted outflow term.
pub fn evaluate_lemma_streaming(
    field: &AngularDensityField,
    cfg: &CarlemanConfig,
    sigma_t: &CoefficientField,
    mesh: &SpatialMesh,
    vset: &VelocitySet,
) -> Result<InequalityReport> {
    evaluate_weighted_inequality(
        field,
        cfg,
        sigma_t,
        None,
        mesh,
        vset,
        BoundaryWeight::SignedTimesS,
        "weighted-streaming",
    )
}

/// Weighted inequality with the full scattering operator
/// P u - sigma_s int p u dv' on the residual side and the constant-weight
/// outflow term.
pub fn evaluate_lemma_scattering(
    field: &AngularDensityField,
    cfg: &CarlemanConfig,
    sigma_t: &CoefficientField,
    sigma_s: &CoefficientField,
    phase: &PhaseKernel,
    mesh: &SpatialMesh,
    vset: &VelocitySet,
) -> Result<InequalityReport> {
    evaluate_weighted_inequality(
        field,
        cfg,
        sigma_t,
        Some((sigma_s, phase)),
        mesh,
        vset,
        BoundaryWeight::Plain,
        "weighted-scattering",
    )
}

#[allow(clippy::too_many_arguments)]
fn evaluate_weighted_inequality(
    field: &AngularDensityField,
    cfg: &CarlemanConfig,
    sigma_t: &CoefficientField,
    scattering: Option<(&CoefficientField, &PhaseKernel)>,
    mesh: &SpatialMesh,
    vset: &VelocitySet,
    boundary_weight: BoundaryWeight,
    lemma_id: &str,
) -> Result<InequalityReport> {
    let interior = field.interior.as_ref().ok_or_else(|| {
        Error::IncompleteData("weighted inequalities need the recorded interior history".into())
    })?;
    let terminal = field
        .final_slice
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if terminal > TERMINAL_TOL {
        return Err(Error::Precondition(format!(
            "terminal slice must vanish (sup {terminal:.3e} > {TERMINAL_TOL:.0e}); \
             apply the cutoff first"
        )));
    }

    let n_nodes = field.n_nodes();
    let n_cells = mesh.n_cells();
    let n_ord = vset.len();
    let dt = field.dt;
    let area = mesh.cell_area();

    // Discrete operator residual with the solver's stencils: forward time
    // difference (backward at the last node), upwind streaming with zero
    // ghost data, pointwise attenuation, optional scattering subtraction.
    let mut residual = Array3::zeros((n_nodes, n_cells, n_ord));
    for n in 0..n_nodes {
        let slice = interior.index_axis(Axis(0), n).to_owned();
        let stream = apply_streaming(&slice, mesh, vset, &Inflow::Zero)?;
        let scat = scattering.map(|(ss, kernel)| {
            let s = scattering_integral(&slice, kernel, vset);
            (ss, s)
        });
        for c in 0..n_cells {
            for j in 0..n_ord {
                let dtu = if n + 1 < n_nodes {
                    (interior[(n + 1, c, j)] - interior[(n, c, j)]) / dt
                } else {
                    (interior[(n, c, j)] - interior[(n - 1, c, j)]) / dt
                };
                let mut r = dtu + stream[(c, j)] + sigma_t.values[(c, j)] * slice[(c, j)];
                if let Some((ss, ref s)) = scat {
                    r -= ss.values[(c, j)] * s[(c, j)];
                }
                residual[(n, c, j)] = r;
            }
        }
    }

    // v . x at cell centers per ordinate, and at face centers per entry.
    let mut dots = Array2::zeros((n_cells, n_ord));
    for c in 0..n_cells {
        let x = mesh.cell_center(c);
        for (j, v) in vset.ordinates.iter().enumerate() {
            dots[(c, j)] = v[0] * x[0] + v[1] * x[1];
        }
    }
    let face_dots: Vec<f64> = field
        .trace_out
        .entries
        .iter()
        .map(|e| {
            let x = mesh.boundary_faces[e.face].center;
            let v = vset.ordinates[e.ordinate];
            v[0] * x[0] + v[1] * x[1]
        })
        .collect();

    let mut points = Vec::with_capacity(cfg.s_grid.len());
    for &s in &cfg.s_grid {
        let log_shift = 2.0 * s * cfg.r_max;
        let mut init = 0.0;
        let mut bulk = 0.0;
        let mut src = 0.0;
        for n in 0..n_nodes {
            let t = n as f64 * dt;
            let tw = trapezoid_weight(n, n_nodes, dt);
            for c in 0..n_cells {
                for j in 0..n_ord {
                    let w = (2.0 * s * (-cfg.beta * t + dots[(c, j)]) - log_shift).exp();
                    let z = interior[(n, c, j)];
                    let q = area * vset.weights[j];
                    if n == 0 {
                        init += z * z * w * q;
                    }
                    bulk += tw * z * z * w * q;
                    let r = residual[(n, c, j)];
                    src += tw * r * r * w * q;
                }
            }
        }
        let mut bdy = 0.0;
        for n in 0..n_nodes {
            let t = n as f64 * dt;
            let tw = trapezoid_weight(n, n_nodes, dt);
            for (row, e) in field.trace_out.entries.iter().enumerate() {
                let w = (2.0 * s * (-cfg.beta * t + face_dots[row]) - log_shift).exp();
                let v = field.trace_out.values[(row, n)];
                let coef = match boundary_weight {
                    BoundaryWeight::Plain => 1.0,
                    BoundaryWeight::SignedTimesS => s * e.nu_dot_v,
                };
                bdy += tw * coef * v * v * w * e.area * e.weight;
            }
        }
        let lhs_initial = s * init;
        let lhs_bulk = s * s * bulk;
        let denom = src + bdy;
        let c = if denom > 1e-300 {
            Some((lhs_initial + lhs_bulk) / denom)
        } else {
            None
        };
        points.push(SPointReport {
            s,
            lhs_initial,
            lhs_bulk,
            rhs_source: src,
            rhs_boundary: bdy,
            c,
            log_shift,
        });
    }

    Ok(InequalityReport {
        lemma_id: lemma_id.to_string(),
        geometry: cfg.clone(),
        points,
    })
}
