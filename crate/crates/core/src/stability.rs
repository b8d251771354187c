//! Experiment harness for the inverse-problem stability checks: solve
//! coefficient pairs (or linearized source problems), measure the
//! time-differentiated outflow data, and report the ratio between the
//! coefficient perturbation norm and the measurement norm. Ensembles of
//! such ratios probe both inequality directions at once: ratios bounded
//! away from zero and infinity mean a single constant serves both sides.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::min_observation_time;
use crate::coefficients::{
    AdmissibilityBounds, CoefficientField, CoefficientLabel, SourceFactor,
};
use crate::error::{Error, Result};
use crate::mesh::SpatialMesh;
use crate::phase::PhaseKernel;
use crate::quad::{trace_integral_sq, FluxWeight};
use crate::solver::{
    solve_forward, solve_linearized, time_differentiate_rows, BoundarySide, MeasurementTrace,
    ProblemData, SolveOptions,
};
use crate::velocity::VelocitySet;

/// Norm of a coefficient/source difference below which a pair counts as
/// degenerate (identical up to rounding).
const DEGENERATE_TOL: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SigmaT,
    SigmaS,
    LinearizedSource,
}

/// Which measurement functional an experiment uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementSide {
    /// Outflow pairs with the nu . v flux weight.
    GammaPlusWeighted,
    /// Every non-tangential boundary pair, unweighted.
    FullBoundary,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub experiment_id: String,
    pub kind: ExperimentKind,
    pub side: MeasurementSide,
    /// L2 norm of the coefficient difference (or of the source f).
    pub coefficient_diff_norm: f64,
    /// Boundary norm of the time-differentiated data.
    pub measurement_norm: f64,
    /// coefficient_diff_norm / measurement_norm, absent for degenerate
    /// pairs.
    pub ratio: Option<f64>,
    pub degenerate: bool,
}

/// Boundary norm of a time-differentiated trace: square root of the
/// quadrature of (weight) |d/dt u|^2 over faces, ordinates and time.
pub fn measurement_norm(trace: &MeasurementTrace, weighted: bool) -> Result<f64> {
    if weighted && trace.side != BoundarySide::GammaPlus {
        return Err(Error::SignConvention(
            "the flux-weighted norm is defined only on the outflow side where nu . v > 0".into(),
        ));
    }
    let mode = if weighted {
        FluxWeight::Signed
    } else {
        FluxWeight::One
    };
    let sq = trace_integral_sq(&trace.entries, &trace.dt_values, trace.dt, mode);
    Ok(sq.max(0.0).sqrt())
}

fn check_positive_initial(initial: &Array2<f64>) -> Result<()> {
    if initial.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Hypothesis(
            "the initial value must be strictly positive on the closed grid".into(),
        ));
    }
    Ok(())
}

fn check_observation_time(
    horizon: f64,
    mesh: &SpatialMesh,
    vset: &VelocitySet,
    beta: Option<f64>,
) -> Result<()> {
    let t_min = min_observation_time(mesh, vset, beta)?;
    if !(horizon > t_min) {
        return Err(Error::ObservationTime(format!(
            "horizon T = {horizon} must exceed the minimum observation time {t_min}"
        )));
    }
    Ok(())
}

fn check_bound(
    field: &CoefficientField,
    bounds: Option<&AdmissibilityBounds>,
    name: &str,
) -> Result<()> {
    if let Some(b) = bounds {
        let sup = field.sup_norm();
        if sup > b.m {
            return Err(Error::Hypothesis(format!(
                "{name} has sup-norm {sup} above the admissibility bound {}",
                b.m
            )));
        }
    }
    Ok(())
}

/// Difference of the two recorded outflow traces, then differentiated in
/// time. Differencing before differentiating makes identical pairs cancel
/// exactly.
fn outflow_difference_trace(
    u1: &crate::solver::AngularDensityField,
    u2: &crate::solver::AngularDensityField,
) -> Result<MeasurementTrace> {
    let diff = &u1.trace_out.values - &u2.trace_out.values;
    let dt_values = time_differentiate_rows(&diff, u1.dt)?;
    Ok(MeasurementTrace {
        side: BoundarySide::GammaPlus,
        entries: u1.trace_out.entries.clone(),
        dt_values,
        dt: u1.dt,
    })
}

fn pair_report(
    experiment_id: String,
    kind: ExperimentKind,
    diff_norm: f64,
    meas: f64,
) -> StabilityReport {
    let degenerate = diff_norm <= DEGENERATE_TOL;
    let ratio = if degenerate || meas <= 0.0 {
        None
    } else {
        Some(diff_norm / meas)
    };
    StabilityReport {
        experiment_id,
        kind,
        side: MeasurementSide::GammaPlusWeighted,
        coefficient_diff_norm: diff_norm,
        measurement_norm: meas,
        ratio,
        degenerate,
    }
}

/// Solve the forward pair (sigma_t, sigma_t + perturbation) with shared
/// initial value, inflow, scattering coefficient and kernel, and compare
/// the perturbation norm against the weighted outflow measurement.
pub fn run_sigma_t_experiment(
    experiment_id: &str,
    base: &ProblemData,
    perturbation: &CoefficientField,
    mesh: &SpatialMesh,
    vset: &VelocitySet,
    opts: &SolveOptions,
    bounds: Option<&AdmissibilityBounds>,
) -> Result<StabilityReport> {
    check_positive_initial(&base.initial)?;
    check_observation_time(base.horizon, mesh, vset, None)?;

    let perturbed = &base.sigma_t.values + &perturbation.values;
    if perturbed.iter().any(|&v| v < 0.0) {
        return Err(Error::Hypothesis(
            "perturbed total attenuation must stay nonnegative".into(),
        ));
    }
    let sigma_t2 = CoefficientField::new(perturbed, CoefficientLabel::SigmaT)?;
    check_bound(&base.sigma_t, bounds, "sigma_t")?;
    check_bound(&sigma_t2, bounds, "perturbed sigma_t")?;
    check_bound(&base.sigma_s, bounds, "sigma_s")?;

    let solve_opts = SolveOptions {
        record_interior: false,
        ..*opts
    };
    let u1 = solve_forward(base, mesh, vset, &solve_opts)?;
    let mut data2 = base.clone();
    data2.sigma_t = sigma_t2;
    let u2 = solve_forward(&data2, mesh, vset, &solve_opts)?;

    let trace = outflow_difference_trace(&u1, &u2)?;
    let meas = measurement_norm(&trace, true)?;
    let diff_norm = perturbation.l2_norm(mesh, vset);
    Ok(pair_report(
        experiment_id.to_string(),
        ExperimentKind::SigmaT,
        diff_norm,
        meas,
    ))
}

/// Same experiment with the roles exchanged: sigma_t is held fixed across
/// the pair while sigma_s is perturbed (so the absorption part moves
/// implicitly and must stay nonnegative).
pub fn run_sigma_s_experiment(
    experiment_id: &str,
    base: &ProblemData,
    perturbation: &CoefficientField,
    mesh: &SpatialMesh,
    vset: &VelocitySet,
    opts: &SolveOptions,
    bounds: Option<&AdmissibilityBounds>,
) -> Result<StabilityReport> {
    check_positive_initial(&base.initial)?;
    check_observation_time(base.horizon, mesh, vset, None)?;

    let perturbed = &base.sigma_s.values + &perturbation.values;
    if perturbed.iter().any(|&v| v < 0.0) {
        return Err(Error::Hypothesis(
            "perturbed scattering coefficient must stay nonnegative".into(),
        ));
    }
    for (label, ss) in [("base", &base.sigma_s.values), ("perturbed", &perturbed)] {
        let absorption_ok = base
            .sigma_t
            .values
            .iter()
            .zip(ss.iter())
            .all(|(t, s)| t - s >= -1e-14);
        if !absorption_ok {
            return Err(Error::Hypothesis(format!(
                "{label} scattering exceeds the shared total attenuation \
                 (absorption would turn negative)"
            )));
        }
    }
    let sigma_s2 = CoefficientField::new(perturbed, CoefficientLabel::SigmaS)?;
    check_bound(&base.sigma_t, bounds, "sigma_t")?;
    check_bound(&base.sigma_s, bounds, "sigma_s")?;
    check_bound(&sigma_s2, bounds, "perturbed sigma_s")?;

    let solve_opts = SolveOptions {
        record_interior: false,
        ..*opts
    };
    let u1 = solve_forward(base, mesh, vset, &solve_opts)?;
    let mut data2 = base.clone();
    data2.sigma_s = sigma_s2;
    let u2 = solve_forward(&data2, mesh, vset, &solve_opts)?;

    let trace = outflow_difference_trace(&u1, &u2)?;
    let meas = measurement_norm(&trace, true)?;
    let diff_norm = perturbation.l2_norm(mesh, vset);
    Ok(pair_report(
        experiment_id.to_string(),
        ExperimentKind::SigmaS,
        diff_norm,
        meas,
    ))
}

/// Solve the linearized source problem once and compare ||f|| against the
/// requested boundary measurement.
#[allow(clippy::too_many_arguments)]
pub fn run_linearized_experiment(
    experiment_id: &str,
    f: &CoefficientField,
    r: &SourceFactor,
    sigma_t: &CoefficientField,
    sigma_s: &CoefficientField,
    phase: &PhaseKernel,
    mesh: &SpatialMesh,
    vset: &VelocitySet,
    horizon: f64,
    opts: &SolveOptions,
    side: MeasurementSide,
    beta: Option<f64>,
) -> Result<StabilityReport> {
    let r_min = r.min_at_start(mesh.n_cells(), vset.len());
    if !(r_min > 0.0) {
        return Err(Error::Hypothesis(format!(
            "the source factor must be strictly positive at t = 0, min = {r_min}"
        )));
    }
    check_observation_time(horizon, mesh, vset, beta)?;

    let solve_opts = SolveOptions {
        record_interior: false,
        ..*opts
    };
    let field = solve_linearized(f, r, sigma_t, sigma_s, phase, mesh, vset, horizon, &solve_opts)?;

    let meas = match side {
        MeasurementSide::GammaPlusWeighted => {
            let trace = crate::solver::time_derivative_trace(&field, BoundarySide::GammaPlus)?;
            measurement_norm(&trace, true)?
        }
        MeasurementSide::FullBoundary => {
            let trace = crate::solver::time_derivative_trace(&field, BoundarySide::Full)?;
            measurement_norm(&trace, false)?
        }
    };
    let diff_norm = f.l2_norm(mesh, vset);
    let mut report = pair_report(
        experiment_id.to_string(),
        ExperimentKind::LinearizedSource,
        diff_norm,
        meas,
    );
    report.side = side;
    Ok(report)
}

/// Reproducible smooth Gaussian bump, constant across ordinates. The
/// center stays inside the middle of the domain and the width scales with
/// the domain size, so discrete perturbations stay smooth on the grid.
pub fn random_smooth_bump(
    rng: &mut ChaCha8Rng,
    mesh: &SpatialMesh,
    n_ord: usize,
    amplitude: f64,
    allow_negative: bool,
) -> Array2<f64> {
    let cx = mesh.origin[0] + mesh.extents[0] * rng.gen_range(0.25..0.75);
    let cy = mesh.origin[1] + mesh.extents[1] * rng.gen_range(0.25..0.75);
    let min_extent = mesh.extents[0].min(mesh.extents[1]);
    let width = min_extent * rng.gen_range(0.08..0.18);
    let sign = if allow_negative && rng.gen_bool(0.5) {
        -1.0
    } else {
        1.0
    };
    let mut values = Array2::zeros((mesh.n_cells(), n_ord));
    for c in 0..mesh.n_cells() {
        let [x, y] = mesh.cell_center(c);
        let r2 = (x - cx).powi(2) + (y - cy).powi(2);
        let v = sign * amplitude * (-r2 / (2.0 * width * width)).exp();
        for j in 0..n_ord {
            values[(c, j)] = v;
        }
    }
    values
}

pub fn member_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
    )
}

#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize)]
pub struct EnsembleSpec {
    pub count: usize,
    pub amplitude: f64,
    pub seed: u64,
}

/// Independent coefficient-pair experiments with random bump perturbations.
pub fn run_sigma_ensemble(
    kind: ExperimentKind,
    base: &ProblemData,
    mesh: &SpatialMesh,
    vset: &VelocitySet,
    opts: &SolveOptions,
    spec: &EnsembleSpec,
    bounds: Option<&AdmissibilityBounds>,
) -> Result<Vec<StabilityReport>> {
    (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = member_rng(spec.seed, i);
            let values = random_smooth_bump(&mut rng, mesh, vset.len(), spec.amplitude, true);
            let pert = CoefficientField {
                values,
                label: CoefficientLabel::Other,
            };
            let id = format!("{kind:?}-{i}");
            match kind {
                ExperimentKind::SigmaT => {
                    run_sigma_t_experiment(&id, base, &pert, mesh, vset, opts, bounds)
                }
                ExperimentKind::SigmaS => {
                    run_sigma_s_experiment(&id, base, &pert, mesh, vset, opts, bounds)
                }
                ExperimentKind::LinearizedSource => Err(Error::Config(
                    "linearized ensembles have their own driver".into(),
                )),
            }
        })
        .collect()
}

/// Independent linearized experiments with random bump sources.
#[allow(clippy::too_many_arguments)]
pub fn run_linearized_ensemble(
    sigma_t: &CoefficientField,
    sigma_s: &CoefficientField,
    phase: &PhaseKernel,
    mesh: &SpatialMesh,
    vset: &VelocitySet,
    horizon: f64,
    opts: &SolveOptions,
    side: MeasurementSide,
    spec: &EnsembleSpec,
    beta: Option<f64>,
) -> Result<Vec<StabilityReport>> {
    (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = member_rng(spec.seed, i);
            let values = random_smooth_bump(&mut rng, mesh, vset.len(), spec.amplitude, true);
            let f = CoefficientField {
                values,
                label: CoefficientLabel::Source,
            };
            run_linearized_experiment(
                &format!("linearized-{i}"),
                &f,
                &SourceFactor::Constant(1.0),
                sigma_t,
                sigma_s,
                phase,
                mesh,
                vset,
                horizon,
                opts,
                side,
                beta,
            )
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct HolderFit {
    /// Fitted exponent of measurement^2 bounding coefficient^2.
    pub theta: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    pub n_points: usize,
}

/// Least-squares slope of log ||f||^2 against log (measurement norm^2)
/// over an amplitude sweep.
pub fn fit_holder_exponent(reports: &[StabilityReport]) -> Result<HolderFit> {
    if reports
        .iter()
        .any(|r| r.degenerate || r.measurement_norm <= 0.0 || r.coefficient_diff_norm <= 0.0)
    {
        return Err(Error::InsufficientData(
            "degenerate (zero-norm) reports cannot enter the exponent fit".into(),
        ));
    }
    if reports.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "exponent fit needs at least 4 reports, got {}",
            reports.len()
        )));
    }
    let mut norms: Vec<f64> = reports.iter().map(|r| r.coefficient_diff_norm).collect();
    norms.sort_by(f64::total_cmp);
    norms.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs());
    if norms.len() < reports.len() {
        return Err(Error::InsufficientData(
            "exponent fit needs distinct amplitudes".into(),
        ));
    }
    let meas_min = reports
        .iter()
        .map(|r| r.measurement_norm)
        .fold(f64::INFINITY, f64::min);
    let meas_max = reports
        .iter()
        .map(|r| r.measurement_norm)
        .fold(0.0f64, f64::max);
    if meas_max / meas_min < 100.0 {
        return Err(Error::InsufficientData(format!(
            "exponent fit needs measurement norms spanning at least two decades, \
             got a span of {:.2}x",
            meas_max / meas_min
        )));
    }

    let xs: Vec<f64> = reports
        .iter()
        .map(|r| 2.0 * r.measurement_norm.ln())
        .collect();
    let ys: Vec<f64> = reports
        .iter()
        .map(|r| 2.0 * r.coefficient_diff_norm.ln())
        .collect();
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let theta = sxy / sxx;
    let intercept = mean_y - theta * mean_x;
    let residual = (xs
        .iter()
        .zip(ys.iter())
        .map(|(x, y)| {
            let e = y - (intercept + theta * x);
            e * e
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(HolderFit {
        theta,
        residual,
        n_points: reports.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleSummary {
    pub kind: ExperimentKind,
    pub side: MeasurementSide,
    pub n_reports: usize,
    pub rho_min: f64,
    pub rho_max: f64,
    /// rho_max / rho_min; a single constant serves both inequality
    /// directions across the ensemble exactly when this stays moderate.
    pub spread: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Summarize an ensemble of nondegenerate ratio reports of one kind.
pub fn verify_both_sided(reports: &[StabilityReport], threshold: f64) -> Result<EnsembleSummary> {
    let usable: Vec<&StabilityReport> = reports.iter().filter(|r| r.ratio.is_some()).collect();
    if usable.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "both-sided summary needs at least 5 nondegenerate reports, got {}",
            usable.len()
        )));
    }
    let kind = usable[0].kind;
    let side = usable[0].side;
    if usable.iter().any(|r| r.kind != kind || r.side != side) {
        return Err(Error::Config(
            "cannot mix experiment kinds or measurement sides in one summary \
             (the normalizations are incomparable)"
                .into(),
        ));
    }
    let mut rho_min = f64::INFINITY;
    let mut rho_max = 0.0f64;
    for r in &usable {
        let rho = r.ratio.unwrap();
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::InsufficientData(format!(
                "non-finite or nonpositive ratio in report {}",
                r.experiment_id
            )));
        }
        rho_min = rho_min.min(rho);
        rho_max = rho_max.max(rho);
    }
    let spread = rho_max / rho_min;
    Ok(EnsembleSummary {
        kind,
        side,
        n_reports: usable.len(),
        rho_min,
        rho_max,
        spread,
        threshold,
        pass: spread <= threshold,
    })
}
