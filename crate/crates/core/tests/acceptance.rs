//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured numbers (run with --nocapture to see them).
//! Tolerances are pinned in the assertions.

use ndarray::{Array2, Array3};

use rte_core::carleman::{auxiliary_z, evaluate_lemma_scattering, make_carleman_config, scan_level_sets};
use rte_core::coefficients::{CoefficientField, CoefficientLabel, SourceFactor};
use rte_core::config::RunConfig;
use rte_core::energy::{energy_identity_residual, verify_gronwall_bound, verify_outflow_bound};
use rte_core::error::Error;
use rte_core::mesh::{unit_square, SpatialMesh};
use rte_core::phase::{isotropic_phase, normalize_phase, PhaseKernel, ROW_SUM_TOL};
use rte_core::pipeline::{run, Subcommand};
use rte_core::solver::{
    max_stable_dt, solve_forward, solve_linearized, time_derivative_trace, AngularDensityField,
    BoundarySide, Inflow, ProblemData, SolveOptions, DEFAULT_CFL_FACTOR,
};
use rte_core::stability::{
    fit_holder_exponent, measurement_norm, random_smooth_bump, run_linearized_ensemble,
    run_sigma_ensemble, verify_both_sided, EnsembleSpec, ExperimentKind, MeasurementSide,
    StabilityReport,
};
use rte_core::velocity::{build_velocity_set, VelocitySet};

const RANGE_UNIT_CIRCLE: f64 = 2.0 * std::f64::consts::SQRT_2; // max v.x - min v.x on [0,1]^2

fn gaussian(mesh: &SpatialMesh, n_ord: usize, center: [f64; 2], width: f64) -> Array2<f64> {
    let mut a = Array2::zeros((mesh.n_cells(), n_ord));
    for c in 0..mesh.n_cells() {
        let [x, y] = mesh.cell_center(c);
        let r2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
        let v = (-r2 / (2.0 * width * width)).exp();
        for j in 0..n_ord {
            a[(c, j)] = v;
        }
    }
    a
}

fn constant_field(mesh: &SpatialMesh, vset: &VelocitySet, v: f64, label: CoefficientLabel) -> CoefficientField {
    CoefficientField::constant(v, mesh.n_cells(), vset.len(), label)
}

fn free_streaming_problem(mesh: &SpatialMesh, vset: &VelocitySet, horizon: f64) -> ProblemData {
    ProblemData {
        initial: gaussian(mesh, vset.len(), [0.5, 0.5], 0.1),
        inflow: Inflow::Zero,
        sigma_t: constant_field(mesh, vset, 0.0, CoefficientLabel::SigmaT),
        sigma_s: constant_field(mesh, vset, 0.0, CoefficientLabel::SigmaS),
        phase: isotropic_phase(mesh, vset),
        horizon,
        source: None,
    }
}

/// L2 error of the final slice against the exact advected profile
/// a(x - v t), zero outside the domain.
fn characteristics_error(
    field: &AngularDensityField,
    mesh: &SpatialMesh,
    vset: &VelocitySet,
    width: f64,
) -> f64 {
    let t = field.horizon;
    let slice = &field.final_slice;
    let mut err = 0.0;
    for c in 0..mesh.n_cells() {
        let [x, y] = mesh.cell_center(c);
        for (j, v) in vset.ordinates.iter().enumerate() {
            let (px, py) = (x - v[0] * t, y - v[1] * t);
            let exact = if (0.0..=1.0).contains(&px) && (0.0..=1.0).contains(&py) {
                let r2 = (px - 0.5).powi(2) + (py - 0.5).powi(2);
                (-r2 / (2.0 * width * width)).exp()
            } else {
                0.0
            };
            let d = slice[(c, j)] - exact;
            err += d * d * mesh.cell_area() * vset.weights[j];
        }
    }
    err.sqrt()
}

#[test]
fn criterion_01_free_streaming_convergence() {
    let vset = build_velocity_set(1.0, 1.0, 8, 1).unwrap();
    let horizon = 0.1;
    let mut errors = Vec::new();
    let mut hs = Vec::new();
    for n in [32usize, 64, 128] {
        let mesh = unit_square(n);
        let dt = max_stable_dt(&mesh, &vset, DEFAULT_CFL_FACTOR);
        let data = free_streaming_problem(&mesh, &vset, horizon);
        let opts = SolveOptions {
            record_interior: false,
            ..SolveOptions::new(dt)
        };
        let field = solve_forward(&data, &mesh, &vset, &opts).unwrap();
        errors.push(characteristics_error(&field, &mesh, &vset, 0.1));
        hs.push(1.0 / n as f64);
    }
    // Least-squares slope of log error against log h.
    let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let mx = lx.iter().sum::<f64>() / 3.0;
    let my = ly.iter().sum::<f64>() / 3.0;
    let order = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / lx.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    assert!(
        order >= 0.8,
        "empirical convergence order {order:.3} below 0.8; errors = {errors:?}"
    );
    assert!(errors[0] > errors[1] && errors[1] > errors[2]);
    println!(
        "criterion 01 free-streaming convergence: PASS (order = {order:.3}, errors = {errors:?})"
    );
}

#[test]
fn criterion_02_pure_absorption_exactness() {
    let mesh = unit_square(32);
    let vset = build_velocity_set(1.0, 1.0, 8, 1).unwrap();
    let c_abs = 0.7;
    let horizon = 0.3;
    let dt = max_stable_dt(&mesh, &vset, DEFAULT_CFL_FACTOR);

    let free = solve_forward(
        &free_streaming_problem(&mesh, &vset, horizon),
        &mesh,
        &vset,
        &SolveOptions::new(dt),
    )
    .unwrap();
    let mut absorbing_data = free_streaming_problem(&mesh, &vset, horizon);
    absorbing_data.sigma_t = constant_field(&mesh, &vset, c_abs, CoefficientLabel::SigmaT);
    let absorbing = solve_forward(&absorbing_data, &mesh, &vset, &SolveOptions::new(dt)).unwrap();

    let w = free.interior.as_ref().unwrap();
    let u = absorbing.interior.as_ref().unwrap();
    let mut worst: f64 = 0.0;
    for n in 0..=free.n_steps {
        let decay = (-c_abs * n as f64 * free.dt).exp();
        for c in 0..mesh.n_cells() {
            for j in 0..vset.len() {
                let expected = w[(n, c, j)] * decay;
                let rel = (u[(n, c, j)] - expected).abs() / expected.abs().max(1e-290);
                worst = worst.max(rel);
            }
        }
    }
    assert!(
        worst <= 1e-10,
        "pointwise relative deviation from the exact decay factor: {worst:.3e}"
    );
    println!("criterion 02 pure-absorption exactness: PASS (max rel dev = {worst:.3e})");
}

fn random_normalized_kernel(mesh: &SpatialMesh, vset: &VelocitySet, seed: u64) -> PhaseKernel {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = vset.len();
    let mut raw = Array3::zeros((mesh.n_cells(), n, n));
    for v in raw.iter_mut() {
        *v = rng.gen_range(0.05..1.0);
    }
    normalize_phase(&raw, vset).unwrap()
}

#[test]
fn criterion_03_scattering_fixed_point() {
    let mesh = unit_square(16);
    let vset = build_velocity_set(1.0, 1.0, 8, 1).unwrap();
    let dt = max_stable_dt(&mesh, &vset, DEFAULT_CFL_FACTOR);
    let mut worst: f64 = 0.0;
    for (name, kernel) in [
        ("isotropic", isotropic_phase(&mesh, &vset)),
        ("random-normalized", random_normalized_kernel(&mesh, &vset, 42)),
    ] {
        let initial = Array2::from_elem((mesh.n_cells(), vset.len()), 1.0);
        let data = ProblemData {
            inflow: Inflow::matching_initial(&initial, &mesh),
            initial,
            // sigma_a = 0: total attenuation equals the scattering part.
            sigma_t: constant_field(&mesh, &vset, 0.4, CoefficientLabel::SigmaT),
            sigma_s: constant_field(&mesh, &vset, 0.4, CoefficientLabel::SigmaS),
            phase: kernel,
            horizon: 0.5,
            source: None,
        };
        let field = solve_forward(&data, &mesh, &vset, &SolveOptions::new(dt)).unwrap();
        let dev = field
            .interior
            .as_ref()
            .unwrap()
            .iter()
            .fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
        assert!(dev <= 1e-12, "{name}: constant-state drift {dev:.3e}");
        worst = worst.max(dev);
    }
    println!("criterion 03 scattering fixed point: PASS (max drift = {worst:.3e})");
}

#[test]
fn criterion_04_phase_normalization_and_idempotence() {
    let mesh = unit_square(4);
    let mut worst_row: f64 = 0.0;
    let mut worst_idem: f64 = 0.0;
    for (seed, vset) in [
        (1u64, build_velocity_set(1.0, 1.0, 8, 1).unwrap()),
        (2, build_velocity_set(0.5, 2.0, 12, 3).unwrap()),
        (3, build_velocity_set(1.0, 1.5, 4, 2).unwrap()),
    ] {
        let kernel = random_normalized_kernel(&mesh, &vset, seed);
        worst_row = worst_row.max(kernel.max_row_sum_error(&vset));
        let once = kernel.to_table();
        let twice = normalize_phase(&once, &vset).unwrap().to_table();
        for (a, b) in once.iter().zip(twice.iter()) {
            worst_idem = worst_idem.max((a - b).abs());
        }
    }
    assert!(worst_row <= ROW_SUM_TOL, "row sum error {worst_row:.3e}");
    assert!(worst_idem < 1e-14, "idempotence drift {worst_idem:.3e}");
    println!(
        "criterion 04 phase normalization: PASS (row-sum err = {worst_row:.3e}, idempotence = {worst_idem:.3e})"
    );
}

#[test]
fn criterion_05_uniqueness_direction() {
    let mesh = unit_square(16);
    let vset = build_velocity_set(1.0, 1.0, 8, 1).unwrap();
    let horizon = 1.1 * RANGE_UNIT_CIRCLE;
    let initial = Array2::from_elem((mesh.n_cells(), vset.len()), 1.0);
    let data = ProblemData {
        inflow: Inflow::matching_initial(&initial, &mesh),
        initial,
        sigma_t: constant_field(&mesh, &vset, 0.3, CoefficientLabel::SigmaT),
        sigma_s: constant_field(&mesh, &vset, 0.1, CoefficientLabel::SigmaS),
        phase: isotropic_phase(&mesh, &vset),
        horizon,
        source: None,
    };
    let dt = max_stable_dt(&mesh, &vset, DEFAULT_CFL_FACTOR);
    let opts = SolveOptions::trace_only(dt);
    let u1 = solve_forward(&data, &mesh, &vset, &opts).unwrap();
    let u2 = solve_forward(&data, &mesh, &vset, &opts).unwrap();

    // Identical coefficient pairs: difference of traces, then d/dt.
    let diff = &u1.trace_out.values - &u2.trace_out.values;
    let dt_diff = rte_core::solver::time_differentiate_rows(&diff, u1.dt).unwrap();
    let trace = rte_core::solver::MeasurementTrace {
        side: BoundarySide::GammaPlus,
        entries: u1.trace_out.entries.clone(),
        dt_values: dt_diff,
        dt: u1.dt,
    };
    let meas = measurement_norm(&trace, true).unwrap();

    // Solution scale: the same norm applied to one solution's data.
    let solo = time_derivative_trace(&u1, BoundarySide::GammaPlus).unwrap();
    let scale = measurement_norm(&solo, true).unwrap().max(1e-30);
    assert!(
        meas <= 1e-10 * scale,
        "identical pair produced measurement {meas:.3e} vs scale {scale:.3e}"
    );
    println!("criterion 05 uniqueness direction: PASS (measurement = {meas:.3e}, scale = {scale:.3e})");
}

fn linearized_ensemble_at(cells: usize, count: usize, seed: u64) -> Vec<StabilityReport> {
    let mesh = unit_square(cells);
    let vset = build_velocity_set(1.0, 1.0, 8, 1).unwrap();
    let beta = 0.5;
    let horizon = 1.1 * RANGE_UNIT_CIRCLE / beta;
    let sigma_t = constant_field(&mesh, &vset, 0.3, CoefficientLabel::SigmaT);
    let sigma_s = constant_field(&mesh, &vset, 0.1, CoefficientLabel::SigmaS);
    let kernel = isotropic_phase(&mesh, &vset);
    let dt = max_stable_dt(&mesh, &vset, DEFAULT_CFL_FACTOR);
    run_linearized_ensemble(
        &sigma_t,
        &sigma_s,
        &kernel,
        &mesh,
        &vset,
        horizon,
        &SolveOptions::trace_only(dt),
        MeasurementSide::GammaPlusWeighted,
        &EnsembleSpec {
            count,
            amplitude: 1.0,
            seed,
        },
        Some(beta),
    )
    .unwrap()
}

#[test]
fn criterion_06_both_sided_linearized_stability() {
    let coarse = linearized_ensemble_at(32, 20, 2026);
    for r in &coarse {
        let rho = r.ratio.expect("nondegenerate");
        assert!(rho.is_finite() && rho > 0.0);
    }
    let summary = verify_both_sided(&coarse, 50.0).unwrap();
    assert!(summary.pass, "spread {:.3} exceeds 50", summary.spread);

    let fine = linearized_ensemble_at(64, 20, 2026);
    let fine_summary = verify_both_sided(&fine, 50.0).unwrap();
    let change = fine_summary.spread / summary.spread;
    assert!(
        change > 0.5 && change < 2.0,
        "spread changed by {change:.3}x under refinement"
    );
    println!(
        "criterion 06 both-sided linearized stability: PASS (spread 32^2 = {:.3}, 64^2 = {:.3})",
        summary.spread, fine_summary.spread
    );
}

fn sigma_ensemble_at(
    kind: ExperimentKind,
    amplitude: f64,
    seed: u64,
    count: usize,
) -> Vec<StabilityReport> {
    let mesh = unit_square(24);
    let vset = build_velocity_set(1.0, 1.0, 8, 1).unwrap();
    let horizon = 1.1 * RANGE_UNIT_CIRCLE;
    let initial = Array2::from_elem((mesh.n_cells(), vset.len()), 1.0);
    // The perturbed coefficient sits at base level 0.3 in both ensembles;
    // for the scattering ensemble the shared total attenuation is 0.4 so
    // the absorption part stays nonnegative under +/- 0.05 bumps.
    let (sigma_t, sigma_s) = match kind {
        ExperimentKind::SigmaT => (0.3, 0.1),
        ExperimentKind::SigmaS => (0.4, 0.3),
        ExperimentKind::LinearizedSource => unreachable!(),
    };
    let base = ProblemData {
        inflow: Inflow::matching_initial(&initial, &mesh),
        initial,
        sigma_t: constant_field(&mesh, &vset, sigma_t, CoefficientLabel::SigmaT),
        sigma_s: constant_field(&mesh, &vset, sigma_s, CoefficientLabel::SigmaS),
        phase: isotropic_phase(&mesh, &vset),
        horizon,
        source: None,
    };
    let dt = max_stable_dt(&mesh, &vset, DEFAULT_CFL_FACTOR);
    run_sigma_ensemble(
        kind,
        &base,
        &mesh,
        &vset,
        &SolveOptions::trace_only(dt),
        &EnsembleSpec {
            count,
            amplitude,
            seed,
        },
        None,
    )
    .unwrap()
}

#[test]
fn criterion_07_nonlinear_stability_local_linearity() {
    for kind in [ExperimentKind::SigmaT, ExperimentKind::SigmaS] {
        let full = sigma_ensemble_at(kind, 0.05, 7, 10);
        let half = sigma_ensemble_at(kind, 0.025, 7, 10);
        let mut worst: f64 = 0.0;
        for (a, b) in full.iter().zip(half.iter()) {
            let ra = a.ratio.expect("nondegenerate");
            let rb = b.ratio.expect("nondegenerate");
            assert!(ra.is_finite() && rb.is_finite());
            worst = worst.max((rb - ra).abs() / ra);
        }
        assert!(
            worst < 0.15,
            "{kind:?}: halving the amplitude moved a ratio by {worst:.3}"
        );
        println!(
            "criterion 07 nonlinear stability ({kind:?}): PASS (max ratio change = {:.2}%)",
            100.0 * worst
        );
    }
}

#[test]
fn criterion_08_weighted_inequality_bounded_constants() {
    let mesh = unit_square(24);
    let vset = build_velocity_set(1.0, 1.0, 8, 1).unwrap();
    let beta = 0.5;
    let horizon = 1.5 * RANGE_UNIT_CIRCLE / beta;
    let cfg = make_carleman_config(&mesh, &vset, horizon, beta, None).unwrap();
    assert_eq!(cfg.s_grid.len(), 8);
    let sigma_t = constant_field(&mesh, &vset, 0.3, CoefficientLabel::SigmaT);
    let sigma_s = constant_field(&mesh, &vset, 0.1, CoefficientLabel::SigmaS);
    let kernel = isotropic_phase(&mesh, &vset);
    let dt = max_stable_dt(&mesh, &vset, DEFAULT_CFL_FACTOR);

    let mut spreads = Vec::new();
    for run_idx in 0..5u64 {
        let mut rng = rte_core::stability::member_rng(100 + run_idx, 0);
        let f = CoefficientField {
            values: random_smooth_bump(&mut rng, &mesh, vset.len(), 1.0, true),
            label: CoefficientLabel::Source,
        };
        let field = solve_linearized(
            &f,
            &SourceFactor::Constant(1.0),
            &sigma_t,
            &sigma_s,
            &kernel,
            &mesh,
            &vset,
            horizon,
            &SolveOptions::new(dt),
        )
        .unwrap();
        let z = auxiliary_z(&field, &cfg).unwrap();
        let report =
            evaluate_lemma_scattering(&z, &cfg, &sigma_t, &sigma_s, &kernel, &mesh, &vset)
                .unwrap();
        for p in &report.points {
            let c = p.c.expect("nondegenerate z field");
            assert!(c.is_finite() && c > 0.0, "s = {}: C = {c:?}", p.s);
        }
        let spread = report.c_spread().unwrap();
        assert!(spread < 10.0, "run {run_idx}: C(s) spread {spread:.3}");
        spreads.push(spread);

        if run_idx == 0 {
            // Doubling the field must leave every fitted constant unchanged.
            let mut z2 = z.clone();
            if let Some(v) = z2.interior.as_mut() {
                v.mapv_inplace(|x| 2.0 * x);
            }
            z2.final_slice.mapv_inplace(|x| 2.0 * x);
            z2.trace_out.values.mapv_inplace(|x| 2.0 * x);
            z2.trace_in.values.mapv_inplace(|x| 2.0 * x);
            let doubled =
                evaluate_lemma_scattering(&z2, &cfg, &sigma_t, &sigma_s, &kernel, &mesh, &vset)
                    .unwrap();
            for (a, b) in report.points.iter().zip(doubled.points.iter()) {
                let (ca, cb) = (a.c.unwrap(), b.c.unwrap());
                assert!(
                    ((ca - cb) / ca).abs() <= 1e-12,
                    "s = {}: {ca} vs {cb}",
                    a.s
                );
            }
        }
    }
    println!("criterion 08 weighted inequality constants: PASS (spreads = {spreads:?})");
}

#[test]
fn criterion_09_weight_geometry() {
    let mesh = unit_square(8);
    let vset = build_velocity_set(1.0, 1.0, 4, 1).unwrap();
    let cfg = make_carleman_config(&mesh, &vset, 6.0, 0.5, None).unwrap();
    assert!((cfg.r_min + 1.0).abs() <= 1e-14);
    assert!((cfg.r_max - 1.0).abs() <= 1e-14);
    assert!((cfg.r0 - (-5.0 / 3.0)).abs() <= 1e-14, "r0 = {}", cfg.r0);
    assert!((cfg.r1 - (-4.0 / 3.0)).abs() <= 1e-14, "r1 = {}", cfg.r1);

    let scan = scan_level_sets(&cfg, &mesh, &vset, 256);
    assert!(scan.min_phi_early > cfg.r1, "early window bound violated");
    assert!(scan.max_phi_late < cfg.r0, "late window bound violated");

    let err = make_carleman_config(&mesh, &vset, 3.9, 0.5, None).unwrap_err();
    assert!(matches!(err, Error::ObservationTime(_)));
    println!(
        "criterion 09 weight geometry: PASS (r0 = {}, r1 = {}, scan = [{:.4}, {:.4}])",
        cfg.r0, cfg.r1, scan.min_phi_early, scan.max_phi_late
    );
}

#[test]
fn criterion_10_energy_estimates() {
    let mesh = unit_square(16);
    let vset = build_velocity_set(1.0, 1.0, 8, 1).unwrap();
    let dt = max_stable_dt(&mesh, &vset, DEFAULT_CFL_FACTOR);

    // Pure absorption: the fitted a priori constant cannot exceed one.
    let absorption = ProblemData {
        initial: gaussian(&mesh, vset.len(), [0.5, 0.5], 0.12),
        inflow: Inflow::Zero,
        sigma_t: constant_field(&mesh, &vset, 0.8, CoefficientLabel::SigmaT),
        sigma_s: constant_field(&mesh, &vset, 0.0, CoefficientLabel::SigmaS),
        phase: isotropic_phase(&mesh, &vset),
        horizon: 0.5,
        source: None,
    };
    let field = solve_forward(&absorption, &mesh, &vset, &SolveOptions::new(dt)).unwrap();
    let gronwall = verify_gronwall_bound(&field, &absorption, &mesh, &vset).unwrap();
    let c_fit = gronwall.c_fit.unwrap();
    assert!(c_fit <= 1.0 + 1e-8, "gronwall constant {c_fit}");

    // Outflow bound constant is exactly invariant under f -> 2f.
    let mut rng = rte_core::stability::member_rng(55, 0);
    let f1 = CoefficientField {
        values: random_smooth_bump(&mut rng, &mesh, vset.len(), 1.0, false),
        label: CoefficientLabel::Source,
    };
    let f2 = CoefficientField {
        values: &f1.values * 2.0,
        label: CoefficientLabel::Source,
    };
    let sigma_t = constant_field(&mesh, &vset, 0.3, CoefficientLabel::SigmaT);
    let sigma_s = constant_field(&mesh, &vset, 0.1, CoefficientLabel::SigmaS);
    let kernel = isotropic_phase(&mesh, &vset);
    let run_out = |f: &CoefficientField| {
        let field = solve_linearized(
            f,
            &SourceFactor::Constant(1.0),
            &sigma_t,
            &sigma_s,
            &kernel,
            &mesh,
            &vset,
            2.0,
            &SolveOptions::trace_only(dt),
        )
        .unwrap();
        verify_outflow_bound(&field, f.l2_norm(&mesh, &vset))
            .unwrap()
            .c_fit
            .unwrap()
    };
    let (ca, cb) = (run_out(&f1), run_out(&f2));
    assert!(
        ((ca - cb) / ca).abs() <= 1e-12,
        "outflow constant moved under doubling: {ca} vs {cb}"
    );

    // The accumulated identity residual halves with dt (within 25%).
    let initial = gaussian(&mesh, vset.len(), [0.5, 0.5], 0.12);
    let scattering = ProblemData {
        inflow: Inflow::matching_initial(&initial, &mesh),
        initial,
        sigma_t: constant_field(&mesh, &vset, 0.3, CoefficientLabel::SigmaT),
        sigma_s: constant_field(&mesh, &vset, 0.1, CoefficientLabel::SigmaS),
        phase: isotropic_phase(&mesh, &vset),
        horizon: 0.4,
        source: None,
    };
    let coarse = solve_forward(&scattering, &mesh, &vset, &SolveOptions::new(dt / 2.0)).unwrap();
    let fine = solve_forward(&scattering, &mesh, &vset, &SolveOptions::new(dt / 4.0)).unwrap();
    let rc = energy_identity_residual(&coarse, &scattering, &mesh, &vset).unwrap();
    let rf = energy_identity_residual(&fine, &scattering, &mesh, &vset).unwrap();
    let ratio = rc.accumulated_residual / rf.accumulated_residual;
    assert!(
        (1.5..=2.5).contains(&ratio),
        "identity residual ratio {ratio:.3} outside 2 +/- 25%"
    );
    println!(
        "criterion 10 energy estimates: PASS (gronwall C = {c_fit:.6}, outflow C = {ca:.4}, residual ratio = {ratio:.3})"
    );
}

#[test]
fn criterion_11_exponent_fit_sanity() {
    let synth = |power: f64| -> Vec<StabilityReport> {
        (0..8)
            .map(|i| {
                let fnorm = 10f64.powf(-2.0 + i as f64 * 0.6);
                StabilityReport {
                    experiment_id: format!("syn720-{i}"),
                    kind: ExperimentKind::LinearizedSource,
                    side: MeasurementSide::GammaPlusWeighted,
                    coefficient_diff_norm: fnorm,
                    measurement_norm: 1.7 * fnorm.powf(power),
                    ratio: Some(fnorm / (1.7 * fnorm.powf(power))),
                    degenerate: false,
                }
            })
            .collect()
    };
    let lip = fit_holder_exponent(&synth(1.0)).unwrap();
    assert!((lip.theta - 1.0).abs() <= 0.05, "theta = {}", lip.theta);
    let sq = fit_holder_exponent(&synth(2.0)).unwrap();
    assert!((sq.theta - 0.5).abs() <= 0.05, "theta = {}", sq.theta);
    println!(
        "criterion 11 exponent fit sanity: PASS (linear family theta = {:.4}, square family theta = {:.4})",
        lip.theta, sq.theta
    );
}

#[test]
fn criterion_12_determinism() {
    let config = RunConfig::parse_str(
        r#"
        [mesh]
        extents = [1.0, 1.0]
        cells = [12, 12]

        [velocity]
        v_min = 1.0
        v_max = 1.0
        n_angles = 8

        [coefficients]
        sigma_a = { preset = "constant", value = 0.2 }
        sigma_s = { preset = "constant", value = 0.1 }

        [run]
        horizon = 3.2

        [ensemble]
        target = "sigma-t"
        count = 6
        amplitude = 0.05
        seed = 9
    "#,
    )
    .unwrap();
    let base = std::env::temp_dir().join("rte-acceptance-determinism");
    let _ = std::fs::remove_dir_all(&base);
    let dir_a = base.join("a");
    let dir_b = base.join("b");
    run(Subcommand::StabilityEnsemble, &config, &dir_a, Some(9)).unwrap();
    run(Subcommand::StabilityEnsemble, &config, &dir_b, Some(9)).unwrap();

    let mut compared = 0;
    for entry in std::fs::read_dir(&dir_a).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name();
        if name.to_string_lossy().ends_with(".csv") {
            let a = std::fs::read(entry.path()).unwrap();
            let b = std::fs::read(dir_b.join(&name)).unwrap();
            assert_eq!(a, b, "{:?} differs between identical runs", name);
            compared += 1;
        }
    }
    assert!(compared >= 1, "no CSV artifacts compared");
    std::fs::remove_dir_all(&base).unwrap();
    println!("criterion 12 determinism: PASS ({compared} CSV files byte-identical)");
}
