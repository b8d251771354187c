//! Experiment pipelines behind the CLI subcommands. Each pipeline
//! validates its configuration, runs the solves, writes CSV/JSON artifacts
//! into the output directory, and finishes with a manifest that references
//! every file written. Failures still produce a manifest, flagged
//! incomplete, with the error message embedded.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::boundary::{classify_boundary, default_tangential_tol};
use crate::carleman::{
    auxiliary_z, evaluate_lemma_scattering, evaluate_lemma_streaming, make_carleman_config,
    scan_level_sets, CarlemanConfig, InequalityReport, LevelSetScan,
};
use crate::coefficients::{check_field_admissibility, CoefficientField, CoefficientLabel, SourceFactor};
use crate::config::{Assembled, InflowPreset, RunConfig};
use crate::energy::{
    energy, energy_identity_residual, verify_gronwall_bound, verify_outflow_bound,
    EnergyIdentityReport, GronwallReport, OutflowBoundReport,
};
use crate::error::{Error, Result};
use crate::io;
use crate::solver::{
    solve_forward, solve_linearized, time_derivative_trace, AngularDensityField, BoundarySide,
    ProblemData, SolveOptions,
};
use crate::stability::{
    fit_holder_exponent, measurement_norm, random_smooth_bump, run_linearized_ensemble,
    run_linearized_experiment, run_sigma_ensemble, verify_both_sided, EnsembleSummary,
    ExperimentKind, HolderFit, MeasurementSide, StabilityReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Forward,
    Linearized,
    CarlemanCheck,
    EnergyCheck,
    StabilityEnsemble,
    HolderSweep,
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::Forward => "forward",
            Subcommand::Linearized => "linearized",
            Subcommand::CarlemanCheck => "carleman-check",
            Subcommand::EnergyCheck => "energy-check",
            Subcommand::StabilityEnsemble => "stability-ensemble",
            Subcommand::HolderSweep => "holder-sweep",
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool_version: String,
    pub subcommand: String,
    pub seed: Option<u64>,
    pub status: String,
    pub error: Option<String>,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    pub carleman_constants: Option<CarlemanConfig>,
    pub config: RunConfig,
}

struct Artifacts<'a> {
    out_dir: &'a Path,
    outputs: Vec<String>,
}

impl<'a> Artifacts<'a> {
    fn new(out_dir: &'a Path) -> Self {
        Self {
            out_dir,
            outputs: Vec::new(),
        }
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out_dir.join(name);
        self.outputs.push(name.to_string());
        p
    }
}

/// Run one pipeline and write its manifest. The manifest is written even
/// when the pipeline fails, with status "incomplete" and the error message.
pub fn run(
    sub: Subcommand,
    config: &RunConfig,
    out_dir: &Path,
    seed: Option<u64>,
) -> Result<Manifest> {
    std::fs::create_dir_all(out_dir)?;
    let start = Instant::now();
    let mut artifacts = Artifacts::new(out_dir);
    let mut carleman_constants = None;
    let result = dispatch(sub, config, seed, &mut artifacts, &mut carleman_constants);
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: sub.name().to_string(),
        seed,
        status: if result.is_ok() {
            "complete".to_string()
        } else {
            "incomplete".to_string()
        },
        error: result.as_ref().err().map(|e| e.to_string()),
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: artifacts.outputs.clone(),
        carleman_constants,
        config: config.clone(),
    };
    io::write_json(&out_dir.join("manifest.json"), &manifest)?;
    result.map(|()| manifest)
}

fn dispatch(
    sub: Subcommand,
    config: &RunConfig,
    seed: Option<u64>,
    artifacts: &mut Artifacts,
    carleman_constants: &mut Option<CarlemanConfig>,
) -> Result<()> {
    let setup = config.assemble()?;
    match sub {
        Subcommand::Forward => forward_pipeline(config, &setup, artifacts),
        Subcommand::Linearized => linearized_pipeline(config, &setup, artifacts),
        Subcommand::CarlemanCheck => {
            carleman_pipeline(config, &setup, artifacts, carleman_constants)
        }
        Subcommand::EnergyCheck => energy_check_pipeline(config, &setup, artifacts),
        Subcommand::StabilityEnsemble => ensemble_pipeline(config, &setup, seed, artifacts),
        Subcommand::HolderSweep => holder_pipeline(config, &setup, seed, artifacts),
    }
}

fn forward_problem(config: &RunConfig, setup: &Assembled) -> Result<ProblemData> {
    let initial = config.initial_values(&setup.mesh, setup.vset.len())?;
    let inflow = config.inflow_values(&initial, &setup.mesh);
    Ok(ProblemData {
        initial,
        inflow,
        sigma_t: setup.sigma_t.clone(),
        sigma_s: setup.sigma_s.clone(),
        phase: setup.phase.clone(),
        horizon: config.run.horizon,
        source: None,
    })
}

fn write_common_outputs(
    field: &AngularDensityField,
    setup: &Assembled,
    config: &RunConfig,
    artifacts: &mut Artifacts,
) -> Result<()> {
    let partition = classify_boundary(
        &setup.mesh,
        &setup.vset,
        default_tangential_tol(&setup.vset),
    )?;
    io::write_partition_csv(&artifacts.path("partition.csv"), &partition)?;
    io::write_trace_csv(&artifacts.path("gamma_plus.csv"), &field.trace_out, field.dt)?;
    io::write_trace_csv(&artifacts.path("gamma_minus.csv"), &field.trace_in, field.dt)?;
    if field.interior.is_some() {
        let trace = energy(field, &setup.mesh, &setup.vset)?;
        io::write_energy_csv(&artifacts.path("energy.csv"), &trace)?;
    }
    if config.output.dump_fields && field.interior.is_some() {
        let base = artifacts.out_dir.join("field");
        let written = io::dump_field_binary(&base, field)?;
        for path in written {
            let name = Path::new(&path)
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or(path);
            artifacts.outputs.push(name);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ForwardReport {
    gronwall: GronwallReport,
    identity: EnergyIdentityReport,
    solution_min: f64,
}

fn forward_pipeline(config: &RunConfig, setup: &Assembled, artifacts: &mut Artifacts) -> Result<()> {
    let data = forward_problem(config, setup)?;
    let field = solve_forward(&data, &setup.mesh, &setup.vset, &setup.opts)?;
    write_common_outputs(&field, setup, config, artifacts)?;
    let report = ForwardReport {
        gronwall: verify_gronwall_bound(&field, &data, &setup.mesh, &setup.vset)?,
        identity: energy_identity_residual(&field, &data, &setup.mesh, &setup.vset)?,
        solution_min: field.min_value(),
    };
    io::write_json(&artifacts.path("energy_report.json"), &report)?;
    if let Some(bounds) = &setup.bounds {
        let adm = check_field_admissibility(&field, &setup.mesh, &setup.vset, bounds)?;
        io::write_json(&artifacts.path("admissibility.json"), &adm)?;
    }
    Ok(())
}

fn linearized_source(
    config: &RunConfig,
    setup: &Assembled,
) -> Result<(CoefficientField, SourceFactor)> {
    let src = config.source.as_ref().ok_or_else(|| {
        Error::Config("this pipeline needs a [source] section with the factor f".into())
    })?;
    if matches!(config.inflow, Some(p) if p != InflowPreset::Zero) {
        return Err(Error::Config(
            "the linearized problem imposes zero inflow; remove the inflow preset".into(),
        ));
    }
    let f = CoefficientField {
        values: src.f.materialize(&setup.mesh, setup.vset.len())?,
        label: CoefficientLabel::Source,
    };
    Ok((f, SourceFactor::Constant(src.r_constant)))
}

#[derive(Serialize)]
struct LinearizedReport {
    outflow_bound: OutflowBoundReport,
    f_l2_norm: f64,
    weighted_outflow_norm: f64,
    full_boundary_norm: f64,
}

fn linearized_pipeline(
    config: &RunConfig,
    setup: &Assembled,
    artifacts: &mut Artifacts,
) -> Result<()> {
    let (f, r) = linearized_source(config, setup)?;
    let field = solve_linearized(
        &f,
        &r,
        &setup.sigma_t,
        &setup.sigma_s,
        &setup.phase,
        &setup.mesh,
        &setup.vset,
        config.run.horizon,
        &setup.opts,
    )?;
    write_common_outputs(&field, setup, config, artifacts)?;
    let f_l2 = f.l2_norm(&setup.mesh, &setup.vset);
    let plus = time_derivative_trace(&field, BoundarySide::GammaPlus)?;
    let full = time_derivative_trace(&field, BoundarySide::Full)?;
    let report = LinearizedReport {
        outflow_bound: verify_outflow_bound(&field, f_l2)?,
        f_l2_norm: f_l2,
        weighted_outflow_norm: measurement_norm(&plus, true)?,
        full_boundary_norm: measurement_norm(&full, false)?,
    };
    io::write_json(&artifacts.path("linearized_report.json"), &report)?;
    Ok(())
}

#[derive(Serialize)]
struct CarlemanReport {
    geometry: CarlemanConfig,
    level_scan: LevelSetScan,
    streaming: InequalityReport,
    scattering: InequalityReport,
}

fn carleman_pipeline(
    config: &RunConfig,
    setup: &Assembled,
    artifacts: &mut Artifacts,
    constants: &mut Option<CarlemanConfig>,
) -> Result<()> {
    let section = config.carleman.as_ref().ok_or_else(|| {
        Error::Config("carleman-check needs a [carleman] section with beta".into())
    })?;
    let cfg = make_carleman_config(
        &setup.mesh,
        &setup.vset,
        config.run.horizon,
        section.beta,
        section.s_spec()?,
    )?;
    *constants = Some(cfg.clone());

    let (f, r) = linearized_source(config, setup)?;
    let field = solve_linearized(
        &f,
        &r,
        &setup.sigma_t,
        &setup.sigma_s,
        &setup.phase,
        &setup.mesh,
        &setup.vset,
        config.run.horizon,
        &setup.opts,
    )?;
    write_common_outputs(&field, setup, config, artifacts)?;

    let z = auxiliary_z(&field, &cfg)?;
    let report = CarlemanReport {
        level_scan: scan_level_sets(&cfg, &setup.mesh, &setup.vset, 128),
        streaming: evaluate_lemma_streaming(&z, &cfg, &setup.sigma_t, &setup.mesh, &setup.vset)?,
        scattering: evaluate_lemma_scattering(
            &z,
            &cfg,
            &setup.sigma_t,
            &setup.sigma_s,
            &setup.phase,
            &setup.mesh,
            &setup.vset,
        )?,
        geometry: cfg,
    };
    io::write_json(&artifacts.path("carleman_report.json"), &report)?;
    Ok(())
}

#[derive(Serialize)]
struct EnergyCheckReport {
    dt_coarse: f64,
    dt_fine: f64,
    identity_coarse: EnergyIdentityReport,
    identity_fine: EnergyIdentityReport,
    /// Accumulated residual ratio coarse/fine; about 2 for a first-order
    /// consistent balance.
    residual_ratio: f64,
    gronwall: GronwallReport,
}

fn energy_check_pipeline(
    config: &RunConfig,
    setup: &Assembled,
    artifacts: &mut Artifacts,
) -> Result<()> {
    let data = forward_problem(config, setup)?;
    let coarse = solve_forward(&data, &setup.mesh, &setup.vset, &setup.opts)?;
    let fine_opts = SolveOptions {
        dt: setup.opts.dt / 2.0,
        ..setup.opts
    };
    let fine = solve_forward(&data, &setup.mesh, &setup.vset, &fine_opts)?;
    write_common_outputs(&coarse, setup, config, artifacts)?;

    let identity_coarse = energy_identity_residual(&coarse, &data, &setup.mesh, &setup.vset)?;
    let identity_fine = energy_identity_residual(&fine, &data, &setup.mesh, &setup.vset)?;
    let report = EnergyCheckReport {
        dt_coarse: coarse.dt,
        dt_fine: fine.dt,
        residual_ratio: identity_coarse.accumulated_residual / identity_fine.accumulated_residual,
        identity_coarse,
        identity_fine,
        gronwall: verify_gronwall_bound(&coarse, &data, &setup.mesh, &setup.vset)?,
    };
    io::write_json(&artifacts.path("energy_check_report.json"), &report)?;
    Ok(())
}

#[derive(Serialize)]
struct EnsembleReport {
    summary: EnsembleSummary,
    reports: Vec<StabilityReport>,
}

fn ensemble_pipeline(
    config: &RunConfig,
    setup: &Assembled,
    seed: Option<u64>,
    artifacts: &mut Artifacts,
) -> Result<()> {
    let section = config.ensemble.as_ref().ok_or_else(|| {
        Error::Config("stability-ensemble needs an [ensemble] section".into())
    })?;
    let spec = config.ensemble_spec(seed).expect("section present");
    let opts = SolveOptions {
        record_interior: false,
        ..setup.opts
    };

    let reports = match section.target {
        ExperimentKind::SigmaT | ExperimentKind::SigmaS => {
            if section.side != MeasurementSide::GammaPlusWeighted {
                return Err(Error::Config(
                    "coefficient-pair experiments measure the weighted outflow side only".into(),
                ));
            }
            let base = forward_problem(config, setup)?;
            run_sigma_ensemble(
                section.target,
                &base,
                &setup.mesh,
                &setup.vset,
                &opts,
                &spec,
                setup.bounds.as_ref(),
            )?
        }
        ExperimentKind::LinearizedSource => {
            if matches!(config.inflow, Some(p) if p != InflowPreset::Zero) {
                return Err(Error::Config(
                    "the linearized problem imposes zero inflow; remove the inflow preset".into(),
                ));
            }
            let beta = config.carleman.as_ref().map(|c| c.beta);
            run_linearized_ensemble(
                &setup.sigma_t,
                &setup.sigma_s,
                &setup.phase,
                &setup.mesh,
                &setup.vset,
                config.run.horizon,
                &opts,
                section.side,
                &spec,
                beta,
            )?
        }
    };

    io::write_ensemble_csv(&artifacts.path("ensemble.csv"), &reports)?;
    let summary = verify_both_sided(&reports, section.spread_threshold)?;
    let report = EnsembleReport { summary, reports };
    io::write_json(&artifacts.path("ensemble_report.json"), &report)?;
    Ok(())
}

#[derive(Serialize)]
struct HolderReport {
    fit: HolderFit,
    reports: Vec<StabilityReport>,
}

fn holder_pipeline(
    config: &RunConfig,
    setup: &Assembled,
    seed: Option<u64>,
    artifacts: &mut Artifacts,
) -> Result<()> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("holder-sweep needs a [sweep] section".into()))?;
    let beta = config.carleman.as_ref().map(|c| c.beta);
    let effective_seed = seed.unwrap_or(sweep.seed);
    let mut rng = crate::stability::member_rng(effective_seed, 0);
    let shape = random_smooth_bump(&mut rng, &setup.mesh, setup.vset.len(), 1.0, false);
    let opts = SolveOptions {
        record_interior: false,
        ..setup.opts
    };

    let mut reports = Vec::with_capacity(sweep.count);
    for i in 0..sweep.count {
        let frac = i as f64 / (sweep.count - 1) as f64;
        let amp = (sweep.amp_min.ln() + frac * (sweep.amp_max.ln() - sweep.amp_min.ln())).exp();
        let f = CoefficientField {
            values: &shape * amp,
            label: CoefficientLabel::Source,
        };
        reports.push(run_linearized_experiment(
            &format!("sweep-{i}"),
            &f,
            &SourceFactor::Constant(1.0),
            &setup.sigma_t,
            &setup.sigma_s,
            &setup.phase,
            &setup.mesh,
            &setup.vset,
            config.run.horizon,
            &opts,
            MeasurementSide::GammaPlusWeighted,
            beta,
        )?);
    }
    io::write_ensemble_csv(&artifacts.path("ensemble.csv"), &reports)?;
    let report = HolderReport {
        fit: fit_holder_exponent(&reports)?,
        reports,
    };
    io::write_json(&artifacts.path("holder_report.json"), &report)?;
    Ok(())
}
