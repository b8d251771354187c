//! Run configuration: a strict TOML schema (unknown keys are rejected) plus
//! assembly of the validated numerical setup. Every numeric parameter is
//! checked against the owning module's preconditions before any solve
//! starts, so a bad experiment file fails before it costs compute.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::carleman::SGridSpec;
use crate::coefficients::{AdmissibilityBounds, CoefficientField, CoefficientLabel};
use crate::error::{Error, Result};
use crate::mesh::{build_mesh, DomainSpec, SpatialMesh};
use crate::phase::{isotropic_phase, normalize_phase, PhaseKernel};
use crate::solver::{max_stable_dt, Inflow, SolveOptions, DEFAULT_CFL_FACTOR};
use crate::stability::{EnsembleSpec, ExperimentKind, MeasurementSide};
use crate::velocity::{build_velocity_set, VelocitySet};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    #[serde(default = "default_origin")]
    pub origin: [f64; 2],
    pub extents: [f64; 2],
    pub cells: [usize; 2],
}

fn default_origin() -> [f64; 2] {
    [0.0, 0.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocitySection {
    pub v_min: f64,
    pub v_max: f64,
    pub n_angles: usize,
    #[serde(default = "default_one")]
    pub n_speeds: usize,
}

fn default_one() -> usize {
    1
}

/// Scalar field preset over (cell, ordinate), constant across ordinates
/// except when loaded from CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Zero,
    Constant {
        value: f64,
    },
    Gaussian {
        amplitude: f64,
        center: [f64; 2],
        width: f64,
        #[serde(default)]
        floor: f64,
    },
    Checkerboard {
        low: f64,
        high: f64,
        tiles: [usize; 2],
    },
    Csv {
        path: String,
    },
}

impl FieldSpec {
    pub fn materialize(&self, mesh: &SpatialMesh, n_ord: usize) -> Result<Array2<f64>> {
        let n_cells = mesh.n_cells();
        match self {
            FieldSpec::Zero => Ok(Array2::zeros((n_cells, n_ord))),
            FieldSpec::Constant { value } => Ok(Array2::from_elem((n_cells, n_ord), *value)),
            FieldSpec::Gaussian {
                amplitude,
                center,
                width,
                floor,
            } => {
                if !(*width > 0.0) {
                    return Err(Error::Config(format!(
                        "gaussian width must be positive, got {width}"
                    )));
                }
                let mut values = Array2::zeros((n_cells, n_ord));
                for c in 0..n_cells {
                    let [x, y] = mesh.cell_center(c);
                    let r2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
                    let v = floor + amplitude * (-r2 / (2.0 * width * width)).exp();
                    for j in 0..n_ord {
                        values[(c, j)] = v;
                    }
                }
                Ok(values)
            }
            FieldSpec::Checkerboard { low, high, tiles } => {
                if tiles[0] == 0 || tiles[1] == 0 {
                    return Err(Error::Config("checkerboard needs at least one tile".into()));
                }
                let mut values = Array2::zeros((n_cells, n_ord));
                for c in 0..n_cells {
                    let [x, y] = mesh.cell_center(c);
                    let tx = (((x - mesh.origin[0]) / mesh.extents[0]) * tiles[0] as f64) as usize;
                    let ty = (((y - mesh.origin[1]) / mesh.extents[1]) * tiles[1] as f64) as usize;
                    let v = if (tx + ty).is_multiple_of(2) { *low } else { *high };
                    for j in 0..n_ord {
                        values[(c, j)] = v;
                    }
                }
                Ok(values)
            }
            FieldSpec::Csv { path } => crate::io::read_coefficient_csv(path, n_cells, n_ord),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhaseSpec {
    #[default]
    Isotropic,
    /// Raw kernel values from CSV (cell_id, ordinate_out, ordinate_in,
    /// value); rows are quadrature-normalized after loading.
    Csv { path: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsSection {
    #[serde(default = "zero_field")]
    pub sigma_a: FieldSpec,
    #[serde(default = "zero_field")]
    pub sigma_s: FieldSpec,
    #[serde(default)]
    pub phase: PhaseSpec,
}

fn zero_field() -> FieldSpec {
    FieldSpec::Zero
}

impl Default for CoefficientsSection {
    fn default() -> Self {
        Self {
            sigma_a: FieldSpec::Zero,
            sigma_s: FieldSpec::Zero,
            phase: PhaseSpec::Isotropic,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Time horizon T.
    pub horizon: f64,
    /// Requested time step; defaults to the monotone-update bound.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_cfl")]
    pub cfl_factor: f64,
}

fn default_cfl() -> f64 {
    DEFAULT_CFL_FACTOR
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum InflowPreset {
    Zero,
    /// Time-constant extension of the initial value's boundary trace.
    MatchInitial,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub f: FieldSpec,
    /// Constant source factor R.
    #[serde(default = "default_r")]
    pub r_constant: f64,
}

fn default_r() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarlemanSection {
    /// Weight slope; must stay strictly below the smallest squared speed.
    pub beta: f64,
    #[serde(default)]
    pub s_min: Option<f64>,
    #[serde(default)]
    pub s_max: Option<f64>,
    #[serde(default = "default_s_count")]
    pub s_count: usize,
}

fn default_s_count() -> usize {
    8
}

impl CarlemanSection {
    pub fn s_spec(&self) -> Result<Option<SGridSpec>> {
        match (self.s_min, self.s_max) {
            (Some(lo), Some(hi)) => Ok(Some(SGridSpec {
                s_min: lo,
                s_max: hi,
                count: self.s_count,
            })),
            (None, None) => Ok(None),
            _ => Err(Error::Config(
                "s_min and s_max must be given together".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub target: ExperimentKind,
    pub count: usize,
    pub amplitude: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_side")]
    pub side: MeasurementSide,
    #[serde(default = "default_spread")]
    pub spread_threshold: f64,
}

fn default_side() -> MeasurementSide {
    MeasurementSide::GammaPlusWeighted
}

fn default_spread() -> f64 {
    50.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub amp_min: f64,
    pub amp_max: f64,
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Also dump the full interior field as binary with a JSON sidecar.
    #[serde(default)]
    pub dump_fields: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshSection,
    pub velocity: VelocitySection,
    #[serde(default)]
    pub coefficients: CoefficientsSection,
    pub run: RunSection,
    #[serde(default)]
    pub initial: Option<FieldSpec>,
    #[serde(default)]
    pub inflow: Option<InflowPreset>,
    #[serde(default)]
    pub source: Option<SourceSection>,
    #[serde(default)]
    pub carleman: Option<CarlemanSection>,
    #[serde(default)]
    pub ensemble: Option<EnsembleSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub bounds: Option<BoundsSection>,
    #[serde(default)]
    pub output: OutputSection,
}

/// Validated numerical setup shared by all pipelines.
#[derive(Debug)]
pub struct Assembled {
    pub mesh: SpatialMesh,
    pub vset: VelocitySet,
    pub sigma_a: CoefficientField,
    pub sigma_s: CoefficientField,
    pub sigma_t: CoefficientField,
    pub phase: PhaseKernel,
    pub opts: SolveOptions,
    pub bounds: Option<AdmissibilityBounds>,
}

impl RunConfig {
    pub fn parse_str(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn parse_file(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    /// Build and cross-validate the numerical setup.
    pub fn assemble(&self) -> Result<Assembled> {
        let mesh = build_mesh(&DomainSpec {
            origin: self.mesh.origin,
            extents: self.mesh.extents,
            cells_per_axis: self.mesh.cells,
        })?;
        let vset = build_velocity_set(
            self.velocity.v_min,
            self.velocity.v_max,
            self.velocity.n_angles,
            self.velocity.n_speeds,
        )?;
        let n_cells = mesh.n_cells();
        let n_ord = vset.len();

        let sigma_a = CoefficientField::new(
            self.coefficients.sigma_a.materialize(&mesh, n_ord)?,
            CoefficientLabel::SigmaA,
        )
        .map_err(|e| Error::Config(format!("sigma_a: {e}")))?;
        let sigma_s = CoefficientField::new(
            self.coefficients.sigma_s.materialize(&mesh, n_ord)?,
            CoefficientLabel::SigmaS,
        )
        .map_err(|e| Error::Config(format!("sigma_s: {e}")))?;
        let sigma_t = CoefficientField::sum(&sigma_a, &sigma_s, CoefficientLabel::SigmaT);

        let phase = match &self.coefficients.phase {
            PhaseSpec::Isotropic => isotropic_phase(&mesh, &vset),
            PhaseSpec::Csv { path } => {
                let raw = crate::io::read_phase_csv(path, n_cells, n_ord)?;
                normalize_phase(&raw, &vset)?
            }
        };

        if !(self.run.horizon > 0.0) {
            return Err(Error::Config(format!(
                "run.horizon must be positive, got {}",
                self.run.horizon
            )));
        }
        if !(self.run.cfl_factor > 0.0 && self.run.cfl_factor <= 1.0) {
            return Err(Error::Config(format!(
                "run.cfl_factor must lie in (0, 1], got {}",
                self.run.cfl_factor
            )));
        }
        let dt_bound = max_stable_dt(&mesh, &vset, self.run.cfl_factor);
        let dt = match self.run.dt {
            Some(dt) => {
                if !(dt > 0.0) {
                    return Err(Error::Config(format!("run.dt must be positive, got {dt}")));
                }
                if dt > dt_bound * (1.0 + 1e-12) {
                    return Err(Error::Cfl(format!(
                        "run.dt = {dt:.6e} exceeds the monotone-update bound {dt_bound:.6e}"
                    )));
                }
                dt
            }
            None => dt_bound,
        };

        if let Some(carleman) = &self.carleman {
            let min_sq = vset.min_speed_sq();
            if !(carleman.beta > 0.0 && carleman.beta < min_sq) {
                return Err(Error::Config(format!(
                    "carleman.beta = {} must lie strictly inside (0, min |v|^2) = (0, {min_sq}) \
                     (weight-slope hypothesis)",
                    carleman.beta
                )));
            }
            carleman.s_spec()?;
        }

        if let Some(ens) = &self.ensemble {
            // count = 0 is allowed here; the ensemble summary rejects it as
            // insufficient data after the (empty) run.
            if !(ens.amplitude > 0.0) {
                return Err(Error::Config(format!(
                    "ensemble.amplitude must be positive, got {}",
                    ens.amplitude
                )));
            }
            if !(ens.spread_threshold >= 1.0) {
                return Err(Error::Config(format!(
                    "ensemble.spread_threshold must be at least 1, got {}",
                    ens.spread_threshold
                )));
            }
        }

        if let Some(sweep) = &self.sweep {
            if sweep.count < 4 {
                return Err(Error::Config(
                    "sweep.count must be at least 4 for the exponent fit".into(),
                ));
            }
            if !(sweep.amp_min > 0.0 && sweep.amp_max > sweep.amp_min) {
                return Err(Error::Config(format!(
                    "sweep amplitudes must satisfy 0 < amp_min < amp_max, got [{}, {}]",
                    sweep.amp_min, sweep.amp_max
                )));
            }
        }

        let bounds = match &self.bounds {
            Some(b) => Some(AdmissibilityBounds::new(b.m)?),
            None => None,
        };

        Ok(Assembled {
            mesh,
            vset,
            sigma_a,
            sigma_s,
            sigma_t,
            phase,
            opts: SolveOptions {
                dt,
                cfl_factor: self.run.cfl_factor,
                record_interior: true,
            },
            bounds,
        })
    }

    /// Materialize the initial value (defaults to the unit constant).
    pub fn initial_values(&self, mesh: &SpatialMesh, n_ord: usize) -> Result<Array2<f64>> {
        match &self.initial {
            Some(spec) => spec.materialize(mesh, n_ord),
            None => Ok(Array2::from_elem((mesh.n_cells(), n_ord), 1.0)),
        }
    }

    /// Materialize the inflow data (defaults to the trace extension of the
    /// initial value).
    pub fn inflow_values(&self, initial: &Array2<f64>, mesh: &SpatialMesh) -> Inflow {
        match self.inflow.unwrap_or(InflowPreset::MatchInitial) {
            InflowPreset::Zero => Inflow::Zero,
            InflowPreset::MatchInitial => Inflow::matching_initial(initial, mesh),
        }
    }

    pub fn ensemble_spec(&self, seed_override: Option<u64>) -> Option<EnsembleSpec> {
        self.ensemble.as_ref().map(|e| EnsembleSpec {
            count: e.count,
            amplitude: e.amplitude,
            seed: seed_override.unwrap_or(e.seed),
        })
    }
}
