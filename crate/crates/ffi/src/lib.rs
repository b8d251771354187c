//! C ABI for the transport toolkit: opaque handles, integer status codes,
//! and a thread-local last-error message. The header `include/rte.h` is
//! generated from these declarations.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ndarray::Array2;

use rte_core::boundary::min_observation_time;
use rte_core::coefficients::{CoefficientField, CoefficientLabel, SourceFactor};
use rte_core::config::RunConfig;
use rte_core::energy::energy;
use rte_core::error::Error;
use rte_core::mesh::{build_mesh, DomainSpec, SpatialMesh};
use rte_core::phase::isotropic_phase;
use rte_core::pipeline::{self, Subcommand};
use rte_core::solver::{
    max_stable_dt, solve_forward, solve_linearized, time_derivative_trace, AngularDensityField,
    BoundarySide, Inflow, ProblemData, SolveOptions, DEFAULT_CFL_FACTOR,
};
use rte_core::stability::measurement_norm;
use rte_core::velocity::{build_velocity_set, VelocitySet};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RteStatus {
    RteOk = 0,
    /// Invalid configuration (geometry, counts, time step).
    RteErrConfig = 1,
    /// Argument outside the mathematical domain of the operation.
    RteErrDomain = 2,
    /// Time step above the stability bound, or the solve diverged.
    RteErrStability = 3,
    /// A hypothesis of the stability theory is violated.
    RteErrHypothesis = 4,
    /// Null pointer or malformed string argument.
    RteErrNullArgument = 5,
    /// I/O or serialization failure.
    RteErrIo = 6,
    /// Internal panic; see the last error message.
    RteErrInternal = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> RteStatus {
    match err {
        Error::Config(_) | Error::Parse(_) => RteStatus::RteErrConfig,
        Error::Domain(_) | Error::DegenerateKernel(_) => RteStatus::RteErrDomain,
        Error::Cfl(_) | Error::Divergence { .. } => RteStatus::RteErrStability,
        Error::Hypothesis(_) | Error::ObservationTime(_) | Error::Precondition(_) => {
            RteStatus::RteErrHypothesis
        }
        Error::SignConvention(_) | Error::IncompleteData(_) | Error::InsufficientData(_) => {
            RteStatus::RteErrDomain
        }
        Error::Io(_) => RteStatus::RteErrIo,
    }
}

fn fail(err: Error) -> RteStatus {
    let status = status_of(&err);
    set_error(&err.to_string());
    status
}

fn guard<F: FnOnce() -> RteStatus>(f: F) -> RteStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            RteStatus::RteErrInternal
        }
    }
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rte_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Rectangular cell grid (opaque).
pub struct RteMesh {
    inner: SpatialMesh,
}

/// Discrete ordinate set (opaque).
pub struct RteVelocitySet {
    inner: VelocitySet,
}

/// Recorded solution of one solve (opaque).
pub struct RteSolution {
    field: AngularDensityField,
    mesh: SpatialMesh,
    vset: VelocitySet,
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize) -> Option<&'a [f64]> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

/// Build a rectangular mesh over [origin, origin + extents] with nx x ny
/// cells. `origin` and `extents` point at two doubles each.
///
/// # Safety
/// Pointer arguments must be valid for the documented lengths.
#[no_mangle]
pub unsafe extern "C" fn rte_mesh_new(
    origin: *const f64,
    extents: *const f64,
    nx: usize,
    ny: usize,
    out: *mut *mut RteMesh,
) -> RteStatus {
    guard(|| {
        if origin.is_null() || extents.is_null() || out.is_null() {
            set_error("null pointer argument");
            return RteStatus::RteErrNullArgument;
        }
        let origin = unsafe { [*origin, *origin.add(1)] };
        let extents = unsafe { [*extents, *extents.add(1)] };
        match build_mesh(&DomainSpec {
            origin,
            extents,
            cells_per_axis: [nx, ny],
        }) {
            Ok(mesh) => {
                unsafe { *out = Box::into_raw(Box::new(RteMesh { inner: mesh })) };
                RteStatus::RteOk
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `mesh` must come from `rte_mesh_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rte_mesh_free(mesh: *mut RteMesh) {
    if !mesh.is_null() {
        drop(unsafe { Box::from_raw(mesh) });
    }
}

/// # Safety
/// `mesh` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn rte_mesh_n_cells(mesh: *const RteMesh) -> usize {
    if mesh.is_null() {
        return 0;
    }
    unsafe { &*mesh }.inner.n_cells()
}

/// Build the discrete ordinate set on the speed band [v_min, v_max].
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rte_velocity_set_new(
    v_min: f64,
    v_max: f64,
    n_angles: usize,
    n_speeds: usize,
    out: *mut *mut RteVelocitySet,
) -> RteStatus {
    guard(|| {
        if out.is_null() {
            set_error("null pointer argument");
            return RteStatus::RteErrNullArgument;
        }
        match build_velocity_set(v_min, v_max, n_angles, n_speeds) {
            Ok(vset) => {
                unsafe { *out = Box::into_raw(Box::new(RteVelocitySet { inner: vset })) };
                RteStatus::RteOk
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `vset` must come from `rte_velocity_set_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rte_velocity_set_free(vset: *mut RteVelocitySet) {
    if !vset.is_null() {
        drop(unsafe { Box::from_raw(vset) });
    }
}

/// # Safety
/// `vset` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn rte_velocity_set_len(vset: *const RteVelocitySet) -> usize {
    if vset.is_null() {
        return 0;
    }
    unsafe { &*vset }.inner.len()
}

/// # Safety
/// `vset` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn rte_velocity_set_measure(vset: *const RteVelocitySet) -> f64 {
    if vset.is_null() {
        return f64::NAN;
    }
    unsafe { &*vset }.inner.measure
}

/// Minimum admissible observation time. Pass `beta <= 0` to use the
/// smallest squared ordinate speed as the denominator.
///
/// # Safety
/// Handles must be valid; `out` must point at a double.
#[no_mangle]
pub unsafe extern "C" fn rte_min_observation_time(
    mesh: *const RteMesh,
    vset: *const RteVelocitySet,
    beta: f64,
    out: *mut f64,
) -> RteStatus {
    guard(|| {
        if mesh.is_null() || vset.is_null() || out.is_null() {
            set_error("null pointer argument");
            return RteStatus::RteErrNullArgument;
        }
        let mesh = unsafe { &*mesh };
        let vset = unsafe { &*vset };
        let beta_opt = if beta > 0.0 { Some(beta) } else { None };
        match min_observation_time(&mesh.inner, &vset.inner, beta_opt) {
            Ok(t) => {
                unsafe { *out = t };
                RteStatus::RteOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Largest stable time step for the given safety factor (pass 0 for the
/// default factor).
/// # Safety
/// Handles must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn rte_max_stable_dt(
    mesh: *const RteMesh,
    vset: *const RteVelocitySet,
    cfl_factor: f64,
) -> f64 {
    if mesh.is_null() || vset.is_null() {
        return f64::NAN;
    }
    let factor = if cfl_factor > 0.0 {
        cfl_factor
    } else {
        DEFAULT_CFL_FACTOR
    };
    max_stable_dt(
        &unsafe { &*mesh }.inner,
        &unsafe { &*vset }.inner,
        factor,
    )
}

#[allow(clippy::too_many_arguments)]
unsafe fn solve_common(
    mesh: *const RteMesh,
    vset: *const RteVelocitySet,
    sigma_a: f64,
    sigma_s: f64,
    values: *const f64,
    linearized: bool,
    zero_inflow: bool,
    horizon: f64,
    dt: f64,
    out: *mut *mut RteSolution,
) -> RteStatus {
    if mesh.is_null() || vset.is_null() || out.is_null() {
        set_error("null pointer argument");
        return RteStatus::RteErrNullArgument;
    }
    let mesh = &unsafe { &*mesh }.inner;
    let vset = &unsafe { &*vset }.inner;
    let n_cells = mesh.n_cells();
    let n_ord = vset.len();
    if sigma_a < 0.0 || sigma_s < 0.0 {
        set_error("cross sections must be nonnegative");
        return RteStatus::RteErrDomain;
    }
    let grid = match unsafe { slice_arg(values, n_cells * n_ord) } {
        Some(slice) => {
            match Array2::from_shape_vec((n_cells, n_ord), slice.to_vec()) {
                Ok(a) => a,
                Err(_) => {
                    set_error("field buffer has the wrong length");
                    return RteStatus::RteErrConfig;
                }
            }
        }
        None => Array2::from_elem((n_cells, n_ord), 1.0),
    };
    let dt = if dt > 0.0 {
        dt
    } else {
        max_stable_dt(mesh, vset, DEFAULT_CFL_FACTOR)
    };
    let opts = SolveOptions::new(dt);
    let sigma_t = CoefficientField::constant(sigma_a + sigma_s, n_cells, n_ord, CoefficientLabel::SigmaT);
    let sigma_s = CoefficientField::constant(sigma_s, n_cells, n_ord, CoefficientLabel::SigmaS);
    let phase = isotropic_phase(mesh, vset);

    let solved = if linearized {
        let f = CoefficientField {
            values: grid,
            label: CoefficientLabel::Source,
        };
        solve_linearized(
            &f,
            &SourceFactor::Constant(1.0),
            &sigma_t,
            &sigma_s,
            &phase,
            mesh,
            vset,
            horizon,
            &opts,
        )
    } else {
        let inflow = if zero_inflow {
            Inflow::Zero
        } else {
            Inflow::matching_initial(&grid, mesh)
        };
        let data = ProblemData {
            initial: grid,
            inflow,
            sigma_t,
            sigma_s,
            phase,
            horizon,
            source: None,
        };
        solve_forward(&data, mesh, vset, &opts)
    };
    match solved {
        Ok(field) => {
            let solution = RteSolution {
                field,
                mesh: mesh.clone(),
                vset: vset.clone(),
            };
            unsafe { *out = Box::into_raw(Box::new(solution)) };
            RteStatus::RteOk
        }
        Err(e) => fail(e),
    }
}

/// Solve the forward problem with constant cross sections and the
/// isotropic kernel. `initial` points at n_cells * n_ordinates doubles in
/// cell-major order, or is NULL for the unit constant. When `zero_inflow`
/// is 0 the inflow data is the time-constant extension of the initial
/// value's boundary trace. Pass `dt <= 0` to use the stability bound.
///
/// # Safety
/// Handles and buffers must be valid for the documented lengths.
#[no_mangle]
pub unsafe extern "C" fn rte_solve_forward_constant(
    mesh: *const RteMesh,
    vset: *const RteVelocitySet,
    sigma_a: f64,
    sigma_s: f64,
    initial: *const f64,
    zero_inflow: i32,
    horizon: f64,
    dt: f64,
    out: *mut *mut RteSolution,
) -> RteStatus {
    guard(|| unsafe {
        solve_common(
            mesh,
            vset,
            sigma_a,
            sigma_s,
            initial,
            false,
            zero_inflow != 0,
            horizon,
            dt,
            out,
        )
    })
}

/// Solve the linearized source problem (zero initial data, zero inflow,
/// right-hand side f with unit source factor). `f` points at
/// n_cells * n_ordinates doubles; NULL means f == 1.
///
/// # Safety
/// Handles and buffers must be valid for the documented lengths.
#[no_mangle]
pub unsafe extern "C" fn rte_solve_linearized_constant(
    mesh: *const RteMesh,
    vset: *const RteVelocitySet,
    sigma_a: f64,
    sigma_s: f64,
    f: *const f64,
    horizon: f64,
    dt: f64,
    out: *mut *mut RteSolution,
) -> RteStatus {
    guard(|| unsafe { solve_common(mesh, vset, sigma_a, sigma_s, f, true, true, horizon, dt, out) })
}

/// # Safety
/// `solution` must come from a solve call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rte_solution_free(solution: *mut RteSolution) {
    if !solution.is_null() {
        drop(unsafe { Box::from_raw(solution) });
    }
}

/// # Safety
/// `solution` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn rte_solution_n_steps(solution: *const RteSolution) -> usize {
    if solution.is_null() {
        return 0;
    }
    unsafe { &*solution }.field.n_steps
}

/// # Safety
/// `solution` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn rte_solution_dt(solution: *const RteSolution) -> f64 {
    if solution.is_null() {
        return f64::NAN;
    }
    unsafe { &*solution }.field.dt
}

/// Copy the energy E(t) at every time node into `out` (length
/// n_steps + 1).
///
/// # Safety
/// `out` must point at `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rte_solution_energy(
    solution: *const RteSolution,
    out: *mut f64,
    len: usize,
) -> RteStatus {
    guard(|| {
        if solution.is_null() || out.is_null() {
            set_error("null pointer argument");
            return RteStatus::RteErrNullArgument;
        }
        let sol = unsafe { &*solution };
        if len < sol.field.n_steps + 1 {
            set_error("output buffer shorter than n_steps + 1");
            return RteStatus::RteErrConfig;
        }
        match energy(&sol.field, &sol.mesh, &sol.vset) {
            Ok(trace) => {
                let dst = unsafe { std::slice::from_raw_parts_mut(out, trace.values.len()) };
                dst.copy_from_slice(&trace.values);
                RteStatus::RteOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Boundary norm of the time-differentiated outflow trace (`weighted != 0`
/// applies the nu . v flux weight).
///
/// # Safety
/// `out` must point at a double.
#[no_mangle]
pub unsafe extern "C" fn rte_solution_outflow_measurement(
    solution: *const RteSolution,
    weighted: i32,
    out: *mut f64,
) -> RteStatus {
    guard(|| {
        if solution.is_null() || out.is_null() {
            set_error("null pointer argument");
            return RteStatus::RteErrNullArgument;
        }
        let sol = unsafe { &*solution };
        let trace = match time_derivative_trace(&sol.field, BoundarySide::GammaPlus) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        match measurement_norm(&trace, weighted != 0) {
            Ok(norm) => {
                unsafe { *out = norm };
                RteStatus::RteOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Run a full experiment pipeline from a TOML configuration file.
/// `subcommand` is one of "forward", "linearized", "carleman-check",
/// "energy-check", "stability-ensemble", "holder-sweep". Pass `seed < 0`
/// to keep the seed from the configuration.
///
/// # Safety
/// String arguments must be valid NUL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn rte_run_pipeline(
    subcommand: *const c_char,
    config_path: *const c_char,
    out_dir: *const c_char,
    seed: i64,
) -> RteStatus {
    guard(|| {
        let parse = |ptr: *const c_char, what: &str| -> Result<String, RteStatus> {
            if ptr.is_null() {
                set_error(&format!("{what} is null"));
                return Err(RteStatus::RteErrNullArgument);
            }
            unsafe { CStr::from_ptr(ptr) }
                .to_str()
                .map(|s| s.to_string())
                .map_err(|_| {
                    set_error(&format!("{what} is not valid UTF-8"));
                    RteStatus::RteErrNullArgument
                })
        };
        let sub = match parse(subcommand, "subcommand") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let config_path = match parse(config_path, "config path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let out_dir = match parse(out_dir, "output directory") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let sub = match sub.as_str() {
            "forward" => Subcommand::Forward,
            "linearized" => Subcommand::Linearized,
            "carleman-check" => Subcommand::CarlemanCheck,
            "energy-check" => Subcommand::EnergyCheck,
            "stability-ensemble" => Subcommand::StabilityEnsemble,
            "holder-sweep" => Subcommand::HolderSweep,
            other => {
                set_error(&format!("unknown subcommand {other:?}"));
                return RteStatus::RteErrConfig;
            }
        };
        let config = match RunConfig::parse_file(Path::new(&config_path)) {
            Ok(c) => c,
            Err(e) => return fail(e),
        };
        let seed = if seed >= 0 { Some(seed as u64) } else { None };
        match pipeline::run(sub, &config, Path::new(&out_dir), seed) {
            Ok(_) => RteStatus::RteOk,
            Err(e) => fail(e),
        }
    })
}
