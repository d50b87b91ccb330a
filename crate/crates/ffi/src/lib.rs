//! C interface to the reaction coefficient toolkit.
//!
//! Objects are opaque handles created by `ri_*_new` and released with the
//! matching `ri_*_free`. Every fallible function returns an [`RiStatus`]; on
//! failure [`ri_last_error`] describes the problem for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use reaction_inverse::experiments::{self, FluxTuple, RhoRule, StudySettings, ThetaRule};
use reaction_inverse::forward::{trace, ForwardModel};
use reaction_inverse::{build_square_mesh, AlgorithmParams, BoundaryRegion, Error, FemSpace, Mesh, NodalField, ScalarCoefficient};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    SolverFailure = 4,
    Io = 5,
    Panic = 6,
}

/// Observation boundary bits, combined with `|`.
pub const RI_SIDE_BOTTOM: u8 = 1;
pub const RI_SIDE_RIGHT: u8 = 2;
pub const RI_SIDE_TOP: u8 = 4;
pub const RI_SIDE_LEFT: u8 = 8;

/// Uniform triangulation of the square.
pub struct RiMesh {
    mesh: Mesh,
}

/// Benchmark problem on one mesh with a fixed observation boundary.
pub struct RiProblem {
    space: FemSpace,
    gamma: BoundaryRegion,
}

/// Result of a multilevel inversion.
pub struct RiInversion {
    beta: Vec<f64>,
    nodes: Vec<[f64; 2]>,
    errors: RiErrorMetrics,
    iterations: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RiErrorMetrics {
    pub beta: f64,
    pub neumann: f64,
    pub mixed: f64,
    pub dirichlet: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RiStatus {
    match e {
        Error::NotConverged { .. } | Error::StepStall { .. } | Error::NotSymmetric { .. } | Error::NonPositiveDiagonal { .. } => {
            RiStatus::SolverFailure
        }
        Error::Io(_) => RiStatus::Io,
        _ => RiStatus::InvalidArgument,
    }
}

/// Runs `f`, turning errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), (RiStatus, String)>) -> RiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RiStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RiStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (RiStatus, String) {
    (status_of(&e), e.to_string())
}

fn null() -> (RiStatus, String) {
    (RiStatus::NullPointer, "null pointer argument".into())
}

fn invalid(msg: &str) -> (RiStatus, String) {
    (RiStatus::InvalidArgument, msg.to_string())
}

unsafe fn read_str<'a>(p: *const c_char, default: &'a str) -> Result<std::borrow::Cow<'a, str>, (RiStatus, String)> {
    if p.is_null() {
        return Ok(default.into());
    }
    CStr::from_ptr(p).to_str().map(|s| s.to_owned().into()).map_err(|_| invalid("string is not valid UTF-8"))
}

unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize) -> Result<(), (RiStatus, String)> {
    if out.is_null() {
        return Err(null());
    }
    if len < src.len() {
        return Err((RiStatus::BufferTooSmall, format!("buffer holds {len} values, {} needed", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn ri_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn ri_mesh_new(level: usize, out: *mut *mut RiMesh) -> RiStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let mesh = build_square_mesh(level).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(RiMesh { mesh }));
        Ok(())
    })
}

/// # Safety
/// `mesh` must come from `ri_mesh_new` and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ri_mesh_free(mesh: *mut RiMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Number of nodes, or 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ri_mesh_node_count(mesh: *const RiMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.mesh.node_count())
}

/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ri_mesh_triangle_count(mesh: *const RiMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.mesh.triangles().len())
}

/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ri_mesh_size(mesh: *const RiMesh) -> f64 {
    mesh.as_ref().map_or(f64::NAN, |m| m.mesh.mesh_size())
}

/// Copies node coordinates as `x0 y0 x1 y1 ...` into `out` (`len >= 2 * nodes`).
///
/// # Safety
/// `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ri_mesh_nodes(mesh: *const RiMesh, out: *mut f64, len: usize) -> RiStatus {
    guard(|| {
        let m = mesh.as_ref().ok_or_else(null)?;
        let flat: Vec<f64> = m.mesh.nodes().iter().flat_map(|p| [p[0], p[1]]).collect();
        copy_out(&flat, out, len)
    })
}

/// Benchmark problem at `level` observed on the sides in `gamma_mask`.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn ri_problem_new(level: usize, gamma_mask: u8, out: *mut *mut RiProblem) -> RiStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let gamma = BoundaryRegion::from_mask(gamma_mask).map_err(lib_err)?;
        let space = FemSpace::new(build_square_mesh(level).map_err(lib_err)?);
        *out = Box::into_raw(Box::new(RiProblem { space, gamma }));
        Ok(())
    })
}

/// # Safety
/// `problem` must come from `ri_problem_new` and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ri_problem_free(problem: *mut RiProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ri_problem_node_count(problem: *const RiProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.space.node_count())
}

/// Neumann and mixed states for the default boundary data. `beta` holds nodal
/// values, or is null for the exact coefficient; the mixed problem uses the
/// trace of the Neumann state at the exact coefficient.
///
/// # Safety
/// `beta` must be null or valid for `len` reads; `neumann` and `mixed` valid for
/// `len` writes, `len` equal to the node count.
#[no_mangle]
pub unsafe extern "C" fn ri_problem_forward(
    problem: *const RiProblem,
    beta: *const f64,
    len: usize,
    neumann: *mut f64,
    mixed: *mut f64,
) -> RiStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(null)?;
        let n = p.space.node_count();
        if len != n {
            return Err(invalid(&format!("expected {n} nodal values, got {len}")));
        }
        let truth = ScalarCoefficient::Nodal(experiments::beta_true_interpolant(p.space.mesh()));
        let coeff = if beta.is_null() {
            truth.clone()
        } else {
            ScalarCoefficient::Nodal(NodalField::new(std::slice::from_raw_parts(beta, len).to_vec()))
        };
        let model = ForwardModel::new(&p.space, experiments::catalog_coefficients()).map_err(lib_err)?;
        let flux = FluxTuple::DEFAULT.edge_flux(p.space.mesh());
        let k_true = model.stiffness(&truth).map_err(lib_err)?;
        let g = trace(&p.space, &model.neumann(&k_true, &flux).map_err(lib_err)?, &p.gamma);
        let k = model.stiffness(&coeff).map_err(lib_err)?;
        let nst = model.neumann(&k, &flux).map_err(lib_err)?;
        let mst = model.mixed(&k, &flux, &p.gamma, &g).map_err(lib_err)?;
        copy_out(nst.values(), neumann, len)?;
        copy_out(mst.values(), mixed, len)
    })
}

/// Multilevel inversion of the benchmark problem. `levels` must double from one
/// entry to the next. Null rule strings select `sqrt` and `ex1`; `max_iter == 0`
/// keeps the default cap.
///
/// # Safety
/// `levels` valid for `nlevels` reads, strings null or nul-terminated, `out`
/// valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn ri_invert(
    levels: *const usize,
    nlevels: usize,
    rho_rule: *const c_char,
    theta_rule: *const c_char,
    gamma_mask: u8,
    seed: u64,
    max_iter: usize,
    out: *mut *mut RiInversion,
) -> RiStatus {
    guard(|| {
        if levels.is_null() || out.is_null() {
            return Err(null());
        }
        let rho: RhoRule = read_str(rho_rule, "sqrt")?.parse().map_err(lib_err)?;
        let theta: ThetaRule = read_str(theta_rule, "ex1")?.parse().map_err(lib_err)?;
        let mut params = AlgorithmParams::default();
        if max_iter > 0 {
            params.max_iter = max_iter;
        }
        let settings = StudySettings {
            levels: std::slice::from_raw_parts(levels, nlevels).to_vec(),
            rho,
            theta,
            gamma: BoundaryRegion::from_mask(gamma_mask).map_err(lib_err)?,
            tuples: vec![FluxTuple::DEFAULT],
            seed,
            params,
        };
        let study = experiments::run_study(&settings).map_err(lib_err)?;
        let finest = study.outcomes.last().expect("at least one level");
        let e = study.finest().errors;
        let result = RiInversion {
            beta: finest.result.beta.values().to_vec(),
            nodes: finest.space.mesh().nodes().to_vec(),
            errors: RiErrorMetrics { beta: e.beta, neumann: e.neumann, mixed: e.mixed, dirichlet: e.dirichlet },
            iterations: finest.result.iterations(),
        };
        *out = Box::into_raw(Box::new(result));
        Ok(())
    })
}

/// # Safety
/// `inv` must come from `ri_invert` and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ri_inversion_free(inv: *mut RiInversion) {
    if !inv.is_null() {
        drop(Box::from_raw(inv));
    }
}

/// Node count of the finest level, or 0 for a null handle.
///
/// # Safety
/// `inv` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ri_inversion_node_count(inv: *const RiInversion) -> usize {
    inv.as_ref().map_or(0, |r| r.nodes.len())
}

/// Iterations spent on the finest level.
///
/// # Safety
/// `inv` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ri_inversion_iterations(inv: *const RiInversion) -> usize {
    inv.as_ref().map_or(0, |r| r.iterations)
}

/// # Safety
/// `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ri_inversion_beta(inv: *const RiInversion, out: *mut f64, len: usize) -> RiStatus {
    guard(|| copy_out(&inv.as_ref().ok_or_else(null)?.beta, out, len))
}

/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ri_inversion_errors(inv: *const RiInversion, out: *mut RiErrorMetrics) -> RiStatus {
    guard(|| {
        let r = inv.as_ref().ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        *out = r.errors;
        Ok(())
    })
}

/// Experimental orders of convergence: `n - 1` per-step values into `steps`
/// and their mean into `mean`.
///
/// # Safety
/// `errors` and `mesh_sizes` valid for `n` reads, `steps` for `n - 1` writes,
/// `mean` for one write.
#[no_mangle]
pub unsafe extern "C" fn ri_eoc(errors: *const f64, mesh_sizes: *const f64, n: usize, steps: *mut f64, mean: *mut f64) -> RiStatus {
    guard(|| {
        if errors.is_null() || mesh_sizes.is_null() || mean.is_null() {
            return Err(null());
        }
        let e = std::slice::from_raw_parts(errors, n);
        let h = std::slice::from_raw_parts(mesh_sizes, n);
        let (s, m) = experiments::eoc(e, h).map_err(lib_err)?;
        copy_out(&s, steps, s.len())?;
        *mean = m;
        Ok(())
    })
}
