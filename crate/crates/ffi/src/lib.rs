//! C ABI over the tubecalc engine.
//!
//! Objects are opaque heap handles released with their `*_free` function.
//! Every fallible call returns a [`TcStatus`]; the message of the most recent
//! failure on the calling thread is available from [`tc_last_error`].
//! Axes are 1-based.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use nalgebra::Complex;
use tubecalc::cli::{self, Format};
use tubecalc::distributions::{Engine, ThickDistribution};
use tubecalc::expansion::{derivative_of, Separable, TestFn};
use tubecalc::quadrature::Levels;
use tubecalc::shapes::sphere_delta_derivative_oracle;
use tubecalc::{make_circle3d, make_sphere, Error};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Schema = 3,
    NotConverged = 4,
    Numerical = 5,
    Io = 6,
    Panic = 7,
}

/// Pairing engine bound to one shape and quadrature resolution.
pub struct TcEngine(Engine);

/// Test function φ.
pub struct TcTestFn(TestFn);

/// Thick distribution T.
pub struct TcDistribution(ThickDistribution);

/// Outcome of [`tc_pair`]; `eta` and `value_eta_half` are NaN for pairings
/// without a finite part.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcPairing {
    pub value: f64,
    pub imag: f64,
    pub eta: f64,
    pub value_eta_half: f64,
    pub abs_diff: f64,
    pub eta_consistent: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TcStatus {
    match e {
        Error::Schema { .. } => TcStatus::Schema,
        Error::InvalidArgument(_)
        | Error::SupportExceedsTube { .. }
        | Error::DimUnsupported(_)
        | Error::CodimUnsupported(_)
        | Error::ShapeUnsupported(_) => TcStatus::InvalidArgument,
        Error::NotConverged { .. } | Error::NoConvergence { .. } => TcStatus::NotConverged,
        Error::Io(_) => TcStatus::Io,
        _ => TcStatus::Numerical,
    }
}

/// Runs `f`, recording errors and converting panics into [`TcStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), (TcStatus, String)>) -> TcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TcStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("panic: {msg}"));
            TcStatus::Panic
        }
    }
}

fn fail(e: Error) -> (TcStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (TcStatus, String) {
    (TcStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: String) -> (TcStatus, String) {
    (TcStatus::InvalidArgument, msg)
}

unsafe fn out_ptr<T>(out: *mut *mut T, value: T) -> Result<(), (TcStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, (TcStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

fn axis0(axis: u32, n: usize) -> Result<usize, (TcStatus, String)> {
    if axis == 0 || axis as usize > n {
        return Err(invalid(format!("axis {axis} outside 1..={n}")));
    }
    Ok(axis as usize - 1)
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn tc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn tc_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(c) => c,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Engine for the sphere of radius `r` in R^n at default quadrature levels.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn tc_engine_sphere(n: u32, r: f64, out: *mut *mut TcEngine) -> TcStatus {
    guard(|| {
        if n < 2 || !(r > 0.0) {
            return Err(invalid(format!("sphere needs n >= 2 and r > 0, got n={n}, r={r}")));
        }
        let m = make_sphere(n as usize, r).map_err(fail)?;
        out_ptr(out, TcEngine(Engine::new(m, Levels::default()).map_err(fail)?))
    })
}

/// Engine for the circle of radius `radius` in the x1x2-plane of R^3.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn tc_engine_circle3d(radius: f64, out: *mut *mut TcEngine) -> TcStatus {
    guard(|| {
        if !(radius > 0.0) {
            return Err(invalid(format!("radius must be positive, got {radius}")));
        }
        let m = make_circle3d(radius).map_err(fail)?;
        out_ptr(out, TcEngine(Engine::new(m, Levels::default()).map_err(fail)?))
    })
}

/// Replaces the quadrature resolution of an engine.
///
/// # Safety
/// `engine` must come from a `tc_engine_*` constructor and not be freed.
#[no_mangle]
pub unsafe extern "C" fn tc_engine_set_levels(
    engine: *mut TcEngine,
    sigma_level: u32,
    fiber_level: u32,
    radial_points: u32,
) -> TcStatus {
    guard(|| {
        let e = engine.as_mut().ok_or_else(|| null("engine"))?;
        if sigma_level == 0 || fiber_level == 0 || radial_points == 0 {
            return Err(invalid("levels must be positive".into()));
        }
        let levels = Levels {
            sigma_level: sigma_level as usize,
            fiber_level: fiber_level as usize,
            radial_points: radial_points as usize,
        };
        let fresh = Engine::new(e.0.manifold().clone(), levels).map_err(fail)?;
        e.0 = fresh.with_measure(e.0.measure());
        Ok(())
    })
}

/// Tube radius of the engine's shape, NaN for a null handle.
///
/// # Safety
/// `engine` must be null or a live engine handle.
#[no_mangle]
pub unsafe extern "C" fn tc_engine_tube_radius(engine: *const TcEngine) -> f64 {
    engine.as_ref().map_or(f64::NAN, |e| e.0.manifold().tube_radius())
}

/// # Safety
/// `engine` must be null or a live engine handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn tc_engine_free(engine: *mut TcEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Bump χ(ρ) with a_0 ≡ 1 and support radius `support`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn tc_testfn_bump(support: f64, out: *mut *mut TcTestFn) -> TcStatus {
    guard(|| {
        if !(support > 0.0) {
            return Err(invalid(format!("support must be positive, got {support}")));
        }
        out_ptr(out, TcTestFn(Arc::new(Separable::bump(support))))
    })
}

/// χ(ρ) Σ_j coeffs[j] ρ^{order+j}.
///
/// # Safety
/// `coeffs` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_testfn_laurent(
    order: i32,
    coeffs: *const f64,
    len: usize,
    support: f64,
    out: *mut *mut TcTestFn,
) -> TcStatus {
    guard(|| {
        if coeffs.is_null() && len > 0 {
            return Err(null("coeffs"));
        }
        if !(support > 0.0) {
            return Err(invalid(format!("support must be positive, got {support}")));
        }
        let c = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(coeffs, len).to_vec()
        };
        out_ptr(out, TcTestFn(Arc::new(Separable::laurent(order, c, support))))
    })
}

/// χ(ρ) n_axis(ξ), the normal component on a hypersurface.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn tc_testfn_normal_component(axis: u32, support: f64, out: *mut *mut TcTestFn) -> TcStatus {
    guard(|| {
        if axis == 0 {
            return Err(invalid("axis is 1-based".into()));
        }
        if !(support > 0.0) {
            return Err(invalid(format!("support must be positive, got {support}")));
        }
        out_ptr(out, TcTestFn(Arc::new(Separable::normal_component(axis as usize - 1, support))))
    })
}

/// ∂φ/∂x_axis.
///
/// # Safety
/// `phi` must be a live test-function handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_testfn_derivative(phi: *const TcTestFn, axis: u32, out: *mut *mut TcTestFn) -> TcStatus {
    guard(|| {
        let phi = get(phi, "phi")?;
        if axis == 0 {
            return Err(invalid("axis is 1-based".into()));
        }
        out_ptr(out, TcTestFn(derivative_of(&phi.0, axis as usize - 1)))
    })
}

/// # Safety
/// `phi` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn tc_testfn_free(phi: *mut TcTestFn) {
    if !phi.is_null() {
        drop(Box::from_raw(phi));
    }
}

/// Pf(ρ^λ) with λ = lambda_re + i·lambda_im.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn tc_dist_pf(lambda_re: f64, lambda_im: f64, out: *mut *mut TcDistribution) -> TcStatus {
    guard(|| {
        if !lambda_re.is_finite() || !lambda_im.is_finite() {
            return Err(invalid("lambda must be finite".into()));
        }
        out_ptr(
            out,
            TcDistribution(ThickDistribution::pf_complex(Complex::new(lambda_re, lambda_im))),
        )
    })
}

/// δ^{[degree]} with g ≡ 1.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn tc_dist_delta(degree: i32, out: *mut *mut TcDistribution) -> TcStatus {
    guard(|| out_ptr(out, TcDistribution(ThickDistribution::delta(degree))))
}

/// ∂T/∂x_axis on the engine's shape.
///
/// # Safety
/// `engine` and `t` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_dist_derivative(
    engine: *const TcEngine,
    t: *const TcDistribution,
    axis: u32,
    out: *mut *mut TcDistribution,
) -> TcStatus {
    guard(|| {
        let e = get(engine, "engine")?;
        let t = get(t, "t")?;
        let a = axis0(axis, e.0.manifold().ambient_dim())?;
        out_ptr(out, TcDistribution(e.0.derivative(&t.0, a)))
    })
}

/// ψ·T.
///
/// # Safety
/// `psi` and `t` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_dist_weighted(
    psi: *const TcTestFn,
    t: *const TcDistribution,
    out: *mut *mut TcDistribution,
) -> TcStatus {
    guard(|| {
        let psi = get(psi, "psi")?;
        let t = get(t, "t")?;
        out_ptr(out, TcDistribution(ThickDistribution::weighted(psi.0.clone(), t.0.clone())))
    })
}

/// Σ coeffs[k]·parts[k].
///
/// # Safety
/// `coeffs` and `parts` must point to `len` entries of live handles.
#[no_mangle]
pub unsafe extern "C" fn tc_dist_combination(
    coeffs: *const f64,
    parts: *const *const TcDistribution,
    len: usize,
    out: *mut *mut TcDistribution,
) -> TcStatus {
    guard(|| {
        if len > 0 && (coeffs.is_null() || parts.is_null()) {
            return Err(null("coeffs/parts"));
        }
        let mut terms = Vec::with_capacity(len);
        for k in 0..len {
            let t = get(*parts.add(k), "parts[k]")?;
            terms.push((*coeffs.add(k), t.0.clone()));
        }
        out_ptr(out, TcDistribution(ThickDistribution::combination(terms)))
    })
}

/// Writes the distribution label into `buf` (nul-terminated, truncated to
/// `cap`) and returns the full label length in bytes.
///
/// # Safety
/// `t` must be a live handle; `buf` must be null or hold `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn tc_dist_label(t: *const TcDistribution, buf: *mut c_char, cap: usize) -> usize {
    let Some(t) = t.as_ref() else {
        return 0;
    };
    let label = t.0.label();
    if !buf.is_null() && cap > 0 {
        let n = label.len().min(cap - 1);
        ptr::copy_nonoverlapping(label.as_ptr() as *const c_char, buf, n);
        *buf.add(n) = 0;
    }
    label.len()
}

/// # Safety
/// `t` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn tc_dist_free(t: *mut TcDistribution) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// ⟨T, φ⟩. A non-positive `eta` selects the default split point.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_pair(
    engine: *const TcEngine,
    t: *const TcDistribution,
    phi: *const TcTestFn,
    eta: f64,
    out: *mut TcPairing,
) -> TcStatus {
    guard(|| {
        let e = get(engine, "engine")?;
        let t = get(t, "t")?;
        let phi = get(phi, "phi")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let eta = (eta > 0.0).then_some(eta);
        let r = e.0.pair(&t.0, &phi.0, eta).map_err(fail)?;
        *out = TcPairing {
            value: r.value,
            imag: r.imag,
            eta: r.eta.unwrap_or(f64::NAN),
            value_eta_half: r.value_eta_half.unwrap_or(f64::NAN),
            abs_diff: r.abs_diff,
            eta_consistent: r.eta_consistent,
        };
        Ok(())
    })
}

/// Residue of Pf(ρ^λ) at λ = k: the delta formula and the λ-limit.
///
/// # Safety
/// Handles must be live; `formula` and `limit` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_residue(
    engine: *const TcEngine,
    k: i32,
    phi: *const TcTestFn,
    formula: *mut f64,
    limit: *mut f64,
) -> TcStatus {
    guard(|| {
        let e = get(engine, "engine")?;
        let phi = get(phi, "phi")?;
        if formula.is_null() || limit.is_null() {
            return Err(null("formula/limit"));
        }
        let r = e.0.residue(k, &phi.0).map_err(fail)?;
        *formula = r.formula;
        *limit = r.limit;
        Ok(())
    })
}

/// Closed-form ⟨∂δ^{[j]}/∂x_i, χ n_k⟩ on the sphere (1-based i, k).
#[no_mangle]
pub extern "C" fn tc_sphere_delta_derivative_oracle(n: u32, r: f64, i: u32, k: u32, j: i32) -> f64 {
    if i == 0 || k == 0 {
        return f64::NAN;
    }
    sphere_delta_derivative_oracle(n as usize, r, i as usize - 1, k as usize - 1, j)
}

/// Runs a JSON scenario and returns the rendered report (`json != 0` selects
/// JSON, else CSV) in `out`, to be released with [`tc_string_free`].
///
/// # Safety
/// `scenario` must be a nul-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_run_scenario(scenario: *const c_char, json: bool, out: *mut *mut c_char) -> TcStatus {
    guard(|| {
        if scenario.is_null() {
            return Err(null("scenario"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(scenario)
            .to_str()
            .map_err(|e| (TcStatus::Schema, format!("scenario is not UTF-8: {e}")))?;
        let sc = cli::parse_scenario(text).map_err(fail)?;
        let report = cli::execute(&sc).map_err(fail)?;
        let format = if json { Format::Json } else { Format::Csv };
        let rendered = cli::render(&report, format).map_err(fail)?;
        *out = CString::new(rendered).map_err(|e| invalid(e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn tc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
