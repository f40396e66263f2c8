//! C ABI over the fluxiso library.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `_free` function. Every call returns a
//! `FluxisoStatus`; on failure the message is available from
//! `fluxiso_last_error` on the same thread until the next failing call.

use fluxiso::isotopy::{self, ImmersionFamily, IsotopyOptions};
use fluxiso::weierstrass::{catalog, polar_path, MinimalImmersion};
use fluxiso::{Error, C64};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Result of every call.
#[repr(C)]
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum FluxisoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Unknown catalog entry, bad domain, unreadable or invalid config.
    ConfigError = 3,
    /// A construction step failed; see the message.
    ComputationFailed = 4,
    /// The call completed but a verification check failed.
    VerificationFailed = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

/// A conformal minimal immersion of a circular domain.
pub struct FluxisoImmersion(MinimalImmersion);

/// A t-indexed family of immersions.
pub struct FluxisoFamily(ImmersionFamily);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FluxisoStatus {
    match e {
        Error::Config(_) | Error::Io(_) | Error::UnknownName(_) | Error::InvalidDomain(_) => FluxisoStatus::ConfigError,
        _ => FluxisoStatus::ComputationFailed,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (FluxisoStatus, String)>) -> FluxisoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FluxisoStatus::Ok,
        Ok(Err((s, m))) => {
            set_error(m);
            s
        }
        Err(p) => {
            let m = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned()).unwrap_or_default();
            set_error(format!("panic: {m}"));
            FluxisoStatus::Panic
        }
    }
}

fn lib(e: Error) -> (FluxisoStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (FluxisoStatus, String) {
    (FluxisoStatus::NullPointer, format!("{name} is null"))
}

fn invalid(msg: String) -> (FluxisoStatus, String) {
    (FluxisoStatus::InvalidArgument, msg)
}

unsafe fn cstr<'a>(p: *const c_char, name: &str) -> Result<&'a str, (FluxisoStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{name} is not UTF-8")))
}

unsafe fn get<'a, T>(p: *const T, name: &str) -> Result<&'a T, (FluxisoStatus, String)> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn put<T>(out: *mut T, name: &str, v: T) -> Result<(), (FluxisoStatus, String)> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(v);
    Ok(())
}

fn options(n_t: usize, tol_flux: f64, tol_period: f64) -> Result<IsotopyOptions, (FluxisoStatus, String)> {
    if n_t < 2 {
        return Err(invalid(format!("n_t must be at least 2, got {n_t}")));
    }
    if !(tol_flux > 0.0) || !(tol_period > 0.0) {
        return Err(invalid("tolerances must be positive".into()));
    }
    Ok(IsotopyOptions { n_t, tol_flux, tol_period, ..Default::default() })
}

/// Message of the last failing call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fluxiso_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Named example immersion ("catenoid", "enneper_annulus", ...).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fluxiso_catalog(name: *const c_char, out: *mut *mut FluxisoImmersion) -> FluxisoStatus {
    guard(|| {
        let n = cstr(name, "name")?;
        let u = catalog(n).map_err(lib)?;
        put(out, "out", Box::into_raw(Box::new(FluxisoImmersion(u))))
    })
}

/// # Safety
/// `u` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fluxiso_immersion_free(u: *mut FluxisoImmersion) {
    if !u.is_null() {
        drop(Box::from_raw(u));
    }
}

/// Number of homology generators (holes) of the domain.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fluxiso_immersion_generators(u: *const FluxisoImmersion, out: *mut usize) -> FluxisoStatus {
    guard(|| {
        let u = get(u, "u")?;
        put(out, "out", u.0.domain.holes.len())
    })
}

/// Flux of the immersion on generator `j`, written to `out[0..3]`.
///
/// # Safety
/// `out` must point to three doubles.
#[no_mangle]
pub unsafe extern "C" fn fluxiso_immersion_flux(u: *const FluxisoImmersion, j: usize, out: *mut f64) -> FluxisoStatus {
    guard(|| {
        let u = get(u, "u")?;
        let f = u.0.fluxes(1024).map_err(lib)?;
        let v = f.get(j).ok_or_else(|| invalid(format!("generator {j} out of range")))?;
        if out.is_null() {
            return Err(null("out"));
        }
        std::ptr::copy_nonoverlapping(v.as_ptr(), out, 3);
        Ok(())
    })
}

/// u(x + iy), integrated from the base point along the circle through it
/// and then radially; written to `out[0..3]`.
///
/// # Safety
/// `out` must point to three doubles.
#[no_mangle]
pub unsafe extern "C" fn fluxiso_immersion_evaluate(u: *const FluxisoImmersion, x: f64, y: f64, out: *mut f64) -> FluxisoStatus {
    guard(|| {
        let u = get(u, "u")?;
        let z = C64::new(x, y);
        if !u.0.domain.contains(z) {
            return Err(invalid(format!("({x}, {y}) is outside the domain")));
        }
        let p = u.0.integrate(&polar_path(&u.0.domain, u.0.basepoint, z)).map_err(lib)?;
        if out.is_null() {
            return Err(null("out"));
        }
        std::ptr::copy_nonoverlapping(p.as_ptr(), out, 3);
        Ok(())
    })
}

/// Isotopy to an immersion with vanishing flux on `n_t` t-samples.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fluxiso_flux_to_zero(
    u: *const FluxisoImmersion,
    n_t: usize,
    tol_flux: f64,
    tol_period: f64,
    out: *mut *mut FluxisoFamily,
) -> FluxisoStatus {
    guard(|| {
        let u = get(u, "u")?;
        let opts = options(n_t, tol_flux, tol_period)?;
        let fam = isotopy::flux_to_zero(&u.0, &opts).map_err(lib)?;
        put(out, "out", Box::into_raw(Box::new(FluxisoFamily(fam))))
    })
}

/// Isotopy to prescribed fluxes; `targets` holds 3 doubles per generator.
///
/// # Safety
/// `targets` must point to `3 * n_targets` doubles.
#[no_mangle]
pub unsafe extern "C" fn fluxiso_prescribe_flux(
    u: *const FluxisoImmersion,
    targets: *const f64,
    n_targets: usize,
    n_t: usize,
    tol_flux: f64,
    tol_period: f64,
    out: *mut *mut FluxisoFamily,
) -> FluxisoStatus {
    guard(|| {
        let u = get(u, "u")?;
        if targets.is_null() {
            return Err(null("targets"));
        }
        if n_targets != u.0.domain.holes.len() {
            return Err(invalid(format!("expected {} targets, got {n_targets}", u.0.domain.holes.len())));
        }
        let raw = std::slice::from_raw_parts(targets, 3 * n_targets);
        let t: Vec<[f64; 3]> = raw.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        let opts = options(n_t, tol_flux, tol_period)?;
        let fam = isotopy::prescribe_flux(&u.0, &t, &opts).map_err(lib)?;
        put(out, "out", Box::into_raw(Box::new(FluxisoFamily(fam))))
    })
}

/// # Safety
/// `f` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fluxiso_family_free(f: *mut FluxisoFamily) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Number of t-samples.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fluxiso_family_len(f: *const FluxisoFamily, out: *mut usize) -> FluxisoStatus {
    guard(|| {
        let f = get(f, "family")?;
        put(out, "out", f.0.n_t())
    })
}

/// Time and flux on generator `j` of member `k`; flux goes to `flux[0..3]`.
///
/// # Safety
/// `flux` must point to three doubles.
#[no_mangle]
pub unsafe extern "C" fn fluxiso_family_flux(f: *const FluxisoFamily, k: usize, j: usize, t: *mut f64, flux: *mut f64) -> FluxisoStatus {
    guard(|| {
        let f = get(f, "family")?;
        let row = f.0.flux_trace.get(k).ok_or_else(|| invalid(format!("member {k} out of range")))?;
        let v = row.get(j).ok_or_else(|| invalid(format!("generator {j} out of range")))?;
        put(t, "t", f.0.members[k].t)?;
        if flux.is_null() {
            return Err(null("flux"));
        }
        std::ptr::copy_nonoverlapping(v.as_ptr(), flux, 3);
        Ok(())
    })
}

/// Member `k` as a standalone immersion.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fluxiso_family_member(f: *const FluxisoFamily, k: usize, out: *mut *mut FluxisoImmersion) -> FluxisoStatus {
    guard(|| {
        let f = get(f, "family")?;
        if k >= f.0.n_t() {
            return Err(invalid(format!("member {k} out of range")));
        }
        put(out, "out", Box::into_raw(Box::new(FluxisoImmersion(f.0.immersion(k)))))
    })
}

/// Recomputes every residual at doubled resolution. Returns
/// `VerificationFailed` when a check fails; `report`, when not null,
/// receives the text report (free it with `fluxiso_string_free`).
///
/// # Safety
/// Pointers must be valid or null where allowed.
#[no_mangle]
pub unsafe extern "C" fn fluxiso_family_verify(f: *const FluxisoFamily, tol_flux: f64, tol_period: f64, report: *mut *mut c_char) -> FluxisoStatus {
    guard(|| {
        let f = get(f, "family")?;
        let opts = options(f.0.n_t().max(2), tol_flux, tol_period)?;
        let r = isotopy::verify(&f.0, &opts).map_err(lib)?;
        let text = r.to_text();
        if !report.is_null() {
            report.write(CString::new(text.clone()).unwrap_or_default().into_raw());
        }
        if r.passed() {
            Ok(())
        } else {
            Err((FluxisoStatus::VerificationFailed, text))
        }
    })
}

/// Z_2 class (0 or 1) of every generator; writes at most `cap` entries to
/// `classes` and the generator count to `count`.
///
/// # Safety
/// `classes` must point to `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn fluxiso_classify(u: *const FluxisoImmersion, seed: u64, classes: *mut u8, cap: usize, count: *mut usize) -> FluxisoStatus {
    guard(|| {
        let u = get(u, "u")?;
        let c = isotopy::classify(&u.0, seed).map_err(lib)?;
        put(count, "count", c.classes.len())?;
        if cap > 0 && classes.is_null() {
            return Err(null("classes"));
        }
        for (i, z) in c.classes.iter().take(cap).enumerate() {
            classes.add(i).write(z.0);
        }
        Ok(())
    })
}

/// Runs a configuration file as the `run` verb does and stores the
/// command-line exit code (0, 1 or 2) in `exit_code`.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fluxiso_run_config(path: *const c_char, exit_code: *mut i32) -> FluxisoStatus {
    guard(|| {
        let p = cstr(path, "path")?;
        if !Path::new(p).exists() {
            return Err((FluxisoStatus::ConfigError, format!("{p}: no such file")));
        }
        let code = fluxiso::cli::main(["fluxiso", "run", "--config", p]);
        put(exit_code, "exit_code", code)
    })
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fluxiso_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
