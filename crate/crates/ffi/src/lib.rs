//! C ABI over `sdde_lift`.
//!
//! Handles are opaque and owned by the caller once returned; release them with
//! the matching `*_free`. Every fallible call returns an [`SddeStatus`] and, on
//! failure, stores a message readable through [`sdde_last_error`] on the same
//! thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DVector;
use sdde_lift::config::{Config, Problem};
use sdde_lift::operators::{weak_b_certificate, OperatorPack};
use sdde_lift::rng::{sample_brownian, BrownianPath};
use sdde_lift::sim::{simulate_sdde, ControlPath};
use sdde_lift::value::{evaluate_policy, EvalOptions, FeedbackPolicy, Route, Start};
use sdde_lift::Error;

/// Result codes. Library errors are grouped by the module that owns the
/// violated invariant.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SddeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Model = 10,
    Simulation = 11,
    Lift = 12,
    Operators = 13,
    Hamiltonian = 14,
    Value = 15,
    Config = 16,
    Panic = 99,
}

/// Simulation route for policy evaluation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SddeRoute {
    Sdde = 0,
    Lift = 1,
}

/// Model, cost and initial history built from a configuration.
pub struct SddeProblem {
    inner: Problem,
}

/// Discretized operators of a problem at a fixed shift.
pub struct SddeOperatorPack {
    inner: OperatorPack,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SddeStatus {
    match e.module() {
        "model" => SddeStatus::Model,
        "sdde_sim" => SddeStatus::Simulation,
        "lift" => SddeStatus::Lift,
        "operators" => SddeStatus::Operators,
        "hamiltonian" => SddeStatus::Hamiltonian,
        "value" => SddeStatus::Value,
        _ => SddeStatus::Config,
    }
}

struct Fail(SddeStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SddeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SddeStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside sdde_lift".into());
            SddeStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail(SddeStatus::NullPointer, format!("{what} is null")))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(SddeStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SddeStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(SddeStatus::NullPointer, format!("{what} is null")));
    }
    out.write(v);
    Ok(())
}

unsafe fn copy_to(src: &[f64], out: *mut f64, cap: usize, written: *mut usize) -> Result<(), Fail> {
    if !written.is_null() {
        written.write(src.len());
    }
    if src.len() > cap {
        return Err(Fail(
            SddeStatus::BufferTooSmall,
            format!("need {} values, buffer holds {cap}", src.len()),
        ));
    }
    if out.is_null() && !src.is_empty() {
        return Err(Fail(SddeStatus::NullPointer, "output buffer is null".into()));
    }
    if !src.is_empty() {
        ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sdde_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sdde_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn build(cfg: Config, k: usize) -> Result<*mut SddeProblem, Fail> {
    let k = if k == 0 { cfg.grid.k } else { k };
    let inner = cfg.build(k)?;
    Ok(Box::into_raw(Box::new(SddeProblem { inner })))
}

/// Builds a problem from TOML text. `k = 0` keeps the grid of the file.
///
/// # Safety
/// `toml` must be a valid NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sdde_problem_from_toml(
    toml: *const c_char,
    k: usize,
    out: *mut *mut SddeProblem,
) -> SddeStatus {
    guard(|| {
        let cfg = Config::from_toml(text(toml, "toml")?)?;
        write_out(out, build(cfg, k)?, "out")
    })
}

/// Builds a problem from a built-in template (`advertising`, `time-to-build`, `zero`).
///
/// # Safety
/// `name` must be a valid NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sdde_problem_from_template(
    name: *const c_char,
    k: usize,
    out: *mut *mut SddeProblem,
) -> SddeStatus {
    guard(|| {
        let cfg = Config::template(text(name, "name")?)?;
        write_out(out, build(cfg, k)?, "out")
    })
}

/// # Safety
/// `p` must come from `sdde_problem_from_*` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sdde_problem_free(p: *mut SddeProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// State dimension `n`, grid subintervals `K` and number of lattice controls.
///
/// # Safety
/// `p` must be a live problem handle; outputs may be null to skip them.
#[no_mangle]
pub unsafe extern "C" fn sdde_problem_shape(
    p: *const SddeProblem,
    n: *mut usize,
    k: *mut usize,
    controls: *mut usize,
) -> SddeStatus {
    guard(|| {
        let m = &borrow(p, "problem")?.inner.model;
        for (ptr, v) in [(n, m.n()), (k, m.grid.k()), (controls, m.controls.len())] {
            if !ptr.is_null() {
                ptr.write(v);
            }
        }
        Ok(())
    })
}

/// One Euler-Maruyama path under a constant lattice control. Writes
/// `n * (steps + 1)` values of `y`, step-major, and reports the count in
/// `written` even when the buffer is too small.
///
/// # Safety
/// `p` must be a live handle; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn sdde_simulate_path(
    p: *const SddeProblem,
    control_index: usize,
    horizon: f64,
    seed: u64,
    path_index: u64,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> SddeStatus {
    guard(|| {
        let pr = &borrow(p, "problem")?.inner;
        let m = &pr.model;
        if control_index >= m.controls.len() {
            return Err(Error::ControlOutOfSet { index: control_index }.into());
        }
        let steps = m
            .grid
            .steps_of(horizon)
            .filter(|s| *s > 0)
            .ok_or(Error::HorizonNotAligned { horizon, dt: m.grid.h() })?;
        let noise = if m.is_deterministic() {
            BrownianPath::zero(m.grid.h(), steps, m.q())
        } else {
            sample_brownian(seed, path_index, m.grid.h(), horizon, m.q())?
        };
        let control = ControlPath::constant(m.controls.point(control_index), steps);
        let tr = simulate_sdde(m, &pr.history, &control, &noise, horizon)?;
        let ys: Vec<f64> = (0..=steps).flat_map(|k| tr.y(k).to_vec()).collect();
        copy_to(&ys, out, cap, written)
    })
}

/// Monte Carlo value of a constant lattice control from the problem's history.
///
/// # Safety
/// `p` must be a live handle; `mean` and `std_error` writable.
#[no_mangle]
pub unsafe extern "C" fn sdde_evaluate_constant_policy(
    p: *const SddeProblem,
    control_index: usize,
    horizon: f64,
    paths: usize,
    seed: u64,
    route: SddeRoute,
    mean: *mut f64,
    std_error: *mut f64,
) -> SddeStatus {
    guard(|| {
        let pr = &borrow(p, "problem")?.inner;
        let opts = EvalOptions {
            horizon,
            paths,
            seed,
            route: match route {
                SddeRoute::Sdde => Route::Sdde,
                SddeRoute::Lift => Route::Lift,
            },
        };
        let est = evaluate_policy(
            &pr.model,
            &pr.cost,
            &Start::History(pr.history.clone()),
            &FeedbackPolicy::Constant { index: control_index },
            &opts,
        )?;
        write_out(mean, est.mean, "mean")?;
        write_out(std_error, est.std_error, "std_error")
    })
}

/// Operator pack at shift `mu`; pass NaN for the default `mu0 + 1`.
///
/// # Safety
/// `p` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sdde_pack_new(
    p: *const SddeProblem,
    mu: f64,
    out: *mut *mut SddeOperatorPack,
) -> SddeStatus {
    guard(|| {
        let pr = &borrow(p, "problem")?.inner;
        let mu = if mu.is_nan() { None } else { Some(mu) };
        let inner = OperatorPack::new(&pr.model, mu)?;
        write_out(out, Box::into_raw(Box::new(SddeOperatorPack { inner })), "out")
    })
}

/// # Safety
/// `pack` must come from `sdde_pack_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sdde_pack_free(pack: *mut SddeOperatorPack) {
    if !pack.is_null() {
        drop(Box::from_raw(pack));
    }
}

/// Grid dimension `n (K + 1)` and the shifts `mu0`, `mu`.
///
/// # Safety
/// `pack` must be live; outputs may be null to skip them.
#[no_mangle]
pub unsafe extern "C" fn sdde_pack_info(
    pack: *const SddeOperatorPack,
    dim: *mut usize,
    mu0: *mut f64,
    mu: *mut f64,
) -> SddeStatus {
    guard(|| {
        let pk = &borrow(pack, "pack")?.inner;
        if !dim.is_null() {
            dim.write(pk.dim());
        }
        if !mu0.is_null() {
            mu0.write(pk.mu0);
        }
        if !mu.is_null() {
            mu.write(pk.mu);
        }
        Ok(())
    })
}

/// Eigenvalues of `B`, decreasing.
///
/// # Safety
/// `pack` must be live; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn sdde_pack_eigenvalues(
    pack: *const SddeOperatorPack,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> SddeStatus {
    guard(|| {
        let pk = &borrow(pack, "pack")?.inner;
        copy_to(pk.eigenvalues.as_slice(), out, cap, written)
    })
}

/// `|x|_{-1}` of a grid state given as `n (K + 1)` values: `x0` then the
/// interior nodes of `x1`, the layout of the pack's vector space.
///
/// # Safety
/// `pack` must be live; `x` must hold `len` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sdde_pack_minus_one_norm(
    pack: *const SddeOperatorPack,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> SddeStatus {
    guard(|| {
        let pk = &borrow(pack, "pack")?.inner;
        if len != pk.dim() {
            return Err(Fail(
                SddeStatus::InvalidArgument,
                format!("state has {len} values, pack dimension is {}", pk.dim()),
            ));
        }
        if x.is_null() {
            return Err(Fail(SddeStatus::NullPointer, "x is null".into()));
        }
        let v = DVector::from_column_slice(std::slice::from_raw_parts(x, len));
        write_out(out, pk.minus_one_norm(&pk.from_vec(&v)), "out")
    })
}

/// Sampled weak-B certificate; `pass` is 1 when every item holds.
///
/// # Safety
/// `pack` must be live; `pass` and `iv_sup` writable.
#[no_mangle]
pub unsafe extern "C" fn sdde_pack_weak_b_certificate(
    pack: *const SddeOperatorPack,
    samples: usize,
    seed: u64,
    iv_tol: f64,
    pass: *mut i32,
    iv_sup: *mut f64,
) -> SddeStatus {
    guard(|| {
        let pk = &borrow(pack, "pack")?.inner;
        if samples == 0 {
            return Err(Fail(SddeStatus::InvalidArgument, "samples must be positive".into()));
        }
        let r = weak_b_certificate(pk, samples, seed, iv_tol);
        write_out(pass, r.pass as i32, "pass")?;
        write_out(iv_sup, r.iv_sup, "iv_sup")
    })
}
