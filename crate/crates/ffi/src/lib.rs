//! C ABI over `cfmorph`.
//!
//! Every object crosses the boundary as an opaque handle created by a
//! `cfm_*_new` / `cfm_*_read` function and released with the matching
//! `cfm_*_free`. Fallible functions return a [`CfmStatus`]; on failure the
//! message is available from [`cfm_last_error_message`] on the same thread.
//! Panics are caught and reported as [`CfmStatus::Panic`].
//!
//! The header `include/cfmorph.h` is generated by the build script.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cfmorph::attack::{run_attack, AttackConfig, AttackTrace, LrSchedule};
use cfmorph::classifier::{read_model, Classifier, Ensemble};
use cfmorph::ffd::{write_lattice, FfdLattice};
use cfmorph::regularize::{bending, RegWeights};
use cfmorph::volume::{read_volume, write_volume, Label, Volume};
use cfmorph::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Format = 3,
    Config = 4,
    NonFinite = 5,
    Io = 6,
    Panic = 7,
}

/// A dense occupancy volume.
pub struct CfmVolume(Volume);

/// One trained classifier.
pub struct CfmClassifier(Classifier);

/// A frozen classifier ensemble.
pub struct CfmEnsemble(Ensemble);

/// Counterfactual volume, lattice and trace of one attack.
pub struct CfmAttackResult {
    volume: Volume,
    lattice: FfdLattice,
    trace: AttackTrace,
}

/// Attack settings. Fill with [`cfm_attack_params_default`] and then adjust.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CfmAttackParams {
    /// 0 = male, 1 = female.
    pub target: u8,
    pub steps: usize,
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub lambda_smooth: f64,
    pub lambda_bend: f64,
    /// Lattice cells per axis; 0 picks the default for the input size.
    pub cells: usize,
    pub freeze_posterior: bool,
    /// Cosine annealing when true, constant rate otherwise.
    pub cosine: bool,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> CfmStatus {
    match err {
        Error::InvalidInput(_) => CfmStatus::InvalidInput,
        Error::Format { .. } | Error::Json(_) => CfmStatus::Format,
        Error::Config(_) => CfmStatus::Config,
        Error::NonFinite { .. } => CfmStatus::NonFinite,
        Error::Io { .. } => CfmStatus::Io,
    }
}

struct Fail(CfmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CfmStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CfmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CfmStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            CfmStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CfmStatus::InvalidInput, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null if the last call
/// succeeded. Valid until the next `cfm_*` call on this thread.
#[no_mangle]
pub extern "C" fn cfm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cfm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// Volumes

/// Copies `len` voxels (x fastest) into a new volume.
///
/// # Safety
/// `dims` must point to 3 values, `data` to `len` values, `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn cfm_volume_new(
    dims: *const usize,
    data: *const f64,
    len: usize,
    out: *mut *mut CfmVolume,
) -> CfmStatus {
    guard(|| {
        if dims.is_null() {
            return Err(null("dims"));
        }
        if data.is_null() && len > 0 {
            return Err(null("data"));
        }
        let d = std::slice::from_raw_parts(dims, 3);
        let values = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(data, len).to_vec()
        };
        let v = Volume::new([d[0], d[1], d[2]], values)?;
        put(out, CfmVolume(v))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cfm_volume_read(path: *const c_char, out: *mut *mut CfmVolume) -> CfmStatus {
    guard(|| {
        let v = read_volume(path_arg(path)?)?;
        put(out, CfmVolume(v))
    })
}

/// # Safety
/// `v` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cfm_volume_write(v: *const CfmVolume, path: *const c_char) -> CfmStatus {
    guard(|| {
        let v = borrow(v, "volume")?;
        write_volume(&v.0, path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `v` must be a live handle and `out` must point to 3 writable values.
#[no_mangle]
pub unsafe extern "C" fn cfm_volume_dims(v: *const CfmVolume, out: *mut usize) -> CfmStatus {
    guard(|| {
        let v = borrow(v, "volume")?;
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&v.0.dims());
        Ok(())
    })
}

/// Copies the voxels into `out`, which must hold exactly the voxel count.
///
/// # Safety
/// `v` must be a live handle and `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn cfm_volume_copy_data(v: *const CfmVolume, out: *mut f64, len: usize) -> CfmStatus {
    guard(|| {
        let v = borrow(v, "volume")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if len != v.0.len() {
            return Err(Fail(
                CfmStatus::InvalidInput,
                format!("buffer holds {len} values, volume has {}", v.0.len()),
            ));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(v.0.data());
        Ok(())
    })
}

/// # Safety
/// `v` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cfm_volume_free(v: *mut CfmVolume) {
    free(v)
}

// Classifiers and ensembles

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cfm_classifier_read(path: *const c_char, out: *mut *mut CfmClassifier) -> CfmStatus {
    guard(|| {
        let m = read_model(path_arg(path)?)?;
        put(out, CfmClassifier(m))
    })
}

/// # Safety
/// `m` and `v` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cfm_classifier_logit(
    m: *const CfmClassifier,
    v: *const CfmVolume,
    out: *mut f64,
) -> CfmStatus {
    guard(|| {
        let (m, v) = (borrow(m, "classifier")?, borrow(v, "volume")?);
        if out.is_null() {
            return Err(null("out"));
        }
        *out = m.0.forward(&v.0)?;
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cfm_classifier_free(m: *mut CfmClassifier) {
    free(m)
}

/// Builds an ensemble from copies of `count` classifiers. With `flip` each
/// member also scores the mirrored input.
///
/// # Safety
/// `members` must point to `count` live classifier handles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn cfm_ensemble_new(
    members: *const *const CfmClassifier,
    count: usize,
    flip: bool,
    out: *mut *mut CfmEnsemble,
) -> CfmStatus {
    guard(|| {
        if members.is_null() {
            return Err(null("members"));
        }
        let list = std::slice::from_raw_parts(members, count)
            .iter()
            .map(|&m| borrow(m, "member").map(|m| m.0.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        put(out, CfmEnsemble(Ensemble::new(list, flip)?))
    })
}

/// Number of logits the ensemble produces per volume.
///
/// # Safety
/// `e` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cfm_ensemble_logit_count(e: *const CfmEnsemble, out: *mut usize) -> CfmStatus {
    guard(|| {
        let e = borrow(e, "ensemble")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = e.0.logit_count();
        Ok(())
    })
}

/// Writes the ensemble logits; `len` must equal the logit count.
///
/// # Safety
/// `e` and `v` must be live handles and `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn cfm_ensemble_logits(
    e: *const CfmEnsemble,
    v: *const CfmVolume,
    out: *mut f64,
    len: usize,
) -> CfmStatus {
    guard(|| {
        let (e, v) = (borrow(e, "ensemble")?, borrow(v, "volume")?);
        if out.is_null() {
            return Err(null("out"));
        }
        if len != e.0.logit_count() {
            return Err(Fail(
                CfmStatus::InvalidInput,
                format!("buffer holds {len} values, ensemble yields {}", e.0.logit_count()),
            ));
        }
        let logits = e.0.logits(&v.0)?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&logits);
        Ok(())
    })
}

/// # Safety
/// `e` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cfm_ensemble_free(e: *mut CfmEnsemble) {
    free(e)
}

// Attack

/// Default settings for an attack towards `target` (0 = male, 1 = female).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cfm_attack_params_default(target: u8, out: *mut CfmAttackParams) -> CfmStatus {
    guard(|| {
        let label = Label::from_u8(target)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let c = AttackConfig::new(label);
        *out = CfmAttackParams {
            target,
            steps: c.steps,
            lr: c.lr,
            gamma: c.gamma,
            tau: c.tau,
            lambda_smooth: c.weights.smooth,
            lambda_bend: c.weights.bend,
            cells: 0,
            freeze_posterior: c.freeze_posterior,
            cosine: c.schedule == LrSchedule::Cosine,
            seed: c.seed,
        };
        Ok(())
    })
}

fn attack_config(p: &CfmAttackParams) -> Result<AttackConfig, Fail> {
    let mut c = AttackConfig::new(Label::from_u8(p.target)?);
    c.steps = p.steps;
    c.lr = p.lr;
    c.gamma = p.gamma;
    c.tau = p.tau;
    c.weights = RegWeights::new(p.lambda_smooth, p.lambda_bend)?;
    c.cells = (p.cells > 0).then_some([p.cells; 3]);
    c.freeze_posterior = p.freeze_posterior;
    c.schedule = if p.cosine {
        LrSchedule::Cosine
    } else {
        LrSchedule::Constant
    };
    c.seed = p.seed;
    Ok(c)
}

/// Runs the attack. `params` may be null for the defaults towards female.
///
/// # Safety
/// `v` and `e` must be live handles, `params` null or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cfm_attack_run(
    v: *const CfmVolume,
    e: *const CfmEnsemble,
    params: *const CfmAttackParams,
    out: *mut *mut CfmAttackResult,
) -> CfmStatus {
    guard(|| {
        let (v, e) = (borrow(v, "volume")?, borrow(e, "ensemble")?);
        let cfg = match params.as_ref() {
            Some(p) => attack_config(p)?,
            None => AttackConfig::new(Label::Female),
        };
        let (volume, lattice, trace) = run_attack(&v.0, &e.0, &cfg)?;
        put(out, CfmAttackResult { volume, lattice, trace })
    })
}

/// A new volume handle holding the counterfactual.
///
/// # Safety
/// `r` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cfm_attack_result_volume(r: *const CfmAttackResult, out: *mut *mut CfmVolume) -> CfmStatus {
    guard(|| {
        let r = borrow(r, "attack result")?;
        put(out, CfmVolume(r.volume.clone()))
    })
}

/// Number of trace entries (steps + 1).
///
/// # Safety
/// `r` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cfm_attack_result_trace_len(r: *const CfmAttackResult, out: *mut usize) -> CfmStatus {
    guard(|| {
        let r = borrow(r, "attack result")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = r.trace.len();
        Ok(())
    })
}

/// Total loss recorded at `step`.
///
/// # Safety
/// `r` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cfm_attack_result_total_loss(
    r: *const CfmAttackResult,
    step: usize,
    out: *mut f64,
) -> CfmStatus {
    guard(|| {
        let r = borrow(r, "attack result")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let rec = r.trace.records.get(step).ok_or_else(|| {
            Fail(
                CfmStatus::InvalidInput,
                format!("step {step} out of range for a trace of {}", r.trace.len()),
            )
        })?;
        *out = rec.total;
        Ok(())
    })
}

/// Bending energy of the final deformation.
///
/// # Safety
/// `r` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cfm_attack_result_bending(r: *const CfmAttackResult, out: *mut f64) -> CfmStatus {
    guard(|| {
        let r = borrow(r, "attack result")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = bending(&r.lattice).value;
        Ok(())
    })
}

/// # Safety
/// `r` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cfm_attack_result_write_lattice(r: *const CfmAttackResult, path: *const c_char) -> CfmStatus {
    guard(|| {
        let r = borrow(r, "attack result")?;
        write_lattice(&r.lattice, path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `r` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cfm_attack_result_write_trace(r: *const CfmAttackResult, path: *const c_char) -> CfmStatus {
    guard(|| {
        let r = borrow(r, "attack result")?;
        r.trace.write_csv(path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `r` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cfm_attack_result_free(r: *mut CfmAttackResult) {
    free(r)
}
