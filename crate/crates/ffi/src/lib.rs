//! C ABI over `elab-core`.
//!
//! Every function returns an [`ElabStatus`]. On failure the message is kept
//! per thread and can be read with [`elab_last_error_message`] until the next
//! failing call on the same thread. Sessions are opaque handles created by
//! [`elab_session_new`] and released with [`elab_session_free`]. Strings
//! returned through out-pointers belong to the caller and must be released
//! with [`elab_string_free`].
//!
//! # Safety
//!
//! Pointer arguments must be null or valid for the duration of the call;
//! null pointers are reported as [`ElabStatus::NullPointer`]. String
//! arguments must be NUL-terminated UTF-8.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use elab_core::data::DatasetName;
use elab_core::decoding::{nucleus_filter, StepDistribution};
use elab_core::experiment::{RunConfig, Session};
use elab_core::inference::cosine_similarity;
use elab_core::teacher::PromptTemplate;
use elab_core::trainer::RunOptions;
use elab_core::types::QAInstance;
use elab_core::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Bad configuration or argument value.
    Config = 3,
    /// Malformed data, template or record.
    Schema = 4,
    /// Training, teacher or I/O failure.
    Runtime = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

/// Opaque session handle.
pub struct ElabSession {
    inner: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(ElabStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_)
            | Error::Bounds { .. }
            | Error::UnknownToken(_)
            | Error::UndefinedSimilarity
            | Error::Dimension(..) => ElabStatus::Config,
            Error::Schema(_) | Error::Line { .. } | Error::Template(_) => ElabStatus::Schema,
            _ => ElabStatus::Runtime,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs were replaced");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ElabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ElabStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            ElabStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(ElabStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(ElabStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn read_strings(items: *const *const c_char, n: usize, what: &str) -> Result<Vec<String>, Failure> {
    if items.is_null() {
        return Err(null(what));
    }
    (0..n).map(|i| read_str(*items.add(i), what).map(str::to_string)).collect()
}

unsafe fn session<'a>(s: *mut ElabSession) -> Result<&'a mut Session, Failure> {
    s.as_mut().map(|s| &mut s.inner).ok_or_else(|| null("session"))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn owned_c_string(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("interior NULs were replaced").into_raw()
}

/// Message of the last failed call on this thread, or null. Valid until the next failure.
#[no_mangle]
pub extern "C" fn elab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn elab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn elab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a session from TOML config text.
///
/// With `persist` the teacher cache lives on disk under the configured output
/// directory; otherwise it is kept in memory.
#[no_mangle]
pub unsafe extern "C" fn elab_session_new(config_toml: *const c_char, persist: bool, out: *mut *mut ElabSession) -> ElabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = RunConfig::from_toml(read_str(config_toml, "config_toml")?)?;
        config.validate()?;
        let inner = if persist { Session::new(config)? } else { Session::in_memory(config)? };
        out.write(Box::into_raw(Box::new(ElabSession { inner })));
        Ok(())
    })
}

/// Destroys a session. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn elab_session_free(s: *mut ElabSession) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Trains from scratch. With `write_outputs` metrics and checkpoints go to the
/// configured output directory. `out_dev_accuracy` may be null; it receives NaN
/// when no dev accuracy was measured.
#[no_mangle]
pub unsafe extern "C" fn elab_session_train(s: *mut ElabSession, write_outputs: bool, out_dev_accuracy: *mut f64) -> ElabStatus {
    guard(|| {
        let session = session(s)?;
        let opts = RunOptions {
            output_dir: write_outputs.then(|| session.config().output_dir.clone()),
            ..RunOptions::default()
        };
        let outcome = session.train(&opts)?;
        if !out_dev_accuracy.is_null() {
            out_dev_accuracy.write(outcome.dev_accuracy.unwrap_or(f64::NAN));
        }
        Ok(())
    })
}

/// Replaces the session's models with a saved checkpoint.
#[no_mangle]
pub unsafe extern "C" fn elab_session_load_checkpoint(s: *mut ElabSession, path: *const c_char) -> ElabStatus {
    guard(|| {
        let session = session(s)?;
        let path = PathBuf::from(read_str(path, "path")?);
        session.load_checkpoint(path)?;
        Ok(())
    })
}

/// Dev-set accuracy under the configured integration strategy.
#[no_mangle]
pub unsafe extern "C" fn elab_session_evaluate(s: *mut ElabSession, out_accuracy: *mut f64) -> ElabStatus {
    guard(|| {
        let session = session(s)?;
        let report = session.evaluate(None)?;
        write(out_accuracy, report.accuracy, "out_accuracy")
    })
}

/// Answers one question. `out_elaboration` may be null; otherwise it receives
/// the elaboration behind the answer, or null when the strategy has none.
#[no_mangle]
pub unsafe extern "C" fn elab_session_predict(
    s: *mut ElabSession,
    question: *const c_char,
    candidates: *const *const c_char,
    n_candidates: usize,
    seed: u64,
    out_index: *mut usize,
    out_elaboration: *mut *mut c_char,
) -> ElabStatus {
    guard(|| {
        let session = session(s)?;
        let q = QAInstance::new("ffi", read_str(question, "question")?, read_strings(candidates, n_candidates, "candidates")?, None)?;
        let (prediction, elaborations) = session.predict(&q, seed)?;
        write(out_index, prediction.index, "out_index")?;
        if !out_elaboration.is_null() {
            let text = prediction.chosen.and_then(|i| elaborations.get(i)).map(|e| owned_c_string(e.text()));
            out_elaboration.write(text.unwrap_or(ptr::null_mut()));
        }
        Ok(())
    })
}

/// Writes the top-p filtered, renormalized distribution over `n` tokens into `out`.
///
/// `probs` must be non-negative with a positive sum; it is normalized first.
#[no_mangle]
pub unsafe extern "C" fn elab_nucleus_filter(probs: *const f64, n: usize, p: f64, out: *mut f64) -> ElabStatus {
    guard(|| {
        if probs.is_null() {
            return Err(null("probs"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        if n == 0 {
            return Err(Failure(ElabStatus::Config, "distribution is empty".into()));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Failure(ElabStatus::Config, format!("p must lie in (0, 1], got {p}")));
        }
        let raw = std::slice::from_raw_parts(probs, n);
        if raw.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Failure(ElabStatus::Config, "probabilities must be finite and non-negative".into()));
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Failure(ElabStatus::Config, "probabilities sum to zero".into()));
        }
        let dist = StepDistribution::from_probs(raw.iter().map(|x| x / total).collect());
        let dense = nucleus_filter(&dist, p).dense(n);
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&dense);
        Ok(())
    })
}

/// Cosine similarity of two vectors of length `n`.
#[no_mangle]
pub unsafe extern "C" fn elab_cosine_similarity(u: *const f64, v: *const f64, n: usize, out: *mut f64) -> ElabStatus {
    guard(|| {
        if u.is_null() || v.is_null() {
            return Err(null("vector"));
        }
        let sim = cosine_similarity(std::slice::from_raw_parts(u, n), std::slice::from_raw_parts(v, n))?;
        write(out, sim, "out")
    })
}

/// Renders the built-in few-shot teacher prompt of `dataset` (csqa, csqa2,
/// qasc, obqa or synthetic) for one question.
#[no_mangle]
pub unsafe extern "C" fn elab_render_prompt(
    dataset: *const c_char,
    question: *const c_char,
    candidates: *const *const c_char,
    n_candidates: usize,
    out: *mut *mut c_char,
) -> ElabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let name: DatasetName = read_str(dataset, "dataset")?.parse()?;
        let q = QAInstance::new("ffi", read_str(question, "question")?, read_strings(candidates, n_candidates, "candidates")?, None)?;
        let text = PromptTemplate::builtin(name).render(&q)?;
        out.write(owned_c_string(&text));
        Ok(())
    })
}
