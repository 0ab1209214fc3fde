//! C ABI for fedscore.
//!
//! Covers what a non-Rust host typically needs: scoring with a saved
//! scorecard, AUC with its DeLong interval, a local logistic fit, and the
//! remote-site half of the one-shot protocol (turning a broadcast packet into
//! a reply without ever exposing rows).
//!
//! Conventions:
//!
//! * Every fallible function returns an [`FsStatus`] and writes results
//!   through out-pointers, which are left untouched on failure.
//! * After a failure, [`fs_last_error`] describes it. The message is
//!   per-thread and lives until the next failing call on that thread.
//! * Strings handed out by this library must be released with
//!   [`fs_string_free`], scorecards with [`fs_scorecard_free`].
//! * Matrices are dense and row-major.
//! * Panics never cross the boundary; they surface as [`FsStatus::Panic`].

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fedscore::eval::{auc, auc_ci};
use fedscore::glm::{fit_mle, Design, Matrix, NewtonOptions, Vector};
use fedscore::protocol::{remote_summarize, BroadcastPacket, EncodedSite};
use fedscore::scorecard::ScoreCard;
use fedscore::Error;

/// Result of every fallible call. Library error classes share their numbers
/// with the `fedscore` command's exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsStatus {
    Ok = 0,
    /// Invalid settings or arguments (for example a bad interval level).
    Config = 2,
    /// Malformed input data or an unknown category.
    Data = 3,
    /// Numerical or protocol failure: separation, non-convergence, a bad
    /// packet.
    Numerical = 4,
    /// File or JSON failure.
    Io = 5,
    /// A required pointer was null or a string was not UTF-8.
    InvalidArgument = 10,
    /// The library panicked; this is a bug.
    Panic = 11,
}

/// A scorecard owned by the library.
pub struct FsScoreCard(ScoreCard);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    let c = CString::new(text).expect("interior nul bytes were replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(FsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.exit_code() {
            2 => FsStatus::Config,
            3 => FsStatus::Data,
            4 => FsStatus::Numerical,
            _ => FsStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(FsStatus::InvalidArgument, msg.to_string())
}

type Outcome = std::result::Result<(), Failure>;

fn guard(f: impl FnOnce() -> Outcome) -> FsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            FsStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> std::result::Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(&format!("{what} is not valid UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> std::result::Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Outcome {
    if out.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    out.write(value);
    Ok(())
}

fn owned(s: String) -> std::result::Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(FsStatus::Io, "output contains a nul byte".into()))
}

unsafe fn design(
    x: *const f64,
    y: *const f64,
    n: usize,
    p: usize,
) -> std::result::Result<Design, Failure> {
    if n == 0 || p == 0 {
        return Err(invalid("n and p must be positive"));
    }
    let cells = n.checked_mul(p).ok_or_else(|| invalid("n * p overflows"))?;
    let x = slice(x, cells, "x")?;
    let y = slice(y, n, "y")?;
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Failure(FsStatus::Data, "y must be 0 or 1".into()));
    }
    Ok(Design {
        x: Matrix::from_row_slice(n, p, x),
        y: Vector::from_column_slice(y),
    })
}

/// Message for the most recent failure on this thread, or null. Owned by the
/// library; do not free.
#[no_mangle]
pub extern "C" fn fs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn fs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn fs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a scorecard from its JSON form (`card.json`).
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_scorecard_from_json(
    json: *const c_char,
    out: *mut *mut FsScoreCard,
) -> FsStatus {
    guard(|| {
        let card: ScoreCard = serde_json::from_str(text(json, "json")?)
            .map_err(|e| Failure(FsStatus::Io, format!("scorecard JSON: {e}")))?;
        put(out, Box::into_raw(Box::new(FsScoreCard(card))), "out")
    })
}

/// Parses a scorecard from its Markdown table (`card.md`).
///
/// # Safety
/// `markdown` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_scorecard_from_markdown(
    markdown: *const c_char,
    out: *mut *mut FsScoreCard,
) -> FsStatus {
    guard(|| {
        let card = ScoreCard::from_markdown(text(markdown, "markdown")?)?;
        put(out, Box::into_raw(Box::new(FsScoreCard(card))), "out")
    })
}

/// Releases a scorecard. Null is ignored.
///
/// # Safety
/// `card` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn fs_scorecard_free(card: *mut FsScoreCard) {
    if !card.is_null() {
        drop(Box::from_raw(card));
    }
}

/// Total points for one row given as a JSON object of variable name to
/// category label, e.g. `{"age":"[40,65)","triage":"P1"}`.
///
/// # Safety
/// `card` must be a live scorecard, `row_json` a nul-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_scorecard_score(
    card: *const FsScoreCard,
    row_json: *const c_char,
    out: *mut u32,
) -> FsStatus {
    guard(|| {
        let card = card.as_ref().ok_or_else(|| invalid("card is null"))?;
        let row: BTreeMap<String, String> = serde_json::from_str(text(row_json, "row_json")?)
            .map_err(|e| Failure(FsStatus::Data, format!("row JSON: {e}")))?;
        put(out, card.0.apply(&row)?, "out")
    })
}

/// Highest attainable total of the card.
///
/// # Safety
/// `card` must be a live scorecard and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_scorecard_max_total(
    card: *const FsScoreCard,
    out: *mut u32,
) -> FsStatus {
    guard(|| {
        let card = card.as_ref().ok_or_else(|| invalid("card is null"))?;
        put(out, card.0.max_total(), "out")
    })
}

/// Renders the card as a Markdown table. Free the result with
/// [`fs_string_free`].
///
/// # Safety
/// `card` must be a live scorecard and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_scorecard_to_markdown(
    card: *const FsScoreCard,
    out: *mut *mut c_char,
) -> FsStatus {
    guard(|| {
        let card = card.as_ref().ok_or_else(|| invalid("card is null"))?;
        put(out, owned(card.0.to_markdown())?, "out")
    })
}

/// Serializes the card to JSON. Free the result with [`fs_string_free`].
///
/// # Safety
/// `card` must be a live scorecard and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_scorecard_to_json(
    card: *const FsScoreCard,
    out: *mut *mut c_char,
) -> FsStatus {
    guard(|| {
        let card = card.as_ref().ok_or_else(|| invalid("card is null"))?;
        let json = serde_json::to_string_pretty(&card.0).map_err(Error::from)?;
        put(out, owned(json)?, "out")
    })
}

/// Area under the ROC curve; ties count one half.
///
/// # Safety
/// `scores` and `labels` must each point to `n` elements; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_auc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> FsStatus {
    guard(|| {
        let a = auc(slice(scores, n, "scores")?, slice(labels, n, "labels")?)?;
        put(out, a, "out")
    })
}

/// AUC with a DeLong interval at `level` (e.g. 0.95). Needs at least ten
/// rows.
///
/// # Safety
/// `scores` and `labels` must each point to `n` elements; the three outputs
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_auc_ci(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    level: f64,
    out_auc: *mut f64,
    out_low: *mut f64,
    out_high: *mut f64,
) -> FsStatus {
    guard(|| {
        if out_auc.is_null() || out_low.is_null() || out_high.is_null() {
            return Err(invalid("an output pointer is null"));
        }
        let ci = auc_ci(
            slice(scores, n, "scores")?,
            slice(labels, n, "labels")?,
            level,
        )?;
        put(out_auc, ci.auc, "out_auc")?;
        put(out_low, ci.low, "out_low")?;
        put(out_high, ci.high, "out_high")
    })
}

/// Maximum-likelihood logistic regression. `x` is `n × p` row-major and must
/// include the intercept column if one is wanted; `out_beta` receives `p`
/// coefficients.
///
/// # Safety
/// `x` must point to `n * p` elements, `y` to `n` and `out_beta` to `p`
/// writable elements.
#[no_mangle]
pub unsafe extern "C" fn fs_fit_mle(
    x: *const f64,
    y: *const f64,
    n: usize,
    p: usize,
    out_beta: *mut f64,
) -> FsStatus {
    guard(|| {
        let d = design(x, y, n, p)?;
        if out_beta.is_null() {
            return Err(invalid("out_beta is null"));
        }
        let fit = fit_mle(&d.x, &d.y, &NewtonOptions::default())?;
        std::slice::from_raw_parts_mut(out_beta, p).copy_from_slice(fit.beta.as_slice());
        Ok(())
    })
}

/// Remote-site step of the one-shot protocol: reads the lead's broadcast
/// packet and returns this site's reply (sample size, gradient and Hessian)
/// in wire format. `x` is this site's encoded design, `n × p` row-major with
/// `p` equal to the packet's coefficient count. Free the reply with
/// [`fs_string_free`].
///
/// # Safety
/// `packet` must be a nul-terminated string, `x` must point to `n * p`
/// elements, `y` to `n`, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_remote_summarize(
    packet: *const c_char,
    site_id: u32,
    x: *const f64,
    y: *const f64,
    n: usize,
    p: usize,
    out: *mut *mut c_char,
) -> FsStatus {
    guard(|| {
        let packet = BroadcastPacket::from_wire(text(packet, "packet")?)?;
        if p != packet.p() {
            return Err(Failure(
                FsStatus::Data,
                format!("design has {p} columns, packet expects {}", packet.p()),
            ));
        }
        let site = EncodedSite {
            site_id,
            encoding: packet.encoding.clone(),
            design: design(x, y, n, p)?,
        };
        let reply = remote_summarize(&packet, &site)?.to_wire()?;
        put(out, owned(reply)?, "out")
    })
}
