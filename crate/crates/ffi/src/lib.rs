//! C ABI over the `autopl` library.
//!
//! Every entry point returns an [`AutoplStatus`]. On failure the message is
//! kept per thread and read back with [`autopl_last_error_message`]. Objects
//! cross the boundary as opaque handles that the caller releases with the
//! matching `*_free` function. Panics never unwind into C; they surface as
//! [`AutoplStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use autopl::dsr::{self, PolicyKind, TrainerConfig};
use autopl::evalharness::{check_validity, ProbeRanges, VariableRoles, Verdict};
use autopl::expr::{ConstraintSet, ExpressionTree, Token};
use autopl::kan::{self, KanNetwork, KanTrainConfig};
use autopl::plmodels::{self, generate_synthetic, normalize_max, AbgParams, CiParams, Dataset, SyntheticSpec};
use autopl::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AutoplStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was malformed, e.g. a string that is not UTF-8.
    InvalidArgument = 2,
    /// Input data was rejected: domain, shape, I/O or parse failures.
    Data = 3,
    /// Training or constant fitting failed.
    Training = 4,
    /// A configuration value or expression was invalid.
    Config = 5,
    /// A bug inside the library; the message holds the panic text.
    Internal = 6,
}

/// Physical-validity verdict of an expression.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AutoplVerdict {
    Valid = 0,
    Invalid = 1,
    NotApplicable = 2,
}

/// Opaque dataset handle.
pub struct AutoplDataset(Dataset);

/// Opaque expression handle.
pub struct AutoplExpression(ExpressionTree);

/// Opaque KAN handle.
pub struct AutoplKan(KanNetwork);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> AutoplStatus {
    match e {
        Error::Config(_) | Error::Expression(_) => AutoplStatus::Config,
        Error::Unfittable | Error::DeadEnd(_) | Error::Training(_) => AutoplStatus::Training,
        _ => AutoplStatus::Data,
    }
}

struct Failure(AutoplStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

type FfiResult<T> = std::result::Result<T, Failure>;

fn null(what: &str) -> Failure {
    Failure(AutoplStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(AutoplStatus::InvalidArgument, msg.into())
}

/// Runs `f`, records any failure and converts panics into `Internal`.
fn guard<F: FnOnce() -> FfiResult<()>>(f: F) -> AutoplStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AutoplStatus::Ok
        }
        Ok(Err(Failure(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal error: {msg}"));
            AutoplStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Reads a row-major `n_rows` x `n_cols` matrix.
unsafe fn matrix_arg(p: *const f64, n_rows: usize, n_cols: usize) -> FfiResult<Vec<Vec<f64>>> {
    if n_rows == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err(null("rows"));
    }
    let len = n_rows.checked_mul(n_cols).ok_or_else(|| invalid("matrix size overflows"))?;
    let flat = std::slice::from_raw_parts(p, len);
    Ok(flat.chunks(n_cols.max(1)).take(n_rows).map(|r| r[..n_cols].to_vec()).collect())
}

unsafe fn write_values(out: *mut f64, values: &[f64]) -> FfiResult<()> {
    if values.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("out"));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn autopl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn autopl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Generates a synthetic dataset. `model` is "abg" or "ci".
///
/// # Safety
/// `model` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn autopl_dataset_synthetic(
    model: *const c_char,
    count: usize,
    seed: u64,
    out: *mut *mut AutoplDataset,
) -> AutoplStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let kind = str_arg(model, "model")?.parse()?;
        let ds = generate_synthetic(&SyntheticSpec::new(kind, count, seed))?;
        *out = boxed(AutoplDataset(ds));
        Ok(())
    })
}

/// Reads a dataset CSV with a `pl_db` target column.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn autopl_dataset_read_csv(path: *const c_char, out: *mut *mut AutoplDataset) -> AutoplStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ds = Dataset::read_csv(Path::new(str_arg(path, "path")?))?;
        *out = boxed(AutoplDataset(ds));
        Ok(())
    })
}

/// Writes a dataset CSV.
///
/// # Safety
/// `ds` must be a live handle and `path` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn autopl_dataset_write_csv(ds: *const AutoplDataset, path: *const c_char) -> AutoplStatus {
    guard(|| {
        let ds = ref_arg(ds, "dataset")?;
        ds.0.write_csv(Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn autopl_dataset_rows(ds: *const AutoplDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n_rows())
}

/// Number of feature columns, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn autopl_dataset_features(ds: *const AutoplDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n_features())
}

/// Copies the target column (`rows` values) into `out`.
///
/// # Safety
/// `out` must have room for `autopl_dataset_rows(ds)` values.
#[no_mangle]
pub unsafe extern "C" fn autopl_dataset_target(ds: *const AutoplDataset, out: *mut f64) -> AutoplStatus {
    guard(|| write_values(out, &ref_arg(ds, "dataset")?.0.target))
}

/// Copies the raw feature matrix, row-major, into `out`.
///
/// # Safety
/// `out` must have room for `rows * features` values.
#[no_mangle]
pub unsafe extern "C" fn autopl_dataset_matrix(ds: *const AutoplDataset, out: *mut f64) -> AutoplStatus {
    guard(|| {
        let flat: Vec<f64> = ref_arg(ds, "dataset")?.0.raw_rows().concat();
        write_values(out, &flat)
    })
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn autopl_dataset_free(ds: *mut AutoplDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Parses whitespace-separated pre-order tokens such as `add x0 const`.
/// `constants` fills the `const` placeholders and may be null when
/// `n_constants` is 0.
///
/// # Safety
/// `tokens` must be a valid C string, `constants` must point to
/// `n_constants` values and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn autopl_expression_parse(
    tokens: *const c_char,
    constants: *const f64,
    n_constants: usize,
    out: *mut *mut AutoplExpression,
) -> AutoplStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let toks = str_arg(tokens, "tokens")?.split_whitespace().map(Token::parse).collect::<Result<Vec<_>, _>>()?;
        let consts = if n_constants == 0 {
            Vec::new()
        } else if constants.is_null() {
            return Err(null("constants"));
        } else {
            std::slice::from_raw_parts(constants, n_constants).to_vec()
        };
        let tree =
            if consts.is_empty() { ExpressionTree::new(toks)? } else { ExpressionTree::with_constants(toks, consts)? };
        *out = boxed(AutoplExpression(tree));
        Ok(())
    })
}

/// Number of `const` placeholders, or 0 for a null handle.
///
/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn autopl_expression_placeholders(e: *const AutoplExpression) -> usize {
    e.as_ref().map_or(0, |e| e.0.n_placeholders())
}

/// Evaluates on a row-major matrix and writes `n_rows` predictions.
///
/// # Safety
/// `rows` must hold `n_rows * n_cols` values and `out` room for `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn autopl_expression_evaluate(
    e: *const AutoplExpression,
    rows: *const f64,
    n_rows: usize,
    n_cols: usize,
    out: *mut f64,
) -> AutoplStatus {
    guard(|| {
        let e = ref_arg(e, "expression")?;
        let x = matrix_arg(rows, n_rows, n_cols)?;
        write_values(out, &e.0.evaluate(&x)?)
    })
}

/// Writes the infix form into `buf` (NUL-terminated, truncated to fit) and
/// the full length without the NUL into `len`. Pass a null `buf` to query
/// the length.
///
/// # Safety
/// `buf` must be null or have room for `buf_len` bytes; `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn autopl_expression_infix(
    e: *const AutoplExpression,
    buf: *mut c_char,
    buf_len: usize,
    len: *mut usize,
) -> AutoplStatus {
    guard(|| {
        let e = ref_arg(e, "expression")?;
        let len = out_arg(len, "len")?;
        let s = e.0.to_infix();
        *len = s.len();
        if !buf.is_null() && buf_len > 0 {
            let n = s.len().min(buf_len - 1);
            ptr::copy_nonoverlapping(s.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        Ok(())
    })
}

/// # Safety
/// `e` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn autopl_expression_free(e: *mut AutoplExpression) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Runs the physical-validity check of `e` against the feature names and
/// ranges of `ds`.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn autopl_validity_check(
    e: *const AutoplExpression,
    ds: *const AutoplDataset,
    out: *mut AutoplVerdict,
) -> AutoplStatus {
    guard(|| {
        let e = ref_arg(e, "expression")?;
        let ds = ref_arg(ds, "dataset")?.0.denormalized();
        let out = out_arg(out, "out")?;
        let rep = check_validity(&e.0, &VariableRoles::from_names(&ds.feature_names), &ProbeRanges::from_dataset(&ds))?;
        *out = match rep.verdict {
            Verdict::Valid => AutoplVerdict::Valid,
            Verdict::Invalid => AutoplVerdict::Invalid,
            Verdict::NotApplicable => AutoplVerdict::NotApplicable,
        };
        Ok(())
    })
}

/// Trains a KAN on `ds`. `preset` is "abg", "ci", "indoor", "outdoor" or
/// null for defaults sized to the dataset. `steps` of 0 keeps the preset's.
/// Features are max-normalised first; predictions take raw inputs.
///
/// # Safety
/// `ds` must be live, `preset` null or a valid C string, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn autopl_kan_train(
    ds: *const AutoplDataset,
    preset: *const c_char,
    steps: usize,
    seed: u64,
    out: *mut *mut AutoplKan,
) -> AutoplStatus {
    guard(|| {
        let ds = &ref_arg(ds, "dataset")?.0;
        let out = out_arg(out, "out")?;
        let mut cfg = if preset.is_null() {
            let mut c = KanTrainConfig::default();
            c.shape[0] = ds.n_features();
            c
        } else {
            KanTrainConfig::preset(str_arg(preset, "preset")?)?
        };
        if steps > 0 {
            cfg.steps = steps;
        }
        cfg.seed = seed;
        let norm = match ds.norm {
            Some(_) => ds.clone(),
            None => normalize_max(ds)?,
        };
        let (net, _) = kan::fit_network(&norm, &cfg)?;
        *out = boxed(AutoplKan(net));
        Ok(())
    })
}

/// Loads a KAN checkpoint.
///
/// # Safety
/// `path` must be a valid C string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn autopl_kan_load(path: *const c_char, out: *mut *mut AutoplKan) -> AutoplStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let net = kan::load(Path::new(str_arg(path, "path")?))?;
        *out = boxed(AutoplKan(net));
        Ok(())
    })
}

/// Saves a KAN checkpoint.
///
/// # Safety
/// `k` must be live and `path` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn autopl_kan_save(k: *const AutoplKan, path: *const c_char) -> AutoplStatus {
    guard(|| {
        let k = ref_arg(k, "kan")?;
        kan::save(&k.0, Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Number of network inputs, or 0 for a null handle.
///
/// # Safety
/// `k` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn autopl_kan_inputs(k: *const AutoplKan) -> usize {
    k.as_ref().map_or(0, |k| k.0.n_inputs())
}

/// Predicts pathloss for raw (unnormalised) feature rows.
///
/// # Safety
/// `rows` must hold `n_rows * n_cols` values and `out` room for `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn autopl_kan_predict(
    k: *const AutoplKan,
    rows: *const f64,
    n_rows: usize,
    n_cols: usize,
    out: *mut f64,
) -> AutoplStatus {
    guard(|| {
        let k = ref_arg(k, "kan")?;
        let x = matrix_arg(rows, n_rows, n_cols)?;
        write_values(out, &k.0.forward_unnormalized(&x)?)
    })
}

/// # Safety
/// `k` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn autopl_kan_free(k: *mut AutoplKan) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// Runs deep symbolic regression on `ds`. `policy` is "rspg", "vpg" or
/// "pqt"; `samples` of 0 keeps the default budget, and a smaller budget
/// also caps the batch size. The best expression is
/// returned over raw inputs, with its reward in `reward`.
///
/// # Safety
/// `ds` must be live, `policy` a valid C string, `out` and `reward` valid.
#[no_mangle]
pub unsafe extern "C" fn autopl_dsr_train(
    ds: *const AutoplDataset,
    policy: *const c_char,
    samples: usize,
    seed: u64,
    out: *mut *mut AutoplExpression,
    reward: *mut f64,
) -> AutoplStatus {
    guard(|| {
        let ds = &ref_arg(ds, "dataset")?.0;
        let kind: PolicyKind = str_arg(policy, "policy")?.parse()?;
        let out = out_arg(out, "out")?;
        let reward = out_arg(reward, "reward")?;
        let mut cfg = TrainerConfig { policy_kind: kind, seed, ..Default::default() };
        if samples > 0 {
            cfg.sample_budget = samples;
            cfg.batch_size = cfg.batch_size.min(samples);
        }
        let norm = match ds.norm {
            Some(_) => ds.clone(),
            None => normalize_max(ds)?,
        };
        let result = dsr::train(&cfg, &norm, &ConstraintSet::default())?;
        let best = match &norm.norm {
            Some(m) => result.best.with_scaled_inputs(m),
            None => result.best,
        };
        *reward = result.best_reward;
        *out = boxed(AutoplExpression(best));
        Ok(())
    })
}

/// Free-space pathloss at 1 m, dB.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn autopl_fspl_1m(f_hz: f64, out: *mut f64) -> AutoplStatus {
    guard(|| {
        *out_arg(out, "out")? = plmodels::fspl_1m(f_hz)?;
        Ok(())
    })
}

/// Free-space pathloss with frequency in MHz and distance in km, dB.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn autopl_eval_fs(f_mhz: f64, d_km: f64, out: *mut f64) -> AutoplStatus {
    guard(|| {
        *out_arg(out, "out")? = plmodels::eval_fs(f_mhz, d_km)?;
        Ok(())
    })
}

/// Close-in model pathloss, dB.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn autopl_eval_ci(f_hz: f64, n: f64, d_m: f64, chi: f64, out: *mut f64) -> AutoplStatus {
    guard(|| {
        *out_arg(out, "out")? = plmodels::eval_ci(&CiParams { f_hz, n, d_m, chi })?;
        Ok(())
    })
}

/// Alpha-beta-gamma model pathloss, dB.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn autopl_eval_abg(
    alpha: f64,
    beta: f64,
    gamma: f64,
    f_ghz: f64,
    d_m: f64,
    chi: f64,
    out: *mut f64,
) -> AutoplStatus {
    guard(|| {
        *out_arg(out, "out")? = plmodels::eval_abg(&AbgParams { alpha, beta, gamma, f_ghz, d_m, chi })?;
        Ok(())
    })
}
