//! C interface to `matmix`.
//!
//! Every fallible function returns a `MatmixStatus`. On failure a message is
//! available from `matmix_last_error` until the next failing call on the same
//! thread. Stacks and models are opaque handles released with their `_free`
//! function.
//!
//! Matrices cross the boundary as row-major `double` arrays. A stack of `n`
//! samples of size `r`×`p` is `n·r·p` values with sample `i` starting at
//! offset `i·r·p`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use matmix::evalgen::{adjusted_rand_index, clustering_accuracy};
use matmix::matnorm::{matnorm_logpdf, ComponentParams, MatrixStack};
use matmix::mixture::{e_step, fit_em, FitConfig, MixtureModel, PenaltyKind, PenaltySpec};
use matmix::Error;
use nalgebra::DMatrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatmixStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotPositiveDefinite = 4,
    EmptyCluster = 5,
    NumericFailure = 6,
    Panic = 7,
}

/// Values accepted in `MatmixFitOptions::penalty`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatmixPenalty {
    None = 0,
    L1 = 1,
    L2 = 2,
    Nuclear = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatmixFitOptions {
    /// One of the `MatmixPenalty` values.
    pub penalty: i32,
    pub lambda: f64,
    pub max_iter: usize,
    pub n_starts: usize,
    pub seed: u64,
    /// Threshold on the summed change of the means; negative selects the default.
    pub mean_tol: f64,
}

/// A validated stack of equally sized matrices.
pub struct MatmixStack(MatrixStack);

/// A fitted mixture together with its fit summary.
pub struct MatmixModel {
    model: MixtureModel,
    labels: Vec<usize>,
    iterations: usize,
    converged: bool,
    objective: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(MatmixStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        let mut root = &e;
        while let Error::InComponent { source, .. } | Error::AtIteration { source, .. } = root {
            root = source;
        }
        let status = match root {
            Error::DimensionMismatch(_) | Error::LengthMismatch(..) => MatmixStatus::DimensionMismatch,
            Error::NotPositiveDefinite(_) => MatmixStatus::NotPositiveDefinite,
            Error::EmptyCluster { .. } => MatmixStatus::EmptyCluster,
            e if e.is_numeric() => MatmixStatus::NumericFailure,
            _ => MatmixStatus::InvalidArgument,
        };
        Failure(status, msg)
    }
}

fn null(what: &str) -> Failure {
    Failure(MatmixStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(MatmixStatus::InvalidArgument, msg.into())
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MatmixStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MatmixStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            MatmixStatus::Panic
        }
    }
}

/// # Safety
/// `data` must be null or point to `len` readable values.
unsafe fn input<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(data, len))
}

/// # Safety
/// `data` must be null or point to `len` writable values.
unsafe fn output<'a, T>(data: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(data, len))
}

fn product(dims: &[usize]) -> Result<usize, Failure> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(|| invalid("size overflows"))
}

fn write_row_major(m: &DMatrix<f64>, out: &mut [f64]) {
    for (dst, src) in out.chunks_exact_mut(m.ncols()).zip(m.row_iter()) {
        for (d, s) in dst.iter_mut().zip(src.iter()) {
            *d = *s;
        }
    }
}

fn penalty_kind(code: i32) -> Result<PenaltyKind, Failure> {
    Ok(match code {
        c if c == MatmixPenalty::None as i32 => PenaltyKind::None,
        c if c == MatmixPenalty::L1 as i32 => PenaltyKind::L1,
        c if c == MatmixPenalty::L2 as i32 => PenaltyKind::L2,
        c if c == MatmixPenalty::Nuclear as i32 => PenaltyKind::Nuclear,
        other => return Err(invalid(format!("unknown penalty code {other}"))),
    })
}

/// Message describing the most recent failure on this thread; empty if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn matmix_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Copy `n` row-major `r`×`p` samples into a new stack.
///
/// # Safety
/// `data` must point to `n·r·p` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn matmix_stack_new(
    data: *const f64,
    n: usize,
    r: usize,
    p: usize,
    out: *mut *mut MatmixStack,
) -> MatmixStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if n == 0 || r == 0 || p == 0 {
            return Err(invalid(format!("dimensions must be positive, got n={n} r={r} p={p}")));
        }
        let values = input(data, product(&[n, r, p])?, "data")?;
        let mats = values.chunks_exact(r * p).map(|c| DMatrix::from_row_slice(r, p, c)).collect();
        *out = Box::into_raw(Box::new(MatmixStack(MatrixStack::new(mats)?)));
        Ok(())
    })
}

/// # Safety
/// `stack` must be null or a handle from `matmix_stack_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn matmix_stack_free(stack: *mut MatmixStack) {
    if !stack.is_null() {
        drop(Box::from_raw(stack));
    }
}

/// # Safety
/// `stack` must be a live handle; each output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn matmix_stack_shape(
    stack: *const MatmixStack,
    n: *mut usize,
    r: *mut usize,
    p: *mut usize,
) -> MatmixStatus {
    guard(|| {
        let s = &stack.as_ref().ok_or_else(|| null("stack"))?.0;
        for (dst, v) in [(n, s.len()), (r, s.rows()), (p, s.cols())] {
            if !dst.is_null() {
                *dst = v;
            }
        }
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn matmix_fit_options_default() -> MatmixFitOptions {
    let d = FitConfig::default();
    MatmixFitOptions {
        penalty: MatmixPenalty::None as i32,
        lambda: 0.0,
        max_iter: d.max_iter,
        n_starts: d.n_starts,
        seed: d.seed,
        mean_tol: -1.0,
    }
}

/// Fit a `k`-component penalized mixture. A run that stops at `max_iter`
/// still succeeds; check `converged` in `matmix_model_summary`.
///
/// # Safety
/// `stack` must be a live handle, `options` null (defaults) or readable, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn matmix_fit(
    stack: *const MatmixStack,
    k: usize,
    options: *const MatmixFitOptions,
    out: *mut *mut MatmixModel,
) -> MatmixStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let s = &stack.as_ref().ok_or_else(|| null("stack"))?.0;
        let opts = options.as_ref().copied().unwrap_or_else(|| matmix_fit_options_default());
        let penalty = PenaltySpec::new(penalty_kind(opts.penalty)?, opts.lambda)?;
        let cfg = FitConfig {
            max_iter: opts.max_iter,
            n_starts: opts.n_starts,
            seed: opts.seed,
            mean_tol: (opts.mean_tol >= 0.0).then_some(opts.mean_tol),
            ..FitConfig::default()
        };
        let report = fit_em(s, k, &penalty, &cfg)?;
        let objective = report.final_objective();
        let model = MatmixModel {
            model: report.model,
            labels: report.hard_labels,
            iterations: report.iterations,
            converged: report.converged,
            objective,
        };
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from `matmix_fit` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn matmix_model_free(model: *mut MatmixModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of components, rows and columns of a fitted model.
///
/// # Safety
/// `model` must be a live handle; each output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn matmix_model_shape(
    model: *const MatmixModel,
    k: *mut usize,
    r: *mut usize,
    p: *mut usize,
) -> MatmixStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.model;
        let (rows, cols) = m.shape();
        for (dst, v) in [(k, m.k()), (r, rows), (p, cols)] {
            if !dst.is_null() {
                *dst = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; each output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn matmix_model_summary(
    model: *const MatmixModel,
    iterations: *mut usize,
    converged: *mut bool,
    objective: *mut f64,
) -> MatmixStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if !iterations.is_null() {
            *iterations = m.iterations;
        }
        if !converged.is_null() {
            *converged = m.converged;
        }
        if !objective.is_null() {
            *objective = m.objective;
        }
        Ok(())
    })
}

/// Copy the `k` mixing weights into `out`.
///
/// # Safety
/// `model` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn matmix_model_weights(model: *const MatmixModel, out: *mut f64, len: usize) -> MatmixStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.model;
        if len != m.k() {
            return Err(Failure(
                MatmixStatus::DimensionMismatch,
                format!("need {} weights, buffer holds {len}", m.k()),
            ));
        }
        output(out, len, "out")?.copy_from_slice(&m.weights);
        Ok(())
    })
}

/// Copy component `j` as row-major arrays of sizes `r·p`, `r·r` and `p·p`.
/// Null outputs are skipped.
///
/// # Safety
/// `model` must be a live handle and each non-null output must have the stated size.
#[no_mangle]
pub unsafe extern "C" fn matmix_model_component(
    model: *const MatmixModel,
    j: usize,
    mean: *mut f64,
    row_cov: *mut f64,
    col_cov: *mut f64,
) -> MatmixStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.model;
        let c = m.components.get(j).ok_or_else(|| invalid(format!("component {j} of {}", m.k())))?;
        for (dst, src) in [(mean, &c.mean), (row_cov, &c.row_cov), (col_cov, &c.col_cov)] {
            if !dst.is_null() {
                write_row_major(src, output(dst, src.len(), "component buffer")?);
            }
        }
        Ok(())
    })
}

/// Hard cluster labels of the training samples.
///
/// # Safety
/// `model` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn matmix_model_labels(model: *const MatmixModel, out: *mut usize, len: usize) -> MatmixStatus {
    guard(|| {
        let labels = &model.as_ref().ok_or_else(|| null("model"))?.labels;
        if len != labels.len() {
            return Err(Failure(
                MatmixStatus::DimensionMismatch,
                format!("need {} labels, buffer holds {len}", labels.len()),
            ));
        }
        output(out, len, "out")?.copy_from_slice(labels);
        Ok(())
    })
}

/// Most probable component of every sample in `stack`.
///
/// # Safety
/// `model` and `stack` must be live handles and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn matmix_model_predict(
    model: *const MatmixModel,
    stack: *const MatmixStack,
    out: *mut usize,
    len: usize,
) -> MatmixStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.model;
        let s = &stack.as_ref().ok_or_else(|| null("stack"))?.0;
        if len != s.len() {
            return Err(Failure(
                MatmixStatus::DimensionMismatch,
                format!("need {} labels, buffer holds {len}", s.len()),
            ));
        }
        let labels = e_step(s, m)?.hard_labels();
        output(out, len, "out")?.copy_from_slice(&labels);
        Ok(())
    })
}

/// Matrix normal log-density of `y` given mean, row and column covariances.
///
/// # Safety
/// `y` and `mean` must hold `r·p` doubles, `row_cov` `r·r`, `col_cov` `p·p`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn matmix_logpdf(
    y: *const f64,
    mean: *const f64,
    row_cov: *const f64,
    col_cov: *const f64,
    r: usize,
    p: usize,
    out: *mut f64,
) -> MatmixStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if r == 0 || p == 0 {
            return Err(invalid("dimensions must be positive"));
        }
        let rp = product(&[r, p])?;
        let y = DMatrix::from_row_slice(r, p, input(y, rp, "y")?);
        let theta = ComponentParams::new(
            DMatrix::from_row_slice(r, p, input(mean, rp, "mean")?),
            DMatrix::from_row_slice(r, r, input(row_cov, product(&[r, r])?, "row_cov")?),
            DMatrix::from_row_slice(p, p, input(col_cov, product(&[p, p])?, "col_cov")?),
        )?;
        *out = matnorm_logpdf(&y, &theta)?;
        Ok(())
    })
}

/// # Safety
/// `a` and `b` must hold `n` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn matmix_adjusted_rand_index(
    a: *const usize,
    b: *const usize,
    n: usize,
    out: *mut f64,
) -> MatmixStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = adjusted_rand_index(input(a, n, "a")?, input(b, n, "b")?)?;
        Ok(())
    })
}

/// # Safety
/// `pred` and `truth` must hold `n` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn matmix_clustering_accuracy(
    pred: *const usize,
    truth: *const usize,
    n: usize,
    out: *mut f64,
) -> MatmixStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = clustering_accuracy(input(pred, n, "pred")?, input(truth, n, "truth")?)?;
        Ok(())
    })
}
