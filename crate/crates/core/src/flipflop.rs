//! Maximum likelihood for a single matrix normal population by alternating
//! ("flip-flop") updates of the row and column covariances.
//!
//! Every routine accepts per-sample weights so the same code serves as the
//! covariance half of the mixture M-step, where the weights are posterior
//! responsibilities.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::matnorm::{normalize_scale, ComponentParams, MatrixStack, LN_2PI};

#[derive(Debug, Clone, PartialEq)]
pub struct FlipFlopConfig {
    /// Frobenius-norm change below which both covariances count as converged.
    pub tolerance: f64,
    /// Hard cap on covariance update sweeps.
    pub max_iter: usize,
    /// Per-sample weights; uniform when `None`.
    pub weights: Option<Vec<f64>>,
    /// Starting row covariance; the identity when `None`.
    pub init_row_cov: Option<DMatrix<f64>>,
}

impl Default for FlipFlopConfig {
    fn default() -> Self {
        Self { tolerance: 1e-6, max_iter: 100, weights: None, init_row_cov: None }
    }
}

impl FlipFlopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::config("flip-flop tolerance must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("flip-flop max_iter must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FlipFlopResult {
    /// Scale-normalized estimate (`tr(U) = r`).
    pub params: ComponentParams,
    /// Completed (U, V) update sweeps.
    pub iterations: usize,
    pub converged: bool,
    /// Weighted log-likelihood after the initial V and after each sweep.
    pub loglik_trace: Vec<f64>,
}

/// Spectrum bounds applied to a covariance iterate that fails to factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenBounds {
    pub lo: f64,
    pub hi: f64,
}

fn check_weights(weights: &[f64], n: usize) -> Result<f64> {
    if weights.len() != n {
        return Err(Error::dims(format!("{} weights for {n} samples", weights.len())));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::config(format!("weights must be finite and nonnegative, got {w}")));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::AllWeightsZero);
    }
    Ok(total)
}

/// `Σ wᵢYᵢ / Σ wᵢ`.
pub fn weighted_mean(stack: &MatrixStack, weights: &[f64]) -> Result<DMatrix<f64>> {
    let total = check_weights(weights, stack.len())?;
    let mut acc = DMatrix::zeros(stack.rows(), stack.cols());
    for (y, &w) in stack.iter().zip(weights) {
        if w != 0.0 {
            acc.zip_apply(y, |a, b| *a += w * b);
        }
    }
    Ok(acc / total)
}

/// `Σ wᵢ · log f(Yᵢ | θ)`.
pub fn stack_loglik(stack: &MatrixStack, theta: &ComponentParams, weights: &[f64]) -> Result<f64> {
    if weights.len() != stack.len() {
        return Err(Error::dims(format!("{} weights for {} samples", weights.len(), stack.len())));
    }
    if (stack.rows(), stack.cols()) != theta.mean.shape() {
        return Err(Error::dims("stack and component shapes differ"));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Ok(0.0);
    }
    let f = theta.factor()?;
    let mut total = 0.0;
    for (y, &w) in stack.iter().zip(weights) {
        if w != 0.0 {
            total += w * f.logpdf(y)?;
        }
    }
    Ok(total)
}

/// Centered, weight-scaled deviations kept in the two layouts the scatter updates need.
struct Deviations {
    rows: usize,
    cols: usize,
    total_weight: f64,
    /// √wᵢ·(Yᵢ - M) for samples with wᵢ > 0.
    devs: Vec<DMatrix<f64>>,
}

impl Deviations {
    fn new(stack: &MatrixStack, weights: &[f64], mean: &DMatrix<f64>) -> Result<Self> {
        let total_weight = check_weights(weights, stack.len())?;
        if mean.shape() != (stack.rows(), stack.cols()) {
            return Err(Error::dims("mean shape differs from the samples"));
        }
        let devs: Vec<_> =
            stack.iter().zip(weights).filter(|(_, &w)| w > 0.0).map(|(y, &w)| (y - mean) * w.sqrt()).collect();
        let scatter: f64 = devs.iter().map(|d| d.norm_squared()).sum();
        if !(scatter > 0.0) {
            return Err(Error::NotPositiveDefinite("samples have zero scatter about the mean".into()));
        }
        Ok(Self { rows: stack.rows(), cols: stack.cols(), total_weight, devs })
    }

    /// `Σ wᵢ Dᵢ V⁻¹ Dᵢᵀ / (p·W)` given the lower Cholesky factor of V.
    fn row_update(&self, col_chol: &DMatrix<f64>) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.rows, self.rows);
        for d in &self.devs {
            // X = L_V⁻¹ Dᵀ, so Xᵀ X = D V⁻¹ Dᵀ.
            let x = col_chol.solve_lower_triangular(&d.transpose()).expect("nonsingular factor");
            s.gemm_tr(1.0, &x, &x, 1.0);
        }
        s /= self.cols as f64 * self.total_weight;
        linalg::symmetrize(&mut s);
        s
    }

    /// `Σ wᵢ Dᵢᵀ U⁻¹ Dᵢ / (r·W)` given the lower Cholesky factor of U.
    fn col_update(&self, row_chol: &DMatrix<f64>) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.cols, self.cols);
        for d in &self.devs {
            let x = row_chol.solve_lower_triangular(d).expect("nonsingular factor");
            s.gemm_tr(1.0, &x, &x, 1.0);
        }
        s /= self.rows as f64 * self.total_weight;
        linalg::symmetrize(&mut s);
        s
    }

    /// Weighted log-likelihood at `(M, U, V)` when V is the exact column update
    /// for U, where the trace term collapses to `r·p·W`.
    fn profile_loglik(&self, log_det_u: f64, log_det_v: f64) -> f64 {
        let (r, p) = (self.rows as f64, self.cols as f64);
        self.total_weight * (-0.5 * r * p * (LN_2PI + 1.0) - 0.5 * r * log_det_v - 0.5 * p * log_det_u)
    }
}

/// Factor `m`, or with `bounds` set, fall back to its eigenvalue-clamped projection.
fn factor_iterate(m: &mut DMatrix<f64>, what: &str, bounds: Option<EigenBounds>) -> Result<(DMatrix<f64>, f64)> {
    match linalg::cholesky(m, what) {
        Ok(c) => Ok((c.l(), linalg::log_det(&c))),
        Err(e @ Error::NotPositiveDefinite(_)) => {
            let Some(b) = bounds else { return Err(e) };
            *m = linalg::clamp_eigenvalues(m, b.lo, b.hi);
            let c = linalg::cholesky(m, what)?;
            Ok((c.l(), linalg::log_det(&c)))
        }
        Err(e) => Err(e),
    }
}

/// Flip-flop MLE of `(M, U, V)` from a stack, with `M` the (weighted) sample mean.
pub fn flip_flop_mle(stack: &MatrixStack, cfg: &FlipFlopConfig) -> Result<FlipFlopResult> {
    let uniform;
    let weights = match &cfg.weights {
        Some(w) => w.as_slice(),
        None => {
            uniform = vec![1.0; stack.len()];
            &uniform
        }
    };
    let mean = weighted_mean(stack, weights)?;
    flip_flop_around(stack, weights, &mean, cfg, None)
}

/// Flip-flop covariance estimation around a fixed mean.
///
/// `cfg.weights` is ignored in favour of `weights`. With `bounds` set, an
/// iterate that is not numerically positive definite is replaced by its
/// eigenvalue-clamped projection instead of failing.
pub fn flip_flop_around(
    stack: &MatrixStack,
    weights: &[f64],
    mean: &DMatrix<f64>,
    cfg: &FlipFlopConfig,
    bounds: Option<EigenBounds>,
) -> Result<FlipFlopResult> {
    cfg.validate()?;
    let devs = Deviations::new(stack, weights, mean)?;
    let r = stack.rows();

    let mut u0 = match &cfg.init_row_cov {
        Some(u) if u.shape() == (r, r) => u.clone(),
        Some(_) => return Err(Error::dims("initial row covariance has the wrong shape")),
        None => DMatrix::identity(r, r),
    };
    let (l_u0, ld_u0) = factor_iterate(&mut u0, "row covariance", bounds)?;
    let mut v0 = devs.col_update(&l_u0);
    let (mut l_v, mut ld_v) = factor_iterate(&mut v0, "column covariance", bounds)?;
    let mut trace = vec![devs.profile_loglik(ld_u0, ld_v)];

    let mut u1 = devs.row_update(&l_v);
    let (mut l_u, mut ld_u) = factor_iterate(&mut u1, "row covariance", bounds)?;
    let mut v1 = devs.col_update(&l_u);
    (l_v, ld_v) = factor_iterate(&mut v1, "column covariance", bounds)?;
    trace.push(devs.profile_loglik(ld_u, ld_v));

    let tol = cfg.tolerance;
    let mut sweeps = 1;
    let changed = |u0: &DMatrix<f64>, u1: &DMatrix<f64>, v0: &DMatrix<f64>, v1: &DMatrix<f64>| {
        (u1 - u0).norm() > tol || (v1 - v0).norm() > tol
    };
    while sweeps < cfg.max_iter && changed(&u0, &u1, &v0, &v1) {
        u0 = u1;
        v0 = v1;
        u1 = devs.row_update(&l_v);
        (l_u, ld_u) = factor_iterate(&mut u1, "row covariance", bounds)?;
        v1 = devs.col_update(&l_u);
        (l_v, ld_v) = factor_iterate(&mut v1, "column covariance", bounds)?;
        trace.push(devs.profile_loglik(ld_u, ld_v));
        sweeps += 1;
    }
    let converged = !changed(&u0, &u1, &v0, &v1);
    let params = normalize_scale(&ComponentParams { mean: mean.clone(), row_cov: u1, col_cov: v1 });
    Ok(FlipFlopResult { params, iterations: sweeps, converged, loglik_trace: trace })
}
