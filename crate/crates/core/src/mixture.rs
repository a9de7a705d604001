//! Penalized EM for mixtures of matrix normal distributions.
//!
//! The E-step is the usual posterior responsibility computation, done in the
//! log domain. The M-step updates mixing weights and unpenalized means in
//! closed form, shrinks each mean according to the chosen penalty (soft
//! thresholding for L1, one-step-late updates for squared-Frobenius and
//! nuclear penalties), then re-estimates each component's row and column
//! covariances with a responsibility-weighted flip-flop around the new mean.
//! Covariance spectra are clamped into `[eig_floor, eig_cap]` and the pair
//! is rescaled so that `tr(U) = r`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalgen::kmeans_vectorized;
use crate::flipflop::{flip_flop_around, EigenBounds, FlipFlopConfig};
use crate::linalg::{self, derive_seed};
use crate::matnorm::{normalize_scale, ComponentParams, FactoredComponent, MatrixStack};

/// Total responsibility below which a component counts as empty.
pub const EMPTY_MASS: f64 = 1e-8;
/// Re-seeds of empty components tolerated within one EM run.
pub const MAX_RESEEDS: usize = 3;
/// Initial partitions tried before giving up on a degenerate start.
pub const INIT_ATTEMPTS: usize = 10;

const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    pub components: Vec<ComponentParams>,
    pub weights: Vec<f64>,
}

impl MixtureModel {
    pub fn new(components: Vec<ComponentParams>, weights: Vec<f64>) -> Result<Self> {
        let m = Self { components, weights };
        m.validate()?;
        Ok(m)
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.components[0].mean.shape()
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::config("a mixture needs at least one component"));
        }
        if self.weights.len() != self.components.len() {
            return Err(Error::dims(format!(
                "{} weights for {} components",
                self.weights.len(),
                self.components.len()
            )));
        }
        if self.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::config("mixing weights must be positive"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::config(format!("mixing weights sum to {total}, not 1")));
        }
        let shape = self.shape();
        for (j, c) in self.components.iter().enumerate() {
            if c.mean.shape() != shape {
                return Err(Error::dims(format!("component {j} has a different shape")));
            }
            c.validate()?;
        }
        Ok(())
    }

    fn factor(&self) -> Result<Vec<FactoredComponent>> {
        self.components.iter().map(FactoredComponent::new).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    None,
    L1,
    L2,
    Nuclear,
}

impl PenaltyKind {
    pub const ALL: [PenaltyKind; 4] = [PenaltyKind::None, PenaltyKind::L1, PenaltyKind::L2, PenaltyKind::Nuclear];
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyKind::None => "none",
            PenaltyKind::L1 => "l1",
            PenaltyKind::L2 => "l2",
            PenaltyKind::Nuclear => "nuclear",
        })
    }
}

impl FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(PenaltyKind::None),
            "l1" => Ok(PenaltyKind::L1),
            "l2" => Ok(PenaltyKind::L2),
            "nuclear" => Ok(PenaltyKind::Nuclear),
            other => Err(Error::config(format!("unknown penalty '{other}'"))),
        }
    }
}

/// Penalty `λ·Σⱼ P(Mⱼ)` on the component means.
///
/// `P` is the entrywise absolute sum for L1, the squared Frobenius norm for
/// L2, and the sum of singular values for the nuclear norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub lambda: f64,
}

impl PenaltySpec {
    pub fn new(kind: PenaltyKind, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be finite and nonnegative, got {lambda}")));
        }
        Ok(Self { kind, lambda })
    }

    pub fn none() -> Self {
        Self { kind: PenaltyKind::None, lambda: 0.0 }
    }

    pub fn is_active(&self) -> bool {
        self.kind != PenaltyKind::None && self.lambda != 0.0
    }

    /// `P(M)` for one mean, without the λ factor.
    pub fn norm(&self, mean: &DMatrix<f64>) -> f64 {
        match self.kind {
            PenaltyKind::None => 0.0,
            PenaltyKind::L1 => mean.iter().map(|v| v.abs()).sum(),
            PenaltyKind::L2 => mean.norm_squared(),
            PenaltyKind::Nuclear => linalg::singular_values(mean).iter().sum(),
        }
    }

    /// `λ·Σⱼ P(Mⱼ)`.
    pub fn value(&self, model: &MixtureModel) -> f64 {
        if !self.is_active() {
            return 0.0;
        }
        self.lambda * model.components.iter().map(|c| self.norm(&c.mean)).sum::<f64>()
    }
}

/// Posterior membership probabilities, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub alpha: DMatrix<f64>,
}

impl Responsibilities {
    pub fn from_labels(labels: &[usize], k: usize) -> Self {
        let mut alpha = DMatrix::zeros(labels.len(), k);
        for (i, &l) in labels.iter().enumerate() {
            alpha[(i, l)] = 1.0;
        }
        Self { alpha }
    }

    /// Row-wise argmax; ties go to the lower component index.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.alpha
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.alpha.column(j).iter().cloned().collect()
    }

    pub fn mass(&self, j: usize) -> f64 {
        self.alpha.column(j).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMethod {
    KMeans,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub max_iter: usize,
    /// Threshold on `Σⱼ ‖Mⱼ⁽ᵗ⁾ - Mⱼ⁽ᵗ⁻¹⁾‖_F`; `1e-4·√(r·p)` when `None`.
    pub mean_tol: Option<f64>,
    pub eig_floor: f64,
    pub eig_cap: f64,
    pub inner_flipflop: FlipFlopConfig,
    /// Start each M-step flip-flop from the component's previous row covariance.
    pub warm_start: bool,
    pub init: InitMethod,
    pub seed: u64,
    pub n_starts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            mean_tol: None,
            eig_floor: 1e-4,
            eig_cap: 1e4,
            inner_flipflop: FlipFlopConfig::default(),
            warm_start: true,
            init: InitMethod::KMeans,
            seed: 0,
            n_starts: 3,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eig_floor > 0.0 && self.eig_floor < self.eig_cap) {
            return Err(Error::config("eigenvalue bounds must satisfy 0 < floor < cap"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter must be at least 1"));
        }
        if self.n_starts == 0 {
            return Err(Error::config("n_starts must be at least 1"));
        }
        if let Some(t) = self.mean_tol {
            if !(t >= 0.0) {
                return Err(Error::config("mean_tol must be nonnegative"));
            }
        }
        self.inner_flipflop.validate()
    }

    pub fn mean_tol_for(&self, rows: usize, cols: usize) -> f64 {
        self.mean_tol.unwrap_or_else(|| 1e-4 * ((rows * cols) as f64).sqrt())
    }

    fn bounds(&self) -> EigenBounds {
        EigenBounds { lo: self.eig_floor, hi: self.eig_cap }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: MixtureModel,
    pub resp: Responsibilities,
    /// Penalized objective at the initial model and after every M-step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub hard_labels: Vec<usize>,
    /// Seed of the restart that produced this report.
    pub seed: u64,
}

impl FitReport {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

fn check_shape(stack: &MatrixStack, model: &MixtureModel) -> Result<()> {
    if (stack.rows(), stack.cols()) != model.shape() {
        return Err(Error::dims(format!(
            "data are {}x{}, model is {}x{}",
            stack.rows(),
            stack.cols(),
            model.shape().0,
            model.shape().1
        )));
    }
    Ok(())
}

/// `log πⱼ + log f(Yᵢ | Θⱼ)` for every sample and component.
fn log_joint(stack: &MatrixStack, model: &MixtureModel) -> Result<DMatrix<f64>> {
    check_shape(stack, model)?;
    let factored = model.factor()?;
    let log_pi: Vec<f64> = model.weights.iter().map(|w| w.ln()).collect();
    let mut out = DMatrix::zeros(stack.len(), model.k());
    for (i, y) in stack.iter().enumerate() {
        for (j, f) in factored.iter().enumerate() {
            out[(i, j)] = log_pi[j] + f.logpdf(y)?;
        }
    }
    Ok(out)
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn row_vec(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().cloned().collect()
}

fn loglik_from_joint(lj: &DMatrix<f64>) -> f64 {
    (0..lj.nrows()).map(|i| log_sum_exp(&row_vec(lj, i))).sum()
}

fn resp_from_joint(lj: &DMatrix<f64>) -> Responsibilities {
    let mut alpha = lj.clone();
    for i in 0..lj.nrows() {
        let lse = log_sum_exp(&row_vec(lj, i));
        let mut row = alpha.row_mut(i);
        row.apply(|v| *v = (*v - lse).exp());
        let s = row.sum();
        row /= s;
    }
    Responsibilities { alpha }
}

/// `Σᵢ log Σⱼ πⱼ f(Yᵢ | Θⱼ)`.
pub fn observed_loglik(stack: &MatrixStack, model: &MixtureModel) -> Result<f64> {
    Ok(loglik_from_joint(&log_joint(stack, model)?))
}

/// Observed log-likelihood minus `λ·Σⱼ P(Mⱼ)`.
pub fn penalized_objective(stack: &MatrixStack, model: &MixtureModel, penalty: &PenaltySpec) -> Result<f64> {
    Ok(observed_loglik(stack, model)? - penalty.value(model))
}

pub fn e_step(stack: &MatrixStack, model: &MixtureModel) -> Result<Responsibilities> {
    Ok(resp_from_joint(&log_joint(stack, model)?))
}

/// Penalized update of one component mean from its unpenalized update `tilde`.
///
/// `mass` is the component's total responsibility and `prev` holds the
/// previous iterate's `(Mⱼ, Uⱼ, Vⱼ)`.
///
/// - L1: soft thresholding of `tilde` at `(λ/mass)·Uⱼ·1·Vⱼ`.
/// - L2: the solution of `M + (2λ/mass)·Uⱼ·M·Vⱼ = tilde`, i.e. the fixed point
///   of the one-step-late recursion `M ← tilde - (2λ/mass)·Uⱼ·M·Vⱼ`.
/// - Nuclear: the one-step-late step `tilde - (λ/mass)·Uⱼ·Φ·Ωᵀ·Vⱼ` with
///   `Mⱼ = Φ·Λ·Ωᵀ`, taken in full whenever it does not lower the penalized
///   mean objective relative to `Mⱼ`, otherwise halved back toward `Mⱼ`.
pub fn penalized_mean(tilde: &DMatrix<f64>, mass: f64, prev: &ComponentParams, penalty: &PenaltySpec) -> DMatrix<f64> {
    if !penalty.is_active() {
        return tilde.clone();
    }
    let step = penalty.lambda / mass;
    let (u, v) = (&prev.row_cov, &prev.col_cov);
    match penalty.kind {
        PenaltyKind::None => tilde.clone(),
        PenaltyKind::L1 => {
            // U·1·V is the outer product of U's row sums and V's column sums.
            let u_sums: DVector<f64> = u.column_sum();
            let v_sums: DVector<f64> = v.row_sum().transpose();
            DMatrix::from_fn(tilde.nrows(), tilde.ncols(), |a, b| {
                let t = tilde[(a, b)];
                let shrunk = (t.abs() - step * u_sums[a] * v_sums[b]).max(0.0);
                if t == 0.0 {
                    0.0
                } else {
                    t.signum() * shrunk
                }
            })
        }
        PenaltyKind::L2 => ridge_solve(tilde, u, v, 2.0 * step),
        PenaltyKind::Nuclear => {
            let proposal = tilde - (u * polar_factor(&prev.mean) * v) * step;
            safeguarded_step(tilde, mass, prev, penalty, proposal)
        }
    }
}

/// Solve `M + s·U·M·V = B` in the eigenbases of the symmetric `U` and `V`.
fn ridge_solve(b: &DMatrix<f64>, u: &DMatrix<f64>, v: &DMatrix<f64>, s: f64) -> DMatrix<f64> {
    let eu = SymmetricEigen::new(u.clone());
    let ev = SymmetricEigen::new(v.clone());
    let mut m = eu.eigenvectors.transpose() * b * &ev.eigenvectors;
    for c in 0..m.ncols() {
        for a in 0..m.nrows() {
            m[(a, c)] /= 1.0 + s * eu.eigenvalues[a] * ev.eigenvalues[c];
        }
    }
    &eu.eigenvectors * m * ev.eigenvectors.transpose()
}

const MAX_HALVINGS: usize = 40;

/// Accept `proposal` if it does not lower `-(mass/2)·‖M - tilde‖²_{U,V} - λ·P(M)`
/// relative to the previous mean; otherwise backtrack along the segment.
fn safeguarded_step(
    tilde: &DMatrix<f64>,
    mass: f64,
    prev: &ComponentParams,
    penalty: &PenaltySpec,
    proposal: DMatrix<f64>,
) -> DMatrix<f64> {
    let metric = ComponentParams { mean: tilde.clone(), row_cov: prev.row_cov.clone(), col_cov: prev.col_cov.clone() };
    let Ok(metric) = metric.factor() else {
        return proposal;
    };
    let objective = |m: &DMatrix<f64>| {
        -0.5 * mass * metric.quadratic_form(m).expect("shapes checked") - penalty.lambda * penalty.norm(m)
    };
    let base = objective(&prev.mean);
    if objective(&proposal) >= base {
        return proposal;
    }
    let direction = &proposal - &prev.mean;
    let mut t = 0.5;
    for _ in 0..MAX_HALVINGS {
        let candidate = &prev.mean + &direction * t;
        if objective(&candidate) >= base {
            return candidate;
        }
        t *= 0.5;
    }
    prev.mean.clone()
}

/// `Φ·Ωᵀ` from the thin SVD `M = Φ Λ Ωᵀ`, restricted to numerically nonzero singular values.
fn polar_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let (phi, omega_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = smax * f64::EPSILON * m.nrows().max(m.ncols()) as f64;
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            out += phi.column(i) * omega_t.row(i);
        }
    }
    out
}

/// Flip-flop covariances around `mean` with weights `w`, then clamp and rescale.
fn covariance_update(
    stack: &MatrixStack,
    w: &[f64],
    mean: &DMatrix<f64>,
    init_row_cov: Option<&DMatrix<f64>>,
    cfg: &FitConfig,
) -> Result<ComponentParams> {
    let ff = FlipFlopConfig { weights: None, init_row_cov: init_row_cov.cloned(), ..cfg.inner_flipflop.clone() };
    let fit = flip_flop_around(stack, w, mean, &ff, Some(cfg.bounds()))?;
    let clamped = ComponentParams {
        mean: fit.params.mean,
        row_cov: linalg::clamp_eigenvalues(&fit.params.row_cov, cfg.eig_floor, cfg.eig_cap),
        col_cov: linalg::clamp_eigenvalues(&fit.params.col_cov, cfg.eig_floor, cfg.eig_cap),
    };
    Ok(normalize_scale(&clamped))
}

pub fn m_step(
    stack: &MatrixStack,
    resp: &Responsibilities,
    prev: &MixtureModel,
    penalty: &PenaltySpec,
    cfg: &FitConfig,
) -> Result<MixtureModel> {
    check_shape(stack, prev)?;
    if resp.alpha.shape() != (stack.len(), prev.k()) {
        return Err(Error::dims("responsibilities do not match data and model"));
    }
    let n = stack.len() as f64;
    let masses: Vec<f64> = (0..prev.k()).map(|j| resp.mass(j)).collect();
    if let Some((j, &m)) = masses.iter().enumerate().find(|(_, &m)| !(m >= EMPTY_MASS)) {
        return Err(Error::EmptyCluster { component: j, mass: m });
    }
    let mut components = Vec::with_capacity(prev.k());
    for (j, old) in prev.components.iter().enumerate() {
        let w = resp.column(j);
        let tilde = crate::flipflop::weighted_mean(stack, &w)?;
        let mean = penalized_mean(&tilde, masses[j], old, penalty);
        let init = cfg.warm_start.then_some(&old.row_cov);
        let updated = covariance_update(stack, &w, &mean, init, cfg)
            .map_err(|e| Error::InComponent { component: j, source: Box::new(e) })?;
        components.push(updated);
    }
    let weights = masses.iter().map(|m| m / n).collect();
    Ok(MixtureModel { components, weights })
}

fn partition(stack: &MatrixStack, k: usize, cfg: &FitConfig, seed: u64) -> Result<Vec<usize>> {
    match cfg.init {
        InitMethod::KMeans => kmeans_vectorized(stack, k, seed, KMEANS_MAX_ITER),
        InitMethod::Random => {
            let mut idx: Vec<usize> = (0..stack.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut labels = vec![0; stack.len()];
            for (pos, &i) in idx.iter().enumerate() {
                labels[i] = pos % k;
            }
            Ok(labels)
        }
    }
}

/// Hard initial partition and per-cluster flip-flop estimates.
pub fn initialize(stack: &MatrixStack, k: usize, cfg: &FitConfig) -> Result<(MixtureModel, Responsibilities)> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    if stack.len() < 2 * k {
        return Err(Error::config(format!("need at least {} samples for k={k}, got {}", 2 * k, stack.len())));
    }
    let n = stack.len();
    'attempt: for attempt in 0..INIT_ATTEMPTS {
        let seed = if attempt == 0 { cfg.seed } else { derive_seed(cfg.seed, attempt as u64) };
        let labels = partition(stack, k, cfg, seed)?;
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        if counts.iter().any(|&c| c < 2) {
            continue;
        }
        let resp = Responsibilities::from_labels(&labels, k);
        let mut components = Vec::with_capacity(k);
        for j in 0..k {
            let w = resp.column(j);
            let mean = crate::flipflop::weighted_mean(stack, &w)?;
            match covariance_update(stack, &w, &mean, None, cfg) {
                Ok(c) => components.push(c),
                Err(Error::NotPositiveDefinite(_)) => continue 'attempt,
                Err(e) => return Err(e),
            }
        }
        let weights = counts.iter().map(|&c| c as f64 / n as f64).collect();
        return Ok((MixtureModel { components, weights }, resp));
    }
    Err(Error::DegenerateClusterInit { attempts: INIT_ATTEMPTS })
}

/// Move an empty component onto the worst-explained sample with identity covariances.
/// Restarts component `j` at the least confidently assigned sample, borrowing
/// the covariances of the component that currently claims that sample.
fn reseed(stack: &MatrixStack, model: &mut MixtureModel, resp: &Responsibilities, j: usize) {
    let worst = (0..stack.len())
        .min_by(|&a, &b| {
            let ma = resp.alpha.row(a).max();
            let mb = resp.alpha.row(b).max();
            ma.total_cmp(&mb)
        })
        .expect("nonempty stack");
    let owner = resp.alpha.row(worst).transpose().argmax().0;
    let donor = &model.components[owner];
    model.components[j] = ComponentParams {
        mean: stack.get(worst).clone(),
        row_cov: donor.row_cov.clone(),
        col_cov: donor.col_cov.clone(),
    };
    model.weights[j] = 1.0 / stack.len() as f64;
    let total: f64 = model.weights.iter().sum();
    for w in &mut model.weights {
        *w /= total;
    }
}

/// Order components by decreasing weight, ties by lexicographic `vec(M)`.
fn canonical_order(model: &MixtureModel) -> Vec<usize> {
    let mut order: Vec<usize> = (0..model.k()).collect();
    order.sort_by(|&a, &b| {
        model.weights[b].total_cmp(&model.weights[a]).then_with(|| {
            let (ma, mb) = (model.components[a].mean.as_slice(), model.components[b].mean.as_slice());
            ma.iter().zip(mb).map(|(x, y)| x.total_cmp(y)).find(|o| *o != Ordering::Equal).unwrap_or(Ordering::Equal)
        })
    });
    order
}

fn run_em(stack: &MatrixStack, k: usize, penalty: &PenaltySpec, cfg: &FitConfig, seed: u64) -> Result<FitReport> {
    let start_cfg = FitConfig { seed, ..cfg.clone() };
    let (mut model, _) = initialize(stack, k, &start_cfg)?;
    let tol = cfg.mean_tol_for(stack.rows(), stack.cols());
    let mut lj = log_joint(stack, &model)?;
    let mut trace = vec![loglik_from_joint(&lj) - penalty.value(&model)];
    let mut reseeds = 0;
    let mut converged = false;
    let mut iterations = 0;
    for t in 1..=cfg.max_iter {
        iterations = t;
        let resp = resp_from_joint(&lj);
        match m_step(stack, &resp, &model, penalty, cfg) {
            Ok(next) => {
                let change: f64 =
                    model.components.iter().zip(&next.components).map(|(a, b)| (&a.mean - &b.mean).norm()).sum();
                model = next;
                lj = log_joint(stack, &model).map_err(|e| e.at_iteration(t))?;
                trace.push(loglik_from_joint(&lj) - penalty.value(&model));
                if change <= tol {
                    converged = true;
                    break;
                }
            }
            Err(Error::EmptyCluster { component, mass }) => {
                reseeds += 1;
                if reseeds > MAX_RESEEDS {
                    return Err(Error::EmptyCluster { component, mass }.at_iteration(t));
                }
                reseed(stack, &mut model, &resp, component);
                lj = log_joint(stack, &model).map_err(|e| e.at_iteration(t))?;
            }
            Err(e) => return Err(e.at_iteration(t)),
        }
    }
    let order = canonical_order(&model);
    let model = MixtureModel {
        components: order.iter().map(|&j| model.components[j].clone()).collect(),
        weights: order.iter().map(|&j| model.weights[j]).collect(),
    };
    let lj = DMatrix::from_fn(lj.nrows(), lj.ncols(), |i, j| lj[(i, order[j])]);
    let resp = resp_from_joint(&lj);
    let hard_labels = resp.hard_labels();
    Ok(FitReport { model, resp, objective_trace: trace, iterations, converged, hard_labels, seed })
}

/// Penalized EM with `cfg.n_starts` restarts; the run with the highest final
/// penalized objective wins.
pub fn fit_em(stack: &MatrixStack, k: usize, penalty: &PenaltySpec, cfg: &FitConfig) -> Result<FitReport> {
    cfg.validate()?;
    PenaltySpec::new(penalty.kind, penalty.lambda)?;
    let mut best: Option<FitReport> = None;
    let mut last_err = None;
    for s in 0..cfg.n_starts {
        let seed = if s == 0 { cfg.seed } else { derive_seed(cfg.seed, 0x5eed_0000 + s as u64) };
        match run_em(stack, k, penalty, cfg, seed) {
            Ok(rep) => {
                if best.as_ref().is_none_or(|b| rep.final_objective() > b.final_objective()) {
                    best = Some(rep);
                }
            }
            Err(e) if e.is_numeric() => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| last_err.expect("at least one start ran"))
}
