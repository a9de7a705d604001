//! Matrix normal distribution: log-density, sampling and the Kronecker form
//! of its covariance.
//!
//! `Y ~ MN(M, U, V)` with `U` the r×r row covariance and `V` the p×p column
//! covariance is the same law as `vec(Y) ~ N(vec(M), V ⊗ U)`, where `vec`
//! stacks columns. The density here is always evaluated through Cholesky
//! factors of `U` and `V` separately; `V ⊗ U` is only ever built by
//! [`kron_covariance`] for checking purposes.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Largest `r·p` for which [`kron_covariance`] will build the dense matrix.
pub const KRON_SIZE_LIMIT: usize = 4096;

const SYMMETRY_RTOL: f64 = 1e-10;

/// An ordered collection of equally sized real matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixStack {
    rows: usize,
    cols: usize,
    mats: Vec<DMatrix<f64>>,
}

impl MatrixStack {
    pub fn new(mats: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = mats.first().ok_or_else(|| Error::InvalidData("empty matrix stack".into()))?;
        let (rows, cols) = first.shape();
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidData("matrices must have at least one row and column".into()));
        }
        for (i, m) in mats.iter().enumerate() {
            if m.shape() != (rows, cols) {
                return Err(Error::dims(format!("sample {i} is {}x{}, expected {rows}x{cols}", m.nrows(), m.ncols())));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("sample {i} has non-finite entries")));
            }
        }
        Ok(Self { rows, cols, mats })
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize) -> &DMatrix<f64> {
        &self.mats[i]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &DMatrix<f64>> {
        self.mats.iter()
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.mats
    }

    /// The samples at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        Self::new(idx.iter().map(|&i| self.mats[i].clone()).collect())
    }

    /// Column-major vectorization of sample `i`.
    pub fn vec(&self, i: usize) -> &[f64] {
        self.mats[i].as_slice()
    }
}

/// Parameters `(M, U, V)` of one matrix normal component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentParams {
    pub mean: DMatrix<f64>,
    pub row_cov: DMatrix<f64>,
    pub col_cov: DMatrix<f64>,
}

impl ComponentParams {
    /// Validated constructor: shapes agree, both covariances symmetric positive definite.
    pub fn new(mean: DMatrix<f64>, row_cov: DMatrix<f64>, col_cov: DMatrix<f64>) -> Result<Self> {
        let p = Self { mean, row_cov, col_cov };
        p.validate()?;
        Ok(p)
    }

    pub fn identity(rows: usize, cols: usize) -> Self {
        Self {
            mean: DMatrix::zeros(rows, cols),
            row_cov: DMatrix::identity(rows, rows),
            col_cov: DMatrix::identity(cols, cols),
        }
    }

    pub fn rows(&self) -> usize {
        self.mean.nrows()
    }

    pub fn cols(&self) -> usize {
        self.mean.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (r, p) = self.mean.shape();
        if r == 0 || p == 0 {
            return Err(Error::dims("mean must be at least 1x1"));
        }
        if self.row_cov.shape() != (r, r) {
            return Err(Error::dims(format!("row covariance must be {r}x{r}")));
        }
        if self.col_cov.shape() != (p, p) {
            return Err(Error::dims(format!("column covariance must be {p}x{p}")));
        }
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("mean has non-finite entries".into()));
        }
        for (name, m) in [("row covariance", &self.row_cov), ("column covariance", &self.col_cov)] {
            if !linalg::is_symmetric(m, SYMMETRY_RTOL) {
                return Err(Error::NotPositiveDefinite(format!("{name} is not symmetric")));
            }
            linalg::cholesky(m, name)?;
        }
        Ok(())
    }

    /// Factor once for repeated density evaluations.
    pub fn factor(&self) -> Result<FactoredComponent> {
        FactoredComponent::new(self)
    }
}

/// A component with its covariance Cholesky factors and normalizing constant cached.
#[derive(Debug, Clone)]
pub struct FactoredComponent {
    mean: DMatrix<f64>,
    row_chol: DMatrix<f64>,
    col_chol: DMatrix<f64>,
    log_norm: f64,
}

impl FactoredComponent {
    pub fn new(theta: &ComponentParams) -> Result<Self> {
        let (r, p) = theta.mean.shape();
        if theta.row_cov.shape() != (r, r) || theta.col_cov.shape() != (p, p) {
            return Err(Error::dims("covariance shapes do not match the mean"));
        }
        let cu = linalg::cholesky(&theta.row_cov, "row covariance")?;
        let cv = linalg::cholesky(&theta.col_cov, "column covariance")?;
        let (rf, pf) = (r as f64, p as f64);
        let log_norm = -0.5 * rf * pf * LN_2PI - 0.5 * rf * linalg::log_det(&cv) - 0.5 * pf * linalg::log_det(&cu);
        Ok(Self { mean: theta.mean.clone(), row_chol: cu.l(), col_chol: cv.l(), log_norm })
    }

    /// `-(rp/2)·log 2π - (r/2)·log|V| - (p/2)·log|U|`.
    pub fn log_normalizer(&self) -> f64 {
        self.log_norm
    }

    /// `tr(V⁻¹ (Y-M)ᵀ U⁻¹ (Y-M))`.
    pub fn quadratic_form(&self, y: &DMatrix<f64>) -> Result<f64> {
        if y.shape() != self.mean.shape() {
            return Err(Error::dims(format!(
                "observation is {}x{}, component is {}x{}",
                y.nrows(),
                y.ncols(),
                self.mean.nrows(),
                self.mean.ncols()
            )));
        }
        let d = y - &self.mean;
        // A = L_U⁻¹ D, then B = L_V⁻¹ Aᵀ so that ‖B‖² = tr(V⁻¹ Dᵀ U⁻¹ D).
        let a = self.row_chol.solve_lower_triangular(&d).expect("nonsingular factor");
        let b = self.col_chol.solve_lower_triangular(&a.transpose()).expect("nonsingular factor");
        Ok(b.norm_squared())
    }

    pub fn logpdf(&self, y: &DMatrix<f64>) -> Result<f64> {
        Ok(self.log_norm - 0.5 * self.quadratic_form(y)?)
    }
}

/// Log-density of `Y` under `MN(M, U, V)`, in nats.
pub fn matnorm_logpdf(y: &DMatrix<f64>, theta: &ComponentParams) -> Result<f64> {
    if y.shape() != theta.mean.shape() {
        return Err(Error::dims(format!(
            "observation is {}x{}, mean is {}x{}",
            y.nrows(),
            y.ncols(),
            theta.rows(),
            theta.cols()
        )));
    }
    theta.factor()?.logpdf(y)
}

/// `n` independent draws `M + A·Z·Bᵀ` with `A·Aᵀ = U`, `B·Bᵀ = V` and `Z` standard normal.
pub fn matnorm_sample(theta: &ComponentParams, n: usize, seed: u64) -> Result<MatrixStack> {
    if n == 0 {
        return Err(Error::config("sample count must be at least 1"));
    }
    let a = linalg::cholesky(&theta.row_cov, "row covariance")?.l();
    let b_t = linalg::cholesky(&theta.col_cov, "column covariance")?.l().transpose();
    let (r, p) = theta.mean.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mats = (0..n)
        .map(|_| {
            let z = DMatrix::<f64>::from_fn(r, p, |_, _| StandardNormal.sample(&mut rng));
            &theta.mean + &a * z * &b_t
        })
        .collect();
    MatrixStack::new(mats)
}

/// Dense `V ⊗ U`, the covariance of `vec(Y)`. Intended for tests and small diagnostics.
pub fn kron_covariance(theta: &ComponentParams) -> Result<DMatrix<f64>> {
    let dim = theta.rows() * theta.cols();
    if dim > KRON_SIZE_LIMIT {
        return Err(Error::SizeGuardExceeded { dim, limit: KRON_SIZE_LIMIT });
    }
    Ok(theta.col_cov.kronecker(&theta.row_cov))
}

/// Rescale to `(M, cU, V/c)` with `tr(cU) = r`; the law of `Y` is unchanged.
pub fn normalize_scale(theta: &ComponentParams) -> ComponentParams {
    let r = theta.rows() as f64;
    let c = r / theta.row_cov.trace();
    if c == 1.0 {
        return theta.clone();
    }
    ComponentParams { mean: theta.mean.clone(), row_cov: &theta.row_cov * c, col_cov: &theta.col_cov / c }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ar(dim: usize, rho: f64) -> DMatrix<f64> {
        DMatrix::from_fn(dim, dim, |a, b| rho.powi((a as i32 - b as i32).abs()))
    }

    #[test]
    fn scalar_standard_normal() {
        let theta = ComponentParams::identity(1, 1);
        let y = DMatrix::zeros(1, 1);
        let lp = matnorm_logpdf(&y, &theta).unwrap();
        assert!((lp + 0.918_938_533_204_672_7).abs() < 1e-15);
    }

    #[test]
    fn density_at_mean_is_normalizer() {
        let u = ar(3, 0.5);
        let v = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let m = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 0.0, 3.0, 1.0]);
        let theta = ComponentParams::new(m.clone(), u.clone(), v.clone()).unwrap();
        let expected = -3.0 * LN_2PI - 1.5 * v.determinant().ln() - 1.0 * u.determinant().ln();
        assert!((matnorm_logpdf(&m, &theta).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let theta = ComponentParams::identity(2, 3);
        let y = DMatrix::zeros(3, 2);
        assert!(matches!(matnorm_logpdf(&y, &theta), Err(Error::DimensionMismatch(_))));
        let bad = ComponentParams::new(
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            DMatrix::identity(2, 2),
        );
        assert!(matches!(bad, Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn sampling_is_deterministic() {
        let theta = ComponentParams::new(DMatrix::zeros(2, 3), ar(2, 0.4), ar(3, 0.7)).unwrap();
        let a = matnorm_sample(&theta, 5, 42).unwrap();
        let b = matnorm_sample(&theta, 5, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, matnorm_sample(&theta, 5, 43).unwrap());
    }

    #[test]
    fn kron_layout() {
        let u = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let v = DMatrix::from_row_slice(2, 2, &[3.0, -1.0, -1.0, 4.0]);
        let theta = ComponentParams::new(DMatrix::zeros(2, 2), u.clone(), v.clone()).unwrap();
        let k = kron_covariance(&theta).unwrap();
        for (bi, bj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let block = k.view((2 * bi, 2 * bj), (2, 2)).into_owned();
            assert_eq!(block, &u * v[(bi, bj)]);
        }
        let id = ComponentParams::identity(3, 2);
        assert_eq!(kron_covariance(&id).unwrap(), DMatrix::identity(6, 6));
    }

    #[test]
    fn kron_size_guard() {
        let theta = ComponentParams::identity(65, 64);
        assert!(matches!(kron_covariance(&theta), Err(Error::SizeGuardExceeded { dim: 4160, .. })));
    }

    #[test]
    fn normalize_forced_by_trace() {
        let theta =
            ComponentParams::new(DMatrix::zeros(3, 2), DMatrix::identity(3, 3) * 2.0, DMatrix::identity(2, 2)).unwrap();
        let n = normalize_scale(&theta);
        assert_eq!(n.row_cov, DMatrix::identity(3, 3));
        assert_eq!(n.col_cov, DMatrix::identity(2, 2) * 2.0);
        assert_eq!(normalize_scale(&n), n);
    }

    #[test]
    fn stack_rejects_ragged() {
        let r = MatrixStack::new(vec![DMatrix::zeros(2, 2), DMatrix::zeros(2, 3)]);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
        assert!(MatrixStack::new(vec![]).is_err());
    }
}
