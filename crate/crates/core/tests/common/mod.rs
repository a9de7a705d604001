//! Independent oracles and generators shared by the integration tests.
//!
//! Nothing here calls into the code under test except constructors, so the
//! oracles stay independent of the implementation they check.
#![allow(dead_code)]

use matmix::matnorm::{ComponentParams, MatrixStack};
use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `V ⊗ U` built entry by entry: `Σ[(a + b·r), (c + d·r)] = V[b,d]·U[a,c]`.
pub fn kron_oracle(u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, p) = (u.nrows(), v.nrows());
    DMatrix::from_fn(r * p, r * p, |i, j| v[(i / r, j / r)] * u[(i % r, j % r)])
}

/// Column-stacked vectorization.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.len(), |i, _| m[(i % m.nrows(), i / m.nrows())])
}

/// Multivariate normal log-density using an LU factorization of the full covariance.
pub fn mvn_logpdf_oracle(x: &DVector<f64>, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let lu = sigma.clone().lu();
    let det = lu.determinant();
    assert!(det > 0.0, "oracle covariance must be positive definite");
    let diff = x - mu;
    let sol = lu.solve(&diff).expect("nonsingular");
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + det.ln() + diff.dot(&sol))
}

pub fn matnorm_oracle(y: &DMatrix<f64>, theta: &ComponentParams) -> f64 {
    mvn_logpdf_oracle(&vec_of(y), &vec_of(&theta.mean), &kron_oracle(&theta.row_cov, &theta.col_cov))
}

pub fn random_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// Well-conditioned SPD matrix `A·Aᵀ/dim + 0.5·I`.
pub fn random_spd(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = random_matrix(dim, dim, rng);
    let mut s = &a * a.transpose() / dim as f64 + DMatrix::identity(dim, dim) * 0.5;
    // Exact symmetry regardless of rounding in the product.
    s = (&s + s.transpose()) * 0.5;
    s
}

pub fn random_component(r: usize, p: usize, rng: &mut ChaCha8Rng) -> ComponentParams {
    ComponentParams::new(random_matrix(r, p, rng) * 2.0, random_spd(r, rng), random_spd(p, rng)).unwrap()
}

pub fn rel_frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Empirical covariance of the vectorized samples (divides by n).
pub fn empirical_vec_cov(stack: &MatrixStack) -> (DVector<f64>, DMatrix<f64>) {
    let n = stack.len() as f64;
    let d = stack.rows() * stack.cols();
    let mut mean = DVector::zeros(d);
    for m in stack.iter() {
        mean += vec_of(m);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for m in stack.iter() {
        let c = vec_of(m) - &mean;
        cov += &c * c.transpose();
    }
    (mean, cov / n)
}

/// ARI straight from pair enumeration, in exact integer arithmetic.
///
/// With `both` the pairs joined in both labelings, `sa`/`sb` the pairs joined
/// in each and `t` all pairs, ARI = (both - sa·sb/t) / ((sa+sb)/2 - sa·sb/t);
/// multiplying through by `2t` leaves integers and one final division.
pub fn ari_pair_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut sa, mut sb, mut t) = (0i128, 0i128, 0i128, 0i128);
    for i in 0..n {
        for j in i + 1..n {
            let ja = a[i] == a[j];
            let jb = b[i] == b[j];
            both += i128::from(ja && jb);
            sa += i128::from(ja);
            sb += i128::from(jb);
            t += 1;
        }
    }
    let num = 2 * (t * both - sa * sb);
    let den = t * (sa + sb) - 2 * sa * sb;
    if den == 0 {
        return 1.0;
    }
    num as f64 / den as f64
}

/// Accuracy by trying every injective relabeling of `pred`'s labels onto `0..m`.
pub fn accuracy_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let mut labels_p: Vec<usize> = pred.to_vec();
    labels_p.sort_unstable();
    labels_p.dedup();
    let mut labels_t: Vec<usize> = truth.to_vec();
    labels_t.sort_unstable();
    labels_t.dedup();
    let slots = labels_p.len().max(labels_t.len());
    let mut best = 0usize;
    let mut assign = vec![usize::MAX; labels_p.len()];
    fn search(at: usize, assign: &mut Vec<usize>, used: &mut Vec<bool>, f: &mut dyn FnMut(&[usize])) {
        if at == assign.len() {
            f(assign);
            return;
        }
        for s in 0..used.len() {
            if !used[s] {
                used[s] = true;
                assign[at] = s;
                search(at + 1, assign, used, f);
                used[s] = false;
            }
        }
    }
    let mut used = vec![false; slots];
    search(0, &mut assign, &mut used, &mut |map| {
        let hits = pred
            .iter()
            .zip(truth)
            .filter(|(p, t)| {
                let pi = labels_p.binary_search(p).unwrap();
                labels_t.get(map[pi]) == Some(*t)
            })
            .count();
        best = best.max(hits);
    });
    best as f64 / pred.len() as f64
}

pub fn random_labels(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}
