//! Synthetic two-cluster scenarios, clustering metrics and the vectorized
//! k-means baseline.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::derive_seed;
use crate::matnorm::{matnorm_sample, ComponentParams, MatrixStack};

/// AR(1) correlation matrix with entries `rho^|a-b|`.
pub fn ar_covariance(dim: usize, rho: f64) -> Result<DMatrix<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidRho(rho));
    }
    if dim == 0 {
        return Err(Error::config("dimension must be at least 1"));
    }
    Ok(DMatrix::from_fn(dim, dim, |a, b| rho.powi(a.abs_diff(b) as i32)))
}

fn check_image(r: usize, p: usize) -> Result<(usize, usize, usize)> {
    if r < 5 || p < 5 {
        return Err(Error::TooSmall { r, p });
    }
    Ok(((r - 1) / 2, (p - 1) / 2, r.min(p) / 6))
}

/// Filled central square of half-width `⌊min(r,p)/6⌋` (rank one).
pub fn mean_square(r: usize, p: usize, amplitude: f64) -> Result<DMatrix<f64>> {
    let (cr, cp, w) = check_image(r, p)?;
    Ok(DMatrix::from_fn(r, p, |i, j| if i.abs_diff(cr) <= w && j.abs_diff(cp) <= w { amplitude } else { 0.0 }))
}

/// Plus shape: a horizontal and a vertical band of half-width `⌊min(r,p)/6⌋` (rank two).
pub fn mean_cross(r: usize, p: usize, amplitude: f64) -> Result<DMatrix<f64>> {
    let (cr, cp, w) = check_image(r, p)?;
    Ok(DMatrix::from_fn(r, p, |i, j| if i.abs_diff(cr) <= w || j.abs_diff(cp) <= w { amplitude } else { 0.0 }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    I,
    II,
    III,
    IV,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::I, Scenario::II, Scenario::III, Scenario::IV];

    /// Default `(n, r = p)`.
    pub fn default_size(self) -> (usize, usize) {
        match self {
            Scenario::I | Scenario::IV => (100, 60),
            Scenario::II => (50, 30),
            Scenario::III => (50, 20),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scenario::I => "I",
            Scenario::II => "II",
            Scenario::III => "III",
            Scenario::IV => "IV",
        };
        f.write_str(s)
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Scenario::I),
            "II" | "2" => Ok(Scenario::II),
            "III" | "3" => Ok(Scenario::III),
            "IV" | "4" => Ok(Scenario::IV),
            other => Err(Error::config(format!("unknown scenario '{other}' (expected I, II, III or IV)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub r: usize,
    pub p: usize,
    pub rho: f64,
    pub mean_amplitude: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        let (n, d) = scenario.default_size();
        Self { scenario, n, r: d, p: d, rho: 0.9, mean_amplitude: 1.0, seed }
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.mean_amplitude = amplitude;
        self
    }

    /// The two generating components: square mean first, cross mean second.
    pub fn components(&self) -> Result<[ComponentParams; 2]> {
        let u = ar_covariance(self.r, self.rho)?;
        let v = ar_covariance(self.p, self.rho)?;
        Ok([
            ComponentParams::new(mean_square(self.r, self.p, self.mean_amplitude)?, u.clone(), v.clone())?,
            ComponentParams::new(mean_cross(self.r, self.p, self.mean_amplitude)?, u, v)?,
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStack {
    pub stack: MatrixStack,
    pub labels: Vec<usize>,
}

/// Two equally sized clusters (label 0 = square mean, 1 = cross mean) sharing
/// AR row and column covariances.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<LabeledStack> {
    if spec.n < 2 {
        return Err(Error::config("scenario needs at least 2 samples"));
    }
    let comps = spec.components()?;
    let sizes = [spec.n - spec.n / 2, spec.n / 2];
    let mut mats = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for (c, (theta, &size)) in comps.iter().zip(&sizes).enumerate() {
        let draws = matnorm_sample(theta, size, derive_seed(spec.seed, c as u64))?;
        mats.extend(draws.iter().cloned());
        labels.extend(std::iter::repeat_n(c, size));
    }
    Ok(LabeledStack { stack: MatrixStack::new(mats)?, labels })
}

/// Map arbitrary labels onto `0..k` in order of first appearance.
fn compress(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut seen: Vec<usize> = Vec::new();
    let out = labels
        .iter()
        .map(|l| match seen.iter().position(|s| s == l) {
            Some(i) => i,
            None => {
                seen.push(*l);
                seen.len() - 1
            }
        })
        .collect();
    (out, seen.len())
}

fn contingency(a: &[usize], b: &[usize]) -> (Vec<Vec<u64>>, usize, usize) {
    let (a, ka) = compress(a);
    let (b, kb) = compress(b);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&i, &j) in a.iter().zip(&b) {
        table[i][j] += 1;
    }
    (table, ka, kb)
}

fn pairs(x: u64) -> i128 {
    let x = x as i128;
    x * (x - 1) / 2
}

/// Adjusted Rand index from the pair-counting contingency table.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::config("ARI needs at least two items"));
    }
    let (table, _, _) = contingency(a, b);
    let index: i128 = table.iter().flatten().map(|&c| pairs(c)).sum();
    let sum_a: i128 = table.iter().map(|row| pairs(row.iter().sum())).sum();
    let kb = table[0].len();
    let sum_b: i128 = (0..kb).map(|j| pairs(table.iter().map(|row| row[j]).sum())).sum();
    let total = pairs(a.len() as u64);
    // (index - E) / (max - E) with E = sum_a·sum_b/total, cleared of fractions.
    let num = 2 * (total * index - sum_a * sum_b);
    let den = total * (sum_a + sum_b) - 2 * sum_a * sum_b;
    if den == 0 {
        // Both partitions trivial in the same way.
        return Ok(1.0);
    }
    Ok(num as f64 / den as f64)
}

/// Best fraction of matching labels over all relabelings of `pred`.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(Error::config("accuracy needs at least one item"));
    }
    let (table, kp, kt) = contingency(pred, truth);
    let k = kp.max(kt);
    if k > 10 {
        return Err(Error::TooManyClusters(k));
    }
    let cell = |i: usize, j: usize| if i < kp && j < kt { table[i][j] } else { 0 };
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0u64;
    permute(&mut perm, 0, &mut |p| {
        let score: u64 = p.iter().enumerate().map(|(i, &j)| cell(i, j)).sum();
        best = best.max(score);
    });
    Ok(best as f64 / pred.len() as f64)
}

fn permute(p: &mut [usize], at: usize, visit: &mut impl FnMut(&[usize])) {
    if at == p.len() {
        visit(p);
        return;
    }
    for i in at..p.len() {
        p.swap(at, i);
        permute(p, at + 1, visit);
        p.swap(at, i);
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares after each assignment step.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_seeds(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|x| sq_dist(x, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter()
                .position(|&d| {
                    acc += d;
                    acc > target
                })
                .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].to_vec();
        for (d, x) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(x, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding on arbitrary points.
pub fn kmeans(points: &[&[f64]], k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    let n = points.len();
    if k == 0 || n < k {
        return Err(Error::config(format!("k-means needs 1 <= k <= n, got k={k}, n={n}")));
    }
    let dim = points[0].len();
    if points.iter().any(|x| x.len() != dim) {
        return Err(Error::dims("k-means points have different lengths"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seeds(points, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    let mut inertia_trace = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for (i, x) in points.iter().enumerate() {
            let (j, d) = nearest(x, &centroids);
            dists[i] = d;
            if labels[i] != j {
                labels[i] = j;
                changed = true;
            }
        }
        inertia_trace.push(dists.iter().sum());
        if !changed {
            break;
        }
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0; dim]; k];
        for (x, &j) in points.iter().zip(&labels) {
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(x.iter()) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        // Empty clusters restart at the point farthest from its centroid.
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..n).filter(|&i| counts[labels[i]] > 1).max_by(|&a, &b| {
                    sq_dist(points[a], &centroids[labels[a]]).total_cmp(&sq_dist(points[b], &centroids[labels[b]]))
                });
                if let Some(i) = far {
                    counts[labels[i]] -= 1;
                    counts[j] = 1;
                    centroids[j] = points[i].to_vec();
                }
            }
        }
    }
    Ok(KMeansResult { labels, centroids, inertia_trace, iterations })
}

/// k-means on the column-major vectorization of each sample.
pub fn kmeans_vectorized(stack: &MatrixStack, k: usize, seed: u64, max_iter: usize) -> Result<Vec<usize>> {
    let points: Vec<&[f64]> = (0..stack.len()).map(|i| stack.vec(i)).collect();
    Ok(kmeans(&points, k, seed, max_iter)?.labels)
}
