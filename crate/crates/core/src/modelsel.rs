//! Choosing the number of clusters by cross-validated penalized likelihood (CVPL).
//!
//! A model is fitted on the training part of each split and scored on the
//! held-out part by its per-sample penalized log-likelihood. Scores are
//! reported so that higher is better.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::derive_seed;
use crate::matnorm::MatrixStack;
use crate::mixture::{fit_em, observed_loglik, FitConfig, PenaltyKind, PenaltySpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Split {
    /// Single random split holding out this fraction of samples.
    Holdout(f64),
    /// F-fold cross-validation.
    KFold(usize),
}

impl Default for Split {
    fn default() -> Self {
        Split::KFold(5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvplConfig {
    pub k_values: Vec<usize>,
    pub split: Split,
    pub replicates: usize,
    pub seed: u64,
}

impl CvplConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return Err(Error::config("candidate k values must be nonempty and positive"));
        }
        if self.replicates == 0 {
            return Err(Error::config("replicates must be at least 1"));
        }
        match self.split {
            Split::Holdout(f) if !(f > 0.0 && f < 1.0) => {
                Err(Error::config(format!("holdout fraction must lie in (0, 1), got {f}")))
            }
            Split::KFold(folds) if folds < 2 => Err(Error::config("need at least 2 folds")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvplRow {
    pub penalty: PenaltyKind,
    pub lambda: f64,
    pub k: usize,
    pub mean: f64,
    pub std_error: f64,
    /// Individual split scores in evaluation order.
    #[serde(skip)]
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvplTable {
    pub rows: Vec<CvplRow>,
    pub selected_k: usize,
}

/// Held-out score of a `k`-component fit: `(ℓ_obs(test) - λ·P(fitted means)) / N_test`.
pub fn cvpl_score(
    train: &MatrixStack,
    test: &MatrixStack,
    k: usize,
    penalty: &PenaltySpec,
    cfg: &FitConfig,
) -> Result<f64> {
    if (train.rows(), train.cols()) != (test.rows(), test.cols()) {
        return Err(Error::dims("train and test samples have different shapes"));
    }
    let fit = fit_em(train, k, penalty, cfg)?;
    let ll = observed_loglik(test, &fit.model)?;
    Ok((ll - penalty.value(&fit.model)) / test.len() as f64)
}

/// (train, test) index sets for one replicate.
fn splits(n: usize, split: Split, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    match split {
        Split::Holdout(f) => {
            let n_test = ((n as f64) * f).round() as usize;
            if n_test == 0 || n_test >= n {
                return Err(Error::config(format!("holdout fraction {f} leaves an empty side for n={n}")));
            }
            let test = idx[..n_test].to_vec();
            let train = idx[n_test..].to_vec();
            Ok(vec![(train, test)])
        }
        Split::KFold(folds) => {
            if folds > n {
                return Err(Error::config(format!("{folds} folds for {n} samples")));
            }
            Ok((0..folds)
                .map(|f| {
                    let (mut train, mut test) = (Vec::new(), Vec::new());
                    for (pos, &i) in idx.iter().enumerate() {
                        if pos % folds == f {
                            test.push(i)
                        } else {
                            train.push(i)
                        }
                    }
                    (train, test)
                })
                .collect())
        }
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// CVPL for every candidate k; the largest mean wins, ties toward smaller k.
pub fn select_k(stack: &MatrixStack, penalty: &PenaltySpec, sel: &CvplConfig, cfg: &FitConfig) -> Result<CvplTable> {
    sel.validate()?;
    let mut k_values = sel.k_values.clone();
    k_values.sort_unstable();
    k_values.dedup();
    let mut scores: Vec<Vec<f64>> = vec![Vec::new(); k_values.len()];
    for rep in 0..sel.replicates {
        let rep_seed = derive_seed(sel.seed, rep as u64);
        for (fold, (train_idx, test_idx)) in splits(stack.len(), sel.split, rep_seed)?.into_iter().enumerate() {
            let train = stack.select(&train_idx)?;
            let test = stack.select(&test_idx)?;
            let fit_cfg = FitConfig { seed: derive_seed(rep_seed, 1 + fold as u64), ..cfg.clone() };
            for (slot, &k) in k_values.iter().enumerate() {
                scores[slot].push(cvpl_score(&train, &test, k, penalty, &fit_cfg)?);
            }
        }
    }
    let rows: Vec<CvplRow> = k_values
        .iter()
        .zip(scores)
        .map(|(&k, s)| {
            let (mean, std_error) = mean_and_se(&s);
            CvplRow { penalty: penalty.kind, lambda: penalty.lambda, k, mean, std_error, scores: s }
        })
        .collect();
    if let Some(bad) = rows.iter().find(|r| !r.mean.is_finite()) {
        return Err(Error::InvalidData(format!("non-finite CVPL for k={}", bad.k)));
    }
    let mut selected = &rows[0];
    for row in &rows[1..] {
        if row.mean > selected.mean {
            selected = row;
        }
    }
    let selected_k = selected.k;
    Ok(CvplTable { rows, selected_k })
}
