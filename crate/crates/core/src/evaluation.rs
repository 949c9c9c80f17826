//! Out-of-sample projection, kNN classification and the cross-validated
//! accuracy harness (dimension sweeps and α/β grids).
//!
//! Every work unit (one fold at one dimension, one grid cell) derives its own
//! seed from the master seed and its coordinates, so results do not depend on
//! the order in which rayon schedules them.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result, SdspcaError};
use crate::model::{DataMatrix, HyperParams, LabelVector, Loadings};
use crate::solver::{fit_pca, fit_sdspca, SolverOptions};

/// Singular values at or below this fraction of the largest count as zero.
pub const RANK_RTOL: f64 = 1e-10;

/// Least-squares embedding of unseen samples against fixed loadings.
#[derive(Debug, Clone)]
pub struct Projector {
    pinv: DMatrix<f64>,
    rank_deficient: bool,
}

impl Projector {
    pub fn new(y: &Loadings) -> Result<Self> {
        let yv = y.values();
        let (m, k) = yv.shape();
        if m == 0 || k == 0 {
            return Err(shape_err(format!("cannot project onto {m}x{k} loadings")));
        }
        let svd = yv.clone().svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(SdspcaError::Numeric("SVD of loadings failed".into())),
        };
        let sigma = &svd.singular_values;
        let smax = sigma.max();
        let cutoff = RANK_RTOL * smax;
        let rank_deficient = sigma.len() < k || smax == 0.0 || sigma.min() <= cutoff;
        // pinv = V Σ⁺ Uᵀ
        let inv = sigma.map(|s| if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 });
        let pinv = v_t.transpose() * DMatrix::from_diagonal(&inv) * u.transpose();
        Ok(Self {
            pinv,
            rank_deficient,
        })
    }

    /// True when the minimum-norm fallback is in effect.
    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.pinv.ncols() {
            return Err(shape_err(format!(
                "sample has {} features, loadings have {}",
                x.len(),
                self.pinv.ncols()
            )));
        }
        Ok(&self.pinv * x)
    }

    /// Embeds every column of `x` (`m x n_test`), returning `n_test x k`.
    pub fn project_samples(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.pinv.ncols() {
            return Err(shape_err(format!(
                "samples have {} features, loadings have {}",
                x.nrows(),
                self.pinv.ncols()
            )));
        }
        Ok((&self.pinv * x).transpose())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coords: DVector<f64>,
    /// Set when the loadings were numerically rank deficient and the
    /// minimum-norm solution was returned.
    pub rank_deficient: bool,
}

/// Least-squares `q` with `Y q ≈ x`.
pub fn project_oos(y: &Loadings, x: &DVector<f64>) -> Result<Projection> {
    let p = Projector::new(y)?;
    if p.rank_deficient() {
        warn!("loadings are numerically rank deficient; using the minimum-norm solution");
    }
    Ok(Projection {
        coords: p.project(x)?,
        rank_deficient: p.rank_deficient(),
    })
}

/// Euclidean kNN with majority vote.
///
/// Equal distances prefer the lower training index. Tied votes go to the
/// class whose nearest neighbour is closest, then to the smaller class id.
pub fn knn_predict(
    train_embed: &DMatrix<f64>,
    train_labels: &[usize],
    test_embed: &DMatrix<f64>,
    k_nn: usize,
) -> Result<Vec<usize>> {
    let n_train = train_embed.nrows();
    if n_train == 0 {
        return Err(SdspcaError::InvalidInput("kNN training set is empty".into()));
    }
    if train_labels.len() != n_train {
        return Err(shape_err(format!(
            "{} training labels for {n_train} training points",
            train_labels.len()
        )));
    }
    if k_nn == 0 || k_nn > n_train {
        return Err(SdspcaError::Range(format!(
            "k_nn = {k_nn} must be in 1..={n_train}"
        )));
    }
    if test_embed.ncols() != train_embed.ncols() {
        return Err(shape_err(format!(
            "test embedding has {} dims, training has {}",
            test_embed.ncols(),
            train_embed.ncols()
        )));
    }

    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n_train);
    let mut out = Vec::with_capacity(test_embed.nrows());
    for t in test_embed.row_iter() {
        dist.clear();
        dist.extend(
            train_embed
                .row_iter()
                .enumerate()
                .map(|(i, r)| ((r - t).norm_squared(), i)),
        );
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        // class -> (votes, nearest distance)
        let mut votes: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
        for &(d, i) in &dist[..k_nn] {
            let e = votes.entry(train_labels[i]).or_insert((0, d));
            e.0 += 1;
        }
        let winner = votes
            .iter()
            .min_by(|(ca, (va, da)), (cb, (vb, db))| {
                vb.cmp(va).then(da.total_cmp(db)).then(ca.cmp(cb))
            })
            .map(|(&c, _)| c)
            .expect("at least one vote");
        out.push(winner);
    }
    Ok(out)
}

/// Fraction of positions where `pred` and `truth` agree.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(shape_err(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(SdspcaError::InvalidInput("accuracy of an empty prediction set".into()));
    }
    let hits = pred.iter().zip(truth).filter(|(p, q)| p == q).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Mean of per-dimension accuracies.
pub fn average_accuracy(acc_per_dim: &[f64]) -> Result<f64> {
    if acc_per_dim.is_empty() {
        return Err(SdspcaError::InvalidInput("average of an empty accuracy list".into()));
    }
    Ok(acc_per_dim.iter().sum::<f64>() / acc_per_dim.len() as f64)
}

/// Population variance (divides by the count).
pub fn population_variance(values: &[f64]) -> Result<f64> {
    let mean = average_accuracy(values)?;
    Ok(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64)
}

/// Fold id (1-based) of every sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold_of_sample: Vec<usize>,
    pub fold_count: usize,
}

impl FoldAssignment {
    /// `(training, validation)` sample indices for 1-based `fold`.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut valid = Vec::new();
        for (j, &f) in self.fold_of_sample.iter().enumerate() {
            if f == fold {
                valid.push(j);
            } else {
                train.push(j);
            }
        }
        (train, valid)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.fold_count];
        for &f in &self.fold_of_sample {
            sizes[f - 1] += 1;
        }
        sizes
    }

    /// Size of the smallest training set over all folds.
    pub fn min_training_size(&self) -> usize {
        let n = self.fold_of_sample.len();
        n - self.fold_sizes().into_iter().max().unwrap_or(0)
    }
}

/// Seeded random partition into `folds` near-equal folds.
///
/// With `strata`, samples are shuffled within each class and dealt round-robin
/// so every fold sees a proportional share of each class.
pub fn kfold_split(
    n: usize,
    folds: usize,
    strata: Option<&LabelVector>,
    seed: u64,
) -> Result<FoldAssignment> {
    if folds == 0 {
        return Err(SdspcaError::Range("fold count must be >= 1".into()));
    }
    if folds > n {
        return Err(SdspcaError::Range(format!(
            "cannot split {n} samples into {folds} folds"
        )));
    }
    let order = shuffled_order(n, strata, seed)?;
    let mut fold_of_sample = vec![0; n];
    for (pos, &j) in order.iter().enumerate() {
        fold_of_sample[j] = pos % folds + 1;
    }
    Ok(FoldAssignment {
        fold_of_sample,
        fold_count: folds,
    })
}

/// Seeded `(remaining, holdout)` split with `round(fraction * n)` held out.
pub fn holdout_split(
    n: usize,
    fraction: f64,
    strata: Option<&LabelVector>,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(SdspcaError::Range(format!(
            "holdout fraction must be in [0, 1), got {fraction}"
        )));
    }
    let n_hold = (fraction * n as f64).round() as usize;
    if n_hold >= n {
        return Err(SdspcaError::Range(format!(
            "holdout of {n_hold} leaves no training samples out of {n}"
        )));
    }
    let order = shuffled_order(n, strata, seed ^ 0x686f_6c64_6f75_7400)?;
    // stratified order is round-robin across classes, so a prefix is balanced
    let mut hold: Vec<usize> = order[..n_hold].to_vec();
    let mut rest: Vec<usize> = order[n_hold..].to_vec();
    hold.sort_unstable();
    rest.sort_unstable();
    Ok((rest, hold))
}

fn shuffled_order(n: usize, strata: Option<&LabelVector>, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match strata {
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            Ok(order)
        }
        Some(labels) => {
            if labels.len() != n {
                return Err(shape_err(format!("{} labels for {n} samples", labels.len())));
            }
            let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); labels.class_count()];
            for (j, &s) in labels.labels().iter().enumerate() {
                per_class[s - 1].push(j);
            }
            for members in &mut per_class {
                members.shuffle(&mut rng);
            }
            Ok(per_class.into_iter().flatten().collect())
        }
    }
}

/// Which embedding the harness evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sdspca,
    Pca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub folds: usize,
    pub seed: u64,
    /// Neighbour count for the classifier.
    pub knn: usize,
    pub stratify: bool,
    /// Center with training-fold means before fitting and projecting.
    pub center: bool,
    pub method: Method,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 0,
            knn: 1,
            stratify: false,
            center: false,
            method: Method::Sdspca,
        }
    }
}

/// SplitMix64 finalizer over the master seed and unit coordinates.
pub fn unit_seed(master: u64, coords: &[u64]) -> u64 {
    let mut h = master;
    for &c in coords {
        h = h
            .wrapping_add(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(c.wrapping_mul(0xbf58_476d_1ce4_e5b9));
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

/// Fits on `train`, classifies `test` and returns the accuracy.
///
/// Training samples are embedded as the rows of the learned components;
/// test samples by least squares against the learned loadings.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_split(
    x: &DataMatrix,
    labels: &LabelVector,
    train: &[usize],
    test: &[usize],
    h: &HyperParams,
    method: Method,
    knn: usize,
    center: bool,
) -> Result<f64> {
    if labels.len() != x.n_samples() {
        return Err(shape_err(format!(
            "{} labels for {} samples",
            labels.len(),
            x.n_samples()
        )));
    }
    let mut x_train = x.select_samples(train)?;
    let mut x_test = x.select_samples(test)?;
    if center {
        let means = x_train.feature_means();
        x_train = x_train.subtract_feature_means(&means)?;
        x_test = x_test.subtract_feature_means(&means)?;
    }
    let train_raw: Vec<usize> = train.iter().map(|&j| labels.labels()[j]).collect();
    let test_truth: Vec<usize> = test.iter().map(|&j| labels.labels()[j]).collect();

    let (y, q) = match method {
        Method::Sdspca => {
            let (compact, _) = LabelVector::compact(&train_raw)?;
            let fit = fit_sdspca(&x_train, &compact, h, &SolverOptions::default())?;
            (fit.y, fit.q)
        }
        Method::Pca => fit_pca(&x_train, h.k, false)?,
    };
    let projector = Projector::new(&y)?;
    if projector.rank_deficient() {
        warn!("rank-deficient loadings at k = {}; test samples use the minimum-norm embedding", h.k);
    }
    let test_embed = projector.project_samples(x_test.values())?;
    let pred = knn_predict(q.values(), &train_raw, &test_embed, knn)?;
    accuracy(&pred, &test_truth)
}

/// Cross-validated accuracy at a single dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub k: usize,
    pub fold_acc: Vec<f64>,
    pub mean_acc: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub method: Method,
    pub dims: Vec<usize>,
    pub acc_per_dim: Vec<f64>,
    /// `fold_acc[d][f]` is the validation accuracy of fold `f + 1` at `dims[d]`.
    pub fold_acc: Vec<Vec<f64>>,
    pub average_acc: f64,
    /// Population variance of `acc_per_dim`.
    pub variance: f64,
}

/// Cross-validated accuracy for every `k` in `dims`.
///
/// `template` supplies everything but `k` and `seed`; each fold at each
/// dimension gets a seed derived from `cfg.seed`.
pub fn run_dimension_sweep(
    x: &DataMatrix,
    labels: &LabelVector,
    template: &HyperParams,
    dims: &[usize],
    cfg: &EvalConfig,
) -> Result<SweepResult> {
    if dims.is_empty() {
        return Err(SdspcaError::InvalidInput("dimension list is empty".into()));
    }
    if labels.len() != x.n_samples() {
        return Err(shape_err(format!(
            "{} labels for {} samples",
            labels.len(),
            x.n_samples()
        )));
    }
    let folds = kfold_split(
        x.n_samples(),
        cfg.folds,
        cfg.stratify.then_some(labels),
        cfg.seed,
    )?;
    let min_train = folds.min_training_size();
    let max_dim = *dims.iter().max().unwrap();
    if dims.contains(&0) {
        return Err(SdspcaError::Range("dimensions must be >= 1".into()));
    }
    if max_dim > min_train {
        return Err(SdspcaError::Range(format!(
            "dimension {max_dim} exceeds the smallest training fold ({min_train} samples)"
        )));
    }

    let units: Vec<(usize, usize)> = (0..dims.len())
        .flat_map(|d| (1..=cfg.folds).map(move |f| (d, f)))
        .collect();
    let accs: Vec<Result<f64>> = units
        .par_iter()
        .map(|&(d, f)| {
            let (train, valid) = folds.split(f);
            let h = HyperParams {
                k: dims[d],
                seed: unit_seed(cfg.seed, &[dims[d] as u64, f as u64]),
                ..template.clone()
            };
            evaluate_split(x, labels, &train, &valid, &h, cfg.method, cfg.knn, cfg.center)
        })
        .collect();

    let mut fold_acc = vec![Vec::with_capacity(cfg.folds); dims.len()];
    for ((d, _), acc) in units.iter().zip(accs) {
        fold_acc[*d].push(acc?);
    }
    let acc_per_dim: Vec<f64> = fold_acc
        .iter()
        .map(|f| average_accuracy(f))
        .collect::<Result<_>>()?;
    Ok(SweepResult {
        method: cfg.method,
        dims: dims.to_vec(),
        average_acc: average_accuracy(&acc_per_dim)?,
        variance: population_variance(&acc_per_dim)?,
        acc_per_dim,
        fold_acc,
    })
}

/// Cross-validated accuracy at `template.k`.
pub fn cross_validate(
    x: &DataMatrix,
    labels: &LabelVector,
    template: &HyperParams,
    cfg: &EvalConfig,
) -> Result<CvResult> {
    let sweep = run_dimension_sweep(x, labels, template, &[template.k], cfg)?;
    let fold_acc = sweep.fold_acc.into_iter().next().unwrap();
    Ok(CvResult {
        k: template.k,
        mean_acc: sweep.acc_per_dim[0],
        variance: population_variance(&fold_acc)?,
        fold_acc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub alpha_exp: i32,
    pub beta_exp: i32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub alpha_exponents: Vec<i32>,
    pub beta_exponents: Vec<i32>,
    pub k: usize,
    /// `acc_grid[i][j]` is the mean CV accuracy at `α = 10^alpha_exponents[i]`,
    /// `β = 10^beta_exponents[j]`; failed cells hold 0.
    pub acc_grid: Vec<Vec<f64>>,
    pub failures: Vec<CellFailure>,
}

/// Mean CV accuracy over the `α = 10^a`, `β = 10^b` grid at dimension `k`.
///
/// A cell whose fit fails (typically numeric divergence at extreme weights)
/// scores 0 and is listed in `failures`; the rest of the grid still runs.
pub fn grid_search(
    x: &DataMatrix,
    labels: &LabelVector,
    alpha_exps: &[i32],
    beta_exps: &[i32],
    k: usize,
    template: &HyperParams,
    cfg: &EvalConfig,
) -> Result<GridResult> {
    if alpha_exps.is_empty() || beta_exps.is_empty() {
        return Err(SdspcaError::InvalidInput("grid exponent lists must be non-empty".into()));
    }
    let folds = kfold_split(
        x.n_samples(),
        cfg.folds,
        cfg.stratify.then_some(labels),
        cfg.seed,
    )?;
    if k == 0 || k > folds.min_training_size() {
        return Err(SdspcaError::Range(format!(
            "k = {k} must be in 1..={}",
            folds.min_training_size()
        )));
    }

    let cells: Vec<(usize, usize)> = (0..alpha_exps.len())
        .flat_map(|i| (0..beta_exps.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<f64>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let h = HyperParams {
                alpha: 10f64.powi(alpha_exps[i]),
                beta: 10f64.powi(beta_exps[j]),
                k,
                ..template.clone()
            };
            let cell_cfg = EvalConfig {
                method: Method::Sdspca,
                ..cfg.clone()
            };
            run_dimension_sweep(x, labels, &h, &[k], &cell_cfg).map(|s| s.acc_per_dim[0])
        })
        .collect();

    let mut acc_grid = vec![vec![0.0; beta_exps.len()]; alpha_exps.len()];
    let mut failures = Vec::new();
    for (&(i, j), r) in cells.iter().zip(results) {
        match r {
            Ok(acc) => acc_grid[i][j] = acc,
            Err(e) => failures.push(CellFailure {
                alpha_exp: alpha_exps[i],
                beta_exp: beta_exps[j],
                message: e.to_string(),
            }),
        }
    }
    Ok(GridResult {
        alpha_exponents: alpha_exps.to_vec(),
        beta_exponents: beta_exps.to_vec(),
        k,
        acc_grid,
        failures,
    })
}
