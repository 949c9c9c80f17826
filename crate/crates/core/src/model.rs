//! Typed model objects and the objective they are scored by.
//!
//! Dimensions follow one convention throughout the crate: the data matrix is
//! `m` features by `n` samples, the component matrix `Q` is `n x k` (one row
//! per sample), the loadings `Y = XQ` are `m x k`, the indicator `B` is
//! `c x n` and the label transform `A = BQ` is `c x k`.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result, SdspcaError};

/// Largest tolerated entry of `QᵀQ - I` for a component matrix.
pub const ORTHONORMALITY_TOL: f64 = 1e-8;

/// Raw expression matrix, features as rows and samples as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    feature_ids: Vec<String>,
    sample_ids: Vec<String>,
}

impl DataMatrix {
    pub fn new(
        values: DMatrix<f64>,
        feature_ids: Vec<String>,
        sample_ids: Vec<String>,
    ) -> Result<Self> {
        let (m, n) = values.shape();
        if m == 0 || n == 0 {
            return Err(shape_err(format!(
                "data matrix must be non-empty, got {m}x{n}"
            )));
        }
        if feature_ids.len() != m {
            return Err(shape_err(format!(
                "{} feature ids for {m} matrix rows",
                feature_ids.len()
            )));
        }
        if sample_ids.len() != n {
            return Err(shape_err(format!(
                "{} sample ids for {n} matrix columns",
                sample_ids.len()
            )));
        }
        if let Some((idx, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            // column-major storage
            return Err(SdspcaError::InvalidInput(format!(
                "non-finite value {v} at feature {} sample {}",
                idx % m + 1,
                idx / m + 1
            )));
        }
        check_unique(&feature_ids, "feature")?;
        check_unique(&sample_ids, "sample")?;
        Ok(Self {
            values,
            feature_ids,
            sample_ids,
        })
    }

    /// Wraps a matrix with generated ids `f1..fm` and `s1..sn`.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        let (m, n) = values.shape();
        let features = (1..=m).map(|i| format!("f{i}")).collect();
        let samples = (1..=n).map(|j| format!("s{j}")).collect();
        Self::new(values, features, samples)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn n_features(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }

    /// Column subset, in the order given.
    pub fn select_samples(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(shape_err("sample selection is empty"));
        }
        if let Some(&bad) = indices.iter().find(|&&j| j >= self.n_samples()) {
            return Err(shape_err(format!(
                "sample index {bad} out of range for {} samples",
                self.n_samples()
            )));
        }
        let values = self.values.select_columns(indices);
        let sample_ids = indices.iter().map(|&j| self.sample_ids[j].clone()).collect();
        Self::new(values, self.feature_ids.clone(), sample_ids)
    }

    /// Per-feature means across samples.
    pub fn feature_means(&self) -> DVector<f64> {
        self.values.column_mean()
    }

    /// Copy with `means` subtracted from every sample column.
    pub fn subtract_feature_means(&self, means: &DVector<f64>) -> Result<Self> {
        if means.len() != self.n_features() {
            return Err(shape_err(format!(
                "{} means for {} features",
                means.len(),
                self.n_features()
            )));
        }
        let mut values = self.values.clone();
        for mut col in values.column_iter_mut() {
            col -= means;
        }
        Ok(Self {
            values,
            feature_ids: self.feature_ids.clone(),
            sample_ids: self.sample_ids.clone(),
        })
    }

    pub fn transpose(&self) -> Self {
        Self {
            values: self.values.transpose(),
            feature_ids: self.sample_ids.clone(),
            sample_ids: self.feature_ids.clone(),
        }
    }
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(SdspcaError::InvalidInput(format!(
                "duplicate {what} id '{id}'"
            )));
        }
    }
    Ok(())
}

/// One label per sample, 1-based class ids in `1..=class_count`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    labels: Vec<usize>,
    class_count: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if class_count == 0 {
            return Err(SdspcaError::InvalidLabel("class count must be >= 1".into()));
        }
        if labels.len() < class_count {
            return Err(SdspcaError::InvalidLabel(format!(
                "{} samples cannot cover {class_count} classes",
                labels.len()
            )));
        }
        let mut present = vec![false; class_count];
        for (j, &s) in labels.iter().enumerate() {
            if s == 0 || s > class_count {
                return Err(SdspcaError::InvalidLabel(format!(
                    "label {s} of sample {} outside 1..={class_count}",
                    j + 1
                )));
            }
            present[s - 1] = true;
        }
        if let Some(missing) = present.iter().position(|p| !p) {
            return Err(SdspcaError::InvalidLabel(format!(
                "class {} has no samples",
                missing + 1
            )));
        }
        Ok(Self {
            labels,
            class_count,
        })
    }

    /// Labels with `class_count` inferred as the largest label.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let c = labels.iter().copied().max().unwrap_or(0);
        Self::new(labels, c)
    }

    /// Relabels arbitrary positive ids onto `1..=c` in ascending id order.
    ///
    /// Returns the compacted vector along with the original id of each
    /// compact class (`originals[c - 1]`).
    pub fn compact(raw: &[usize]) -> Result<(Self, Vec<usize>)> {
        let mut originals: Vec<usize> = raw.to_vec();
        originals.sort_unstable();
        originals.dedup();
        let labels = raw
            .iter()
            .map(|s| originals.binary_search(s).map(|i| i + 1).unwrap())
            .collect();
        Ok((Self::new(labels, originals.len())?, originals))
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// One-hot class indicator `B`, `c x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassIndicator(DMatrix<f64>);

impl ClassIndicator {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn class_count(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.0.ncols()
    }
}

/// Builds `B` with `B[i][j] = 1` iff sample `j` carries class `i + 1`.
pub fn build_indicator(labels: &LabelVector) -> Result<ClassIndicator> {
    let c = labels.class_count();
    let n = labels.len();
    let mut b = DMatrix::zeros(c, n);
    for (j, &s) in labels.labels().iter().enumerate() {
        if s == 0 || s > c {
            return Err(SdspcaError::InvalidLabel(format!(
                "label {s} of sample {} outside 1..={c}",
                j + 1
            )));
        }
        b[(s - 1, j)] = 1.0;
    }
    Ok(ClassIndicator(b))
}

/// Sample embedding `Q` (`n x k`) with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseComponents(DMatrix<f64>);

impl SparseComponents {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (n, k) = values.shape();
        if k == 0 || k > n {
            return Err(shape_err(format!(
                "component matrix must have 1 <= k <= n, got {n}x{k}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SdspcaError::Numeric("component matrix has non-finite entries".into()));
        }
        let err = orthonormality_error(&values);
        if err > ORTHONORMALITY_TOL {
            return Err(SdspcaError::Numeric(format!(
                "component columns are not orthonormal (max |QᵀQ - I| = {err:e})"
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn n_samples(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    /// Euclidean norm of each row.
    pub fn row_norms(&self) -> Vec<f64> {
        row_norms(&self.0)
    }
}

/// Max-abs entry of `QᵀQ - I`.
pub fn orthonormality_error(q: &DMatrix<f64>) -> f64 {
    let gram = q.tr_mul(q);
    let k = gram.nrows();
    let mut worst = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Feature loadings `Y = XQ`, `m x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Loadings(DMatrix<f64>);

impl Loadings {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SdspcaError::Numeric("loadings have non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Label transform `A`, `c x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMatrix(DMatrix<f64>);

impl TransformMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SdspcaError::Numeric("transform has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Diagonal of the reweighting matrix `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDiag(Vec<f64>);

impl WeightDiag {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if let Some(v) = diag.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(SdspcaError::Numeric(format!(
                "reweighting entries must be positive and finite, got {v}"
            )));
        }
        Ok(Self(diag))
    }

    /// `V = I`.
    pub fn identity(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn diag(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Weight of the label-fit term.
    pub alpha: f64,
    /// Weight of the row-sparsity term.
    pub beta: f64,
    /// Number of components.
    pub k: usize,
    /// Relative objective change that counts as converged.
    pub tol: f64,
    pub max_iter: usize,
    /// Floor on row norms when forming the reweighting matrix.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            k: 1,
            tol: 1e-6,
            max_iter: 100,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(SdspcaError::InvalidInput(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(SdspcaError::InvalidInput(format!(
                "beta must be finite and >= 0, got {}",
                self.beta
            )));
        }
        if self.k == 0 {
            return Err(SdspcaError::InvalidInput("k must be >= 1".into()));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(SdspcaError::InvalidInput(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(SdspcaError::InvalidInput("max_iter must be >= 1".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(SdspcaError::InvalidInput(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Output of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub q: SparseComponents,
    pub y: Loadings,
    pub a: TransformMatrix,
    /// Objective at the first iterate followed by one entry per reweighting
    /// iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Means subtracted from the data before fitting, when centering was on.
    pub feature_means: Option<DVector<f64>>,
}

impl FitResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

/// Sum of row-wise Euclidean norms. Empty matrices give 0.
pub fn l21_norm(m: &DMatrix<f64>) -> f64 {
    row_norms(m).iter().sum()
}

pub(crate) fn row_norms(m: &DMatrix<f64>) -> Vec<f64> {
    m.row_iter().map(|r| r.norm()).collect()
}

/// The three weighted terms of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    pub reconstruction: f64,
    pub label_fit: f64,
    pub sparsity: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.label_fit + self.sparsity
    }
}

/// `‖X - YQᵀ‖²_F`, `α‖B - AQᵀ‖²_F` and `β‖Q‖₂,₁` on raw matrices.
///
/// `b` is not required to be a valid indicator here.
pub fn objective_terms(
    x: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    y: &DMatrix<f64>,
    a: &DMatrix<f64>,
    alpha: f64,
    beta: f64,
) -> Result<ObjectiveTerms> {
    let (m, n) = x.shape();
    let k = q.ncols();
    let c = b.nrows();
    if q.nrows() != n {
        return Err(shape_err(format!("Q has {} rows, X has {n} columns", q.nrows())));
    }
    if y.shape() != (m, k) {
        return Err(shape_err(format!("Y is {:?}, expected ({m}, {k})", y.shape())));
    }
    if b.ncols() != n {
        return Err(shape_err(format!("B has {} columns, X has {n}", b.ncols())));
    }
    if a.shape() != (c, k) {
        return Err(shape_err(format!("A is {:?}, expected ({c}, {k})", a.shape())));
    }
    let reconstruction = (x - y * q.transpose()).norm_squared();
    let label_fit = if alpha == 0.0 {
        0.0
    } else {
        alpha * (b - a * q.transpose()).norm_squared()
    };
    let sparsity = if beta == 0.0 { 0.0 } else { beta * l21_norm(q) };
    Ok(ObjectiveTerms {
        reconstruction,
        label_fit,
        sparsity,
    })
}

/// `‖X - YQᵀ‖²_F + α‖B - AQᵀ‖²_F + β‖Q‖₂,₁`.
pub fn objective(
    x: &DataMatrix,
    b: &ClassIndicator,
    q: &SparseComponents,
    y: &Loadings,
    a: &TransformMatrix,
    h: &HyperParams,
) -> Result<f64> {
    objective_terms(
        x.values(),
        b.values(),
        q.values(),
        y.values(),
        a.values(),
        h.alpha,
        h.beta,
    )
    .map(|t| t.total())
}
