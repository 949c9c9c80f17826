//! Alternating eigendecomposition / reweighting solver and the classical PCA
//! baseline it reduces to when both weights vanish.
//!
//! Each iteration solves `min Tr(Qᵀ Z Q)` subject to `QᵀQ = I` with
//! `Z = -XᵀX - αBᵀB + βV`, takes the closed-form `Y = XQ` and `A = BQ`, and
//! refreshes `V_ii = 1 / (2 max(‖q_i‖, ε))`.

use log::debug;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result, SdspcaError};
use crate::model::{
    build_indicator, objective_terms, ClassIndicator, DataMatrix, FitResult, HyperParams,
    LabelVector, Loadings, SparseComponents, TransformMatrix, WeightDiag,
};

/// Relative magnitudes closer than this count as a tie in the sign rule.
const SIGN_TIE_RTOL: f64 = 1e-12;
/// Tolerated asymmetry of `Z`, relative to `max(1, max |z|)`.
const SYMMETRY_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Subtract per-feature means before fitting.
    pub center: bool,
    /// Log the objective at every iteration.
    pub verbose: bool,
}

/// Symmetric matrix plus the number of smallest eigenpairs wanted.
#[derive(Debug, Clone)]
pub struct EigRequest {
    z: DMatrix<f64>,
    k: usize,
}

impl EigRequest {
    pub fn new(z: DMatrix<f64>, k: usize) -> Result<Self> {
        let (n, cols) = z.shape();
        if n != cols {
            return Err(shape_err(format!("Z must be square, got {n}x{cols}")));
        }
        if k == 0 || k > n {
            return Err(shape_err(format!(
                "requested k = {k} eigenvectors from a {n}x{n} matrix"
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(SdspcaError::Numeric("Z has non-finite entries".into()));
        }
        let scale = z.amax().max(1.0);
        let asym = (&z - z.transpose()).amax();
        if asym > SYMMETRY_RTOL * scale {
            return Err(SdspcaError::InvalidInput(format!(
                "Z is not symmetric (max asymmetry {asym:e})"
            )));
        }
        Ok(Self { z, k })
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// Eigenvectors of the `k` algebraically smallest eigenvalues, ascending.
pub fn sym_eig_smallest(req: &EigRequest) -> Result<SparseComponents> {
    sym_eig_smallest_pairs(req).map(|(_, q)| q)
}

/// Like [`sym_eig_smallest`], also returning the eigenvalues.
///
/// Every column is sign-normalized so that its largest-magnitude entry is
/// positive; near-ties in magnitude go to the lowest row index.
pub fn sym_eig_smallest_pairs(req: &EigRequest) -> Result<(Vec<f64>, SparseComponents)> {
    let n = req.z.nrows();
    // exact symmetry for the solver; the request already bounded the asymmetry
    let z = (&req.z + req.z.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(z, f64::EPSILON, 100 * n.max(10))
        .ok_or_else(|| SdspcaError::Numeric("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));

    let mut q = DMatrix::zeros(n, req.k);
    let mut values = Vec::with_capacity(req.k);
    for (col, &src) in order.iter().take(req.k).enumerate() {
        values.push(eig.eigenvalues[src]);
        let v = eig.eigenvectors.column(src);
        let sign = if v[pivot_index(v.as_slice())] < 0.0 { -1.0 } else { 1.0 };
        q.set_column(col, &(v * sign));
    }
    Ok((values, SparseComponents::new(q)?))
}

fn pivot_index(v: &[f64]) -> usize {
    let max = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    v.iter()
        .position(|x| x.abs() >= max * (1.0 - SIGN_TIE_RTOL))
        .unwrap_or(0)
}

/// `-XᵀX - αBᵀB`, exactly symmetric. Zero weights skip their term entirely.
fn base_matrix(x: &DMatrix<f64>, b: Option<&DMatrix<f64>>, alpha: f64) -> DMatrix<f64> {
    let mut z = -x.tr_mul(x);
    if let (Some(b), true) = (b, alpha != 0.0) {
        z -= b.tr_mul(b) * alpha;
    }
    let zt = z.transpose();
    (z + zt) * 0.5
}

fn add_weights(mut z: DMatrix<f64>, beta: f64, v: &WeightDiag) -> DMatrix<f64> {
    if beta != 0.0 {
        for (i, w) in v.diag().iter().enumerate() {
            z[(i, i)] += beta * w;
        }
    }
    z
}

/// Solves the `Q` subproblem for fixed reweighting `V`.
pub fn update_q(
    x: &DataMatrix,
    b: &ClassIndicator,
    v: &WeightDiag,
    h: &HyperParams,
) -> Result<SparseComponents> {
    let n = x.n_samples();
    if b.n_samples() != n || v.len() != n {
        return Err(shape_err(format!(
            "X has {n} samples, B has {}, V has {}",
            b.n_samples(),
            v.len()
        )));
    }
    let z = add_weights(base_matrix(x.values(), Some(b.values()), h.alpha), h.beta, v);
    sym_eig_smallest(&EigRequest::new(z, h.k)?)
}

/// `Y = XQ`.
pub fn update_y(x: &DataMatrix, q: &SparseComponents) -> Result<Loadings> {
    if q.n_samples() != x.n_samples() {
        return Err(shape_err(format!(
            "Q has {} rows, X has {} samples",
            q.n_samples(),
            x.n_samples()
        )));
    }
    Loadings::new(x.values() * q.values())
}

/// `A = BQ`.
pub fn update_a(b: &ClassIndicator, q: &SparseComponents) -> Result<TransformMatrix> {
    if q.n_samples() != b.n_samples() {
        return Err(shape_err(format!(
            "Q has {} rows, B has {} columns",
            q.n_samples(),
            b.n_samples()
        )));
    }
    TransformMatrix::new(b.values() * q.values())
}

/// `V_ii = 1 / (2 max(‖q_i‖, ε))`.
pub fn update_v(q: &SparseComponents, epsilon: f64) -> WeightDiag {
    let diag = q
        .row_norms()
        .into_iter()
        .map(|r| 1.0 / (2.0 * r.max(epsilon)))
        .collect();
    WeightDiag::new(diag).expect("epsilon floor keeps weights positive")
}

/// Snapshot handed to a fit observer after each `Q, Y, A, V` sweep.
#[derive(Debug)]
pub struct IterationState<'a> {
    /// 0 for the first solve from `V = I`, then 1, 2, ...
    pub iteration: usize,
    pub q: &'a SparseComponents,
    pub y: &'a Loadings,
    pub a: &'a TransformMatrix,
    pub v: &'a WeightDiag,
    pub objective: f64,
}

pub fn fit_sdspca(
    x: &DataMatrix,
    labels: &LabelVector,
    h: &HyperParams,
    opts: &SolverOptions,
) -> Result<FitResult> {
    fit_sdspca_observed(x, labels, h, opts, |_| {})
}

/// [`fit_sdspca`] with a callback invoked after every sweep.
pub fn fit_sdspca_observed<F>(
    x: &DataMatrix,
    labels: &LabelVector,
    h: &HyperParams,
    opts: &SolverOptions,
    mut observer: F,
) -> Result<FitResult>
where
    F: FnMut(&IterationState<'_>),
{
    h.validate()?;
    let n = x.n_samples();
    if labels.len() != n {
        return Err(shape_err(format!(
            "{} labels for {n} samples",
            labels.len()
        )));
    }
    if h.k > n {
        return Err(shape_err(format!(
            "k = {} exceeds the number of samples n = {n}",
            h.k
        )));
    }

    let (x, feature_means) = if opts.center {
        let means = x.feature_means();
        (x.subtract_feature_means(&means)?, Some(means))
    } else {
        (x.clone(), None)
    };
    let b = build_indicator(labels)?;
    let xv = x.values();
    let bv = b.values();
    let base = base_matrix(xv, Some(bv), h.alpha);

    // A's starting value never enters Z; it is drawn only so that a seed
    // fully determines the initial state.
    let mut rng = ChaCha8Rng::seed_from_u64(h.seed);
    let _initial_a = TransformMatrix::new(DMatrix::from_fn(b.class_count(), h.k, |_, _| {
        rng.random_range(-1.0..1.0)
    }))?;
    let mut v = WeightDiag::identity(n);

    let sweep = |iteration: usize, v: &WeightDiag| -> Result<_> {
        let z = add_weights(base.clone(), h.beta, v);
        let q = sym_eig_smallest(&EigRequest::new(z, h.k)?)?;
        let y = update_y(&x, &q)?;
        let a = update_a(&b, &q)?;
        let v_next = update_v(&q, h.epsilon);
        let obj = objective_terms(xv, bv, q.values(), y.values(), a.values(), h.alpha, h.beta)?
            .total();
        if !obj.is_finite() {
            return Err(SdspcaError::Divergence {
                iteration,
                value: obj,
            });
        }
        if opts.verbose {
            debug!("iteration {iteration}: objective {obj:.12e}");
        }
        Ok((q, y, a, v_next, obj))
    };

    let (mut q, mut y, mut a, v0, obj0) = sweep(0, &v)?;
    v = v0;
    observer(&IterationState {
        iteration: 0,
        q: &q,
        y: &y,
        a: &a,
        v: &v,
        objective: obj0,
    });

    let mut trace = vec![obj0];
    let mut converged = false;
    let mut iterations = 0;
    for t in 1..=h.max_iter {
        let (q_t, y_t, a_t, v_t, obj) = sweep(t, &v)?;
        q = q_t;
        y = y_t;
        a = a_t;
        v = v_t;
        iterations = t;
        observer(&IterationState {
            iteration: t,
            q: &q,
            y: &y,
            a: &a,
            v: &v,
            objective: obj,
        });
        let prev = *trace.last().unwrap();
        trace.push(obj);
        if (prev - obj).abs() / prev.abs().max(1.0) <= h.tol {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        q,
        y,
        a,
        objective_trace: trace,
        iterations,
        converged,
        feature_means,
    })
}

/// Classical PCA in the `min ‖X - YQᵀ‖²_F, QᵀQ = I` form.
///
/// Solved as the smallest-eigenvalue problem on `-XᵀX`, i.e. the same path
/// the supervised solver takes with both weights at zero.
pub fn fit_pca(x: &DataMatrix, k: usize, center: bool) -> Result<(Loadings, SparseComponents)> {
    let (m, n) = (x.n_features(), x.n_samples());
    if k == 0 || k > m.min(n) {
        return Err(shape_err(format!(
            "k = {k} must satisfy 1 <= k <= min(m, n) = {}",
            m.min(n)
        )));
    }
    let centered;
    let x = if center {
        centered = x.subtract_feature_means(&x.feature_means())?;
        &centered
    } else {
        x
    };
    let z = base_matrix(x.values(), None, 0.0);
    let q = sym_eig_smallest(&EigRequest::new(z, k)?)?;
    let y = update_y(x, &q)?;
    Ok((y, q))
}
