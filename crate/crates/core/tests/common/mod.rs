//! Test-only oracles written on plain `Vec<Vec<f64>>` with scalar loops and a
//! cyclic Jacobi eigensolver, independent of the nalgebra-backed library.

#![allow(dead_code, clippy::needless_range_loop, clippy::too_many_arguments)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn to_vec(m: &DMatrix<f64>) -> Mat {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn to_dmatrix(m: &Mat) -> DMatrix<f64> {
    let rows = m.len();
    let cols = if rows == 0 { 0 } else { m[0].len() };
    DMatrix::from_fn(rows, cols, |i, j| m[i][j])
}

pub fn zeros(rows: usize, cols: usize) -> Mat {
    vec![vec![0.0; cols]; rows]
}

pub fn transpose(a: &Mat) -> Mat {
    let rows = a.len();
    let cols = a[0].len();
    let mut t = zeros(cols, rows);
    for i in 0..rows {
        for j in 0..cols {
            t[j][i] = a[i][j];
        }
    }
    t
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let inner = b.len();
    let p = b[0].len();
    let mut c = zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            let mut s = 0.0;
            for l in 0..inner {
                s += a[i][l] * b[l][j];
            }
            c[i][j] = s;
        }
    }
    c
}

pub fn sub(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x - y).collect())
        .collect()
}

pub fn frob_sq(a: &Mat) -> f64 {
    a.iter().flatten().map(|v| v * v).sum()
}

pub fn row_norm(r: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in r {
        s += v * v;
    }
    s.sqrt()
}

pub fn l21(a: &Mat) -> f64 {
    let mut total = 0.0;
    for r in a {
        total += row_norm(r);
    }
    total
}

pub fn trace(a: &Mat) -> f64 {
    (0..a.len()).map(|i| a[i][i]).sum()
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues ascending and the matching eigenvectors as columns.
pub fn jacobi_eigh(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.len();
    let mut a = a.clone();
    let mut v = zeros(n, n);
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[i][j] * a[i][j];
                }
            }
        }
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>() + off;
        if off <= 1e-30 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap());
    let vals = idx.iter().map(|&i| a[i][i]).collect();
    let mut vecs = zeros(n, n);
    for (col, &src) in idx.iter().enumerate() {
        for r in 0..n {
            vecs[r][col] = v[r][src];
        }
    }
    (vals, vecs)
}

/// First `k` columns.
pub fn take_cols(a: &Mat, k: usize) -> Mat {
    a.iter().map(|r| r[..k].to_vec()).collect()
}

/// Sine of the largest principal angle between the column spans of two
/// orthonormal frames: `‖(I - AAᵀ) B‖₂`.
pub fn max_principal_sine(a: &Mat, b: &Mat) -> f64 {
    let at_b = matmul(&transpose(a), b);
    let proj = matmul(a, &at_b);
    let resid = sub(b, &proj);
    let gram = matmul(&transpose(&resid), &resid);
    let (vals, _) = jacobi_eigh(&gram);
    vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Gram-Schmidt (twice) on Gaussian columns.
pub fn random_frame(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Mat {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    while cols.len() < k {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for _ in 0..2 {
            for c in &cols {
                let d: f64 = v.iter().zip(c).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(c) {
                    *x -= d * y;
                }
            }
        }
        let nrm = row_norm(&v);
        if nrm > 1e-8 {
            cols.push(v.into_iter().map(|x| x / nrm).collect());
        }
    }
    let mut out = zeros(n, k);
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            out[i][j] = c[i];
        }
    }
    out
}

pub fn indicator(labels: &[usize], c: usize) -> Mat {
    let mut b = zeros(c, labels.len());
    for (j, &s) in labels.iter().enumerate() {
        b[s - 1][j] = 1.0;
    }
    b
}

/// Direct evaluation of the three objective terms.
pub fn objective_oracle(x: &Mat, b: &Mat, q: &Mat, y: &Mat, a: &Mat, alpha: f64, beta: f64) -> f64 {
    let qt = transpose(q);
    frob_sq(&sub(x, &matmul(y, &qt))) + alpha * frob_sq(&sub(b, &matmul(a, &qt))) + beta * l21(q)
}

/// Result of the reference iteration.
pub struct OracleFit {
    pub q: Mat,
    pub trace: Vec<f64>,
}

/// Reference implementation of the alternating iteration: `Z`, smallest
/// eigenvectors, `Y = XQ`, `A = BQ`, `V_ii = 1/(2 max(‖q_i‖, ε))`, starting
/// from `V = I` and stopping on relative change `<= tol`.
pub fn iteration_oracle(
    x: &Mat,
    labels: &[usize],
    c: usize,
    k: usize,
    alpha: f64,
    beta: f64,
    tol: f64,
    max_iter: usize,
    eps: f64,
) -> OracleFit {
    let n = x[0].len();
    let b = indicator(labels, c);
    let xtx = matmul(&transpose(x), x);
    let btb = matmul(&transpose(&b), &b);
    let mut v = vec![1.0; n];
    let mut trace = Vec::new();
    let mut q_last = zeros(n, k);
    for _ in 0..=max_iter {
        let mut z = zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                z[i][j] = -xtx[i][j] - alpha * btb[i][j];
            }
            z[i][i] += beta * v[i];
        }
        let (_, vecs) = jacobi_eigh(&z);
        let q = take_cols(&vecs, k);
        let y = matmul(x, &q);
        let a = matmul(&b, &q);
        for i in 0..n {
            v[i] = 1.0 / (2.0 * row_norm(&q[i]).max(eps));
        }
        let obj = objective_oracle(x, &b, &q, &y, &a, alpha, beta);
        q_last = q;
        if let Some(&prev) = trace.last() {
            trace.push(obj);
            let prev: f64 = prev;
            if (prev - obj).abs() / prev.abs().max(1.0) <= tol {
                break;
            }
        } else {
            trace.push(obj);
        }
    }
    OracleFit { q: q_last, trace }
}

/// Squared distance brute-force kNN with the documented tie rules.
pub fn knn_oracle(train: &Mat, labels: &[usize], test: &Mat, k: usize) -> Vec<usize> {
    test.iter()
        .map(|t| {
            let mut d: Vec<(f64, usize)> = train
                .iter()
                .enumerate()
                .map(|(i, r)| (r.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum(), i))
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let neigh = &d[..k];
            let mut classes: Vec<usize> = neigh.iter().map(|&(_, i)| labels[i]).collect();
            classes.sort();
            classes.dedup();
            let mut best: Option<(usize, f64, usize)> = None;
            for c in classes {
                let votes = neigh.iter().filter(|&&(_, i)| labels[i] == c).count();
                let nearest = neigh
                    .iter()
                    .filter(|&&(_, i)| labels[i] == c)
                    .map(|&(dd, _)| dd)
                    .fold(f64::INFINITY, f64::min);
                let better = match best {
                    None => true,
                    Some((bv, bd, bc)) => {
                        votes > bv || (votes == bv && (nearest < bd || (nearest == bd && c < bc)))
                    }
                };
                if better {
                    best = Some((votes, nearest, c));
                }
            }
            best.unwrap().2
        })
        .collect()
}

/// Three-class Gaussian blobs: `informative` leading features carry class
/// means drawn as `separation * N(0, 1)`, every entry gets unit noise.
/// Returns `(features x samples, labels)`.
pub fn gaussian_blobs(
    seed: u64,
    m: usize,
    informative: usize,
    per_class: usize,
    classes: usize,
    separation: f64,
) -> (DMatrix<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            (0..informative)
                .map(|_| separation * r.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let n = per_class * classes;
    let mut x = DMatrix::zeros(m, n);
    let mut labels = Vec::with_capacity(n);
    for j in 0..n {
        let c = j % classes;
        labels.push(c + 1);
        for i in 0..m {
            let mean = if i < informative { centers[c][i] } else { 0.0 };
            x[(i, j)] = mean + r.sample::<f64, _>(StandardNormal);
        }
    }
    (x, labels)
}
