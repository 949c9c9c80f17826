mod common;

use common::*;
use nalgebra::DMatrix;
use sdspca::{
    build_indicator, fit_pca, fit_sdspca, fit_sdspca_observed, sym_eig_smallest, update_a, update_q,
    update_v, update_y, DataMatrix, EigRequest, HyperParams, LabelVector, SolverOptions,
    SparseComponents, WeightDiag,
};

fn data(x: &DMatrix<f64>) -> DataMatrix {
    DataMatrix::from_values(x.clone()).unwrap()
}

fn hp(alpha: f64, beta: f64, k: usize) -> HyperParams {
    HyperParams {
        alpha,
        beta,
        k,
        ..HyperParams::default()
    }
}

/// Flip each column so its largest-magnitude entry (lowest index on ties) is positive.
fn sign_fix(q: &mut Mat) {
    let k = q[0].len();
    for j in 0..k {
        let big = q.iter().map(|r| r[j].abs()).fold(0.0, f64::max);
        let lead = q.iter().position(|r| r[j].abs() >= big * (1.0 - 1e-12)).unwrap();
        if q[lead][j] < 0.0 {
            for r in q.iter_mut() {
                r[j] = -r[j];
            }
        }
    }
}

fn max_abs_diff(a: &DMatrix<f64>, b: &Mat) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            d = d.max((a[(i, j)] - b[i][j]).abs());
        }
    }
    d
}

#[test]
fn smallest_eigenpairs_match_jacobi() {
    let mut r = rng(101);
    let g = to_vec(&gaussian(&mut r, 6, 6));
    let z = sub(&matmul(&transpose(&g), &g), &matmul(&g, &transpose(&g)));
    // symmetric but indefinite
    let z: Mat = (0..6).map(|i| (0..6).map(|j| z[i][j] + z[j][i] + g[i][j] + g[j][i]).collect()).collect();
    let (want_vals, want_vecs) = jacobi_eigh(&z);
    let req = EigRequest::new(to_dmatrix(&z), 3).unwrap();
    let (vals, q) = sdspca::solver::sym_eig_smallest_pairs(&req).unwrap();
    for i in 0..3 {
        assert!((vals[i] - want_vals[i]).abs() <= 1e-10 * want_vals[i].abs().max(1.0));
    }
    let sine = max_principal_sine(&to_vec(q.values()), &take_cols(&want_vecs, 3));
    assert!(sine <= 1e-8, "principal angle sine {sine}");
}

#[test]
fn eig_rejects_asymmetric_and_bad_k() {
    let mut z = DMatrix::<f64>::identity(3, 3);
    z[(0, 1)] = 1.0;
    assert!(EigRequest::new(z, 1).is_err());
    assert!(EigRequest::new(DMatrix::identity(3, 3), 0).is_err());
    assert!(EigRequest::new(DMatrix::identity(3, 3), 4).is_err());
}

#[test]
fn update_q_without_penalties_spans_top_right_singular_vectors() {
    let mut r = rng(2);
    let x = gaussian(&mut r, 8, 5);
    let labels = LabelVector::new(vec![1, 2, 1, 2, 1], 2).unwrap();
    let b = build_indicator(&labels).unwrap();
    let q = update_q(&data(&x), &b, &WeightDiag::identity(5), &hp(0.0, 0.0, 2)).unwrap();
    let svd = x.clone().svd(false, true);
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].partial_cmp(&svd.singular_values[i]).unwrap());
    let vt = svd.v_t.unwrap();
    let top: Mat = (0..5).map(|row| order[..2].iter().map(|&c| vt[(c, row)]).collect()).collect();
    assert!(max_principal_sine(&to_vec(q.values()), &top) <= 1e-8);
}

#[test]
fn update_q_matches_explicit_assembly() {
    let mut r = rng(3);
    let x = gaussian(&mut r, 5, 4);
    let lab = [1, 2, 2, 1];
    let labels = LabelVector::new(lab.to_vec(), 2).unwrap();
    let b = build_indicator(&labels).unwrap();
    let (alpha, beta) = (0.5, 0.3);
    let q = update_q(&data(&x), &b, &WeightDiag::identity(4), &hp(alpha, beta, 2)).unwrap();

    let xv = to_vec(&x);
    let bo = indicator(&lab, 2);
    let xtx = matmul(&transpose(&xv), &xv);
    let btb = matmul(&transpose(&bo), &bo);
    let z: Mat = (0..4)
        .map(|i| (0..4).map(|j| -xtx[i][j] - alpha * btb[i][j] + if i == j { beta } else { 0.0 }).collect())
        .collect();
    let (_, vecs) = jacobi_eigh(&z);
    let mut want = take_cols(&vecs, 2);
    sign_fix(&mut want);
    assert!(max_abs_diff(q.values(), &want) <= 1e-9);
}

#[test]
fn returned_eigenvectors_follow_sign_convention() {
    let mut r = rng(4);
    for _ in 0..20 {
        let g = to_vec(&gaussian(&mut r, 5, 5));
        let z: Mat = (0..5).map(|i| (0..5).map(|j| g[i][j] + g[j][i]).collect()).collect();
        let q = sym_eig_smallest(&EigRequest::new(to_dmatrix(&z), 3).unwrap()).unwrap();
        let mut fixed = to_vec(q.values());
        sign_fix(&mut fixed);
        assert_eq!(max_abs_diff(q.values(), &fixed), 0.0);
    }
}

#[test]
fn update_y_and_a_match_matmul() {
    let mut r = rng(6);
    let x = gaussian(&mut r, 4, 3);
    let q = SparseComponents::new(to_dmatrix(&random_frame(&mut r, 3, 2))).unwrap();
    let y = update_y(&data(&x), &q).unwrap();
    let want = matmul(&to_vec(&x), &to_vec(q.values()));
    assert!(max_abs_diff(y.values(), &want) <= 1e-12);

    let lab = [2, 1, 2];
    let b = build_indicator(&LabelVector::new(lab.to_vec(), 2).unwrap()).unwrap();
    let a = update_a(&b, &q).unwrap();
    let want = matmul(&indicator(&lab, 2), &to_vec(q.values()));
    assert!(max_abs_diff(a.values(), &want) <= 1e-12);
}

#[test]
fn full_rank_q_reconstructs_x() {
    let mut r = rng(7);
    let x = gaussian(&mut r, 6, 4);
    let q = SparseComponents::new(to_dmatrix(&random_frame(&mut r, 4, 4))).unwrap();
    let y = update_y(&data(&x), &q).unwrap();
    let recon = y.values() * q.values().transpose();
    assert!((recon - &x).abs().max() <= 1e-12);
}

#[test]
fn update_v_matches_row_formula() {
    let mut r = rng(9);
    let qv = random_frame(&mut r, 5, 2);
    let q = SparseComponents::new(to_dmatrix(&qv)).unwrap();
    // a large epsilon exercises the floor
    for &eps in &[1e-8, 0.9] {
        let v = update_v(&q, eps);
        for (i, row) in qv.iter().enumerate() {
            let want = 1.0 / (2.0 * row_norm(row).max(eps));
            assert!((v.diag()[i] - want).abs() <= 1e-12 * want);
        }
    }
}

#[test]
fn pca_is_exact_on_rank_k_data() {
    let mut r = rng(12);
    let u = gaussian(&mut r, 9, 2);
    let w = gaussian(&mut r, 2, 6);
    let x = &u * &w;
    let (y, q) = fit_pca(&data(&x), 2, false).unwrap();
    let recon = y.values() * q.values().transpose();
    assert!((recon - &x).norm() <= 1e-10 * x.norm());
}

#[test]
fn pca_residual_matches_svd_truncation() {
    let mut r = rng(13);
    let x = gaussian(&mut r, 10, 7);
    let k = 3;
    let (y, q) = fit_pca(&data(&x), k, false).unwrap();
    let resid = (&x - y.values() * q.values().transpose()).norm_squared();
    let (vals, _) = jacobi_eigh(&matmul(&transpose(&to_vec(&x)), &to_vec(&x)));
    let tail: f64 = vals[..7 - k].iter().sum();
    assert!((resid - tail).abs() <= 1e-10 * frob_sq(&to_vec(&x)));
}

#[test]
fn zero_penalties_give_pca_objective() {
    let mut r = rng(14);
    let x = gaussian(&mut r, 8, 6);
    let labels = LabelVector::new(vec![1, 2, 3, 1, 2, 3], 3).unwrap();
    let fit = fit_sdspca(&data(&x), &labels, &hp(0.0, 0.0, 2), &SolverOptions::default()).unwrap();
    let xv = to_vec(&x);
    let (vals, _) = jacobi_eigh(&matmul(&transpose(&xv), &xv));
    let want = frob_sq(&xv) - vals[4] - vals[5];
    assert!((fit.final_objective() - want).abs() <= 1e-10 * frob_sq(&xv));
    assert!(fit.converged);
    assert_eq!(fit.iterations, 1);
    let (_, q_pca) = fit_pca(&data(&x), 2, false).unwrap();
    assert_eq!(fit.q.values(), q_pca.values());
}

#[test]
fn fit_matches_reference_iteration() {
    let mut r = rng(15);
    let x = gaussian(&mut r, 7, 9);
    let lab: Vec<usize> = (0..9).map(|j| j % 3 + 1).collect();
    let labels = LabelVector::new(lab.clone(), 3).unwrap();
    let h = HyperParams {
        tol: 1e-9,
        max_iter: 50,
        ..hp(0.8, 1.5, 2)
    };
    let fit = fit_sdspca(&data(&x), &labels, &h, &SolverOptions::default()).unwrap();
    let oracle = iteration_oracle(&to_vec(&x), &lab, 3, 2, 0.8, 1.5, 1e-9, 50, 1e-8);
    assert_eq!(fit.objective_trace.len(), oracle.trace.len());
    for (a, b) in fit.objective_trace.iter().zip(&oracle.trace) {
        assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "{a} vs {b}");
    }
    assert!(max_principal_sine(&to_vec(fit.q.values()), &oracle.q) <= 1e-6);
}

#[test]
fn fit_is_deterministic() {
    let mut r = rng(16);
    let x = gaussian(&mut r, 10, 8);
    let labels = LabelVector::new((0..8).map(|j| j % 2 + 1).collect(), 2).unwrap();
    let h = HyperParams { seed: 99, ..hp(2.0, 0.5, 3) };
    let a = fit_sdspca(&data(&x), &labels, &h, &SolverOptions::default()).unwrap();
    let b = fit_sdspca(&data(&x), &labels, &h, &SolverOptions::default()).unwrap();
    assert_eq!(a, b);
    // the seed only drives the discarded initial A
    let c = fit_sdspca(&data(&x), &labels, &HyperParams { seed: 5, ..h }, &SolverOptions::default()).unwrap();
    assert_eq!(a.objective_trace, c.objective_trace);
}

#[test]
fn sample_permutation_permutes_q_rows() {
    let mut r = rng(17);
    let n = 8;
    let x = gaussian(&mut r, 9, n);
    let lab: Vec<usize> = (0..n).map(|j| j % 2 + 1).collect();
    let perm = [5, 2, 7, 0, 3, 6, 1, 4];
    let xp = DMatrix::from_fn(9, n, |i, j| x[(i, perm[j])]);
    let lp: Vec<usize> = perm.iter().map(|&j| lab[j]).collect();
    let h = HyperParams { tol: 1e-12, ..hp(1.0, 0.5, 2) };
    let opts = SolverOptions::default();
    let f = fit_sdspca(&data(&x), &LabelVector::new(lab, 2).unwrap(), &h, &opts).unwrap();
    let g = fit_sdspca(&data(&xp), &LabelVector::new(lp, 2).unwrap(), &h, &opts).unwrap();
    assert_eq!(f.objective_trace.len(), g.objective_trace.len());
    for (a, b) in f.objective_trace.iter().zip(&g.objective_trace) {
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }
    let qp: Mat = perm.iter().map(|&j| f.q.values().row(j).iter().copied().collect()).collect();
    assert!(max_principal_sine(&qp, &to_vec(g.q.values())) <= 1e-8);
}

#[test]
fn observer_sees_every_trace_entry() {
    let mut r = rng(18);
    let x = gaussian(&mut r, 6, 6);
    let labels = LabelVector::new(vec![1, 1, 2, 2, 3, 3], 3).unwrap();
    let mut seen = Vec::new();
    let fit = fit_sdspca_observed(&data(&x), &labels, &hp(1.0, 1.0, 2), &SolverOptions::default(), |s| {
        seen.push((s.iteration, s.objective))
    })
    .unwrap();
    let objs: Vec<f64> = seen.iter().map(|s| s.1).collect();
    assert_eq!(objs, fit.objective_trace);
    assert!(seen.iter().enumerate().all(|(i, s)| s.0 == i));
}

#[test]
fn extreme_weights_do_not_panic() {
    let mut r = rng(19);
    let x = gaussian(&mut r, 5, 6);
    let labels = LabelVector::new(vec![1, 2, 1, 2, 1, 2], 2).unwrap();
    for &(a, b) in &[(1e-20, 1e20), (1e20, 1e-20), (1e20, 1e20)] {
        match fit_sdspca(&data(&x), &labels, &hp(a, b, 2), &SolverOptions::default()) {
            Ok(fit) => assert!(fit.objective_trace.iter().all(|v| v.is_finite())),
            Err(e) => assert!(!e.to_string().is_empty()),
        }
    }
}

#[test]
fn fit_rejects_k_above_n() {
    let x = DMatrix::from_element(3, 4, 1.0);
    let labels = LabelVector::new(vec![1, 2, 1, 2], 2).unwrap();
    let err = fit_sdspca(&data(&x), &labels, &hp(1.0, 1.0, 5), &SolverOptions::default()).unwrap_err();
    assert!(err.to_string().contains('5'), "{err}");
}
