//! Supervised discriminative sparse PCA.
//!
//! Learns an orthonormal, row-sparse sample embedding `Q` (`n x k`) from a
//! features x samples matrix `X` and class labels by minimizing
//!
//! ```text
//! ‖X - YQᵀ‖²_F + α‖B - AQᵀ‖²_F + β‖Q‖₂,₁   subject to QᵀQ = I
//! ```
//!
//! where `B` is the one-hot class indicator. The solver alternates a dense
//! symmetric eigendecomposition for `Q` with closed-form updates of `Y`, `A`
//! and the L2,1 reweighting matrix. Around it sit feature ranking and
//! selection, a kNN classification harness with cross-validation, file
//! readers and the `sdspca` command-line tool.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod model;
pub mod selection;
pub mod solver;

pub use error::{Result, SdspcaError};
pub use model::{
    build_indicator, l21_norm, objective, objective_terms, ClassIndicator, DataMatrix, FitResult,
    HyperParams, LabelVector, Loadings, ObjectiveTerms, SparseComponents, TransformMatrix,
    WeightDiag,
};
pub use solver::{
    fit_pca, fit_sdspca, fit_sdspca_observed, sym_eig_smallest, update_a, update_q, update_v,
    update_y, EigRequest, IterationState, SolverOptions,
};
