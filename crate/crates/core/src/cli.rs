//! Command-line front end: `fit`, `select-genes`, `classify` and `sweep`.
//!
//! Each subcommand loads its inputs, runs the library pipeline and writes one
//! JSON report. A report is written only when the whole command succeeded.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Result, SdspcaError};
use crate::evaluation::{
    cross_validate, evaluate_split, grid_search, holdout_split, run_dimension_sweep, unit_seed,
    EvalConfig, Method,
};
use crate::io::{
    load_dataset, load_gene_pool, write_matrix, write_report, ClassificationReport, DataSummary,
    Dataset, EvalSettings, FitSummary, HistogramBin, HoldoutReport, LoadOptions, RankedFeature,
    Report, SelectionReport, SummaryRow,
};
use crate::model::{DataMatrix, FitResult, HyperParams, LabelVector};
use crate::selection::{pool_overlap, rank_features, select_top};
use crate::solver::{fit_sdspca, SolverOptions};

/// Row norms below this count as zero in the sparsity summary.
pub const NEAR_ZERO_ROW: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "sdspca", version, about = "Supervised discriminative sparse PCA")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model and report the objective trace and component sparsity.
    Fit(FitArgs),
    /// Fit, rank features by loading norm and keep the top N.
    SelectGenes(SelectArgs),
    /// Cross-validated and/or holdout kNN accuracy at a fixed dimension.
    Classify(ClassifyArgs),
    /// Accuracy across dimensions and/or an alpha-beta exponent grid.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Delimiter {
    Tab,
    Comma,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Expression matrix, features as rows and samples as columns.
    #[arg(long)]
    pub matrix: PathBuf,
    /// CSV/TSV of `sample_id,label` pairs.
    #[arg(long)]
    pub labels: PathBuf,
    /// Report output path (JSON).
    #[arg(long, short = 'o')]
    pub out: PathBuf,
    /// Matrix delimiter; detected from the header line by default.
    #[arg(long, value_enum)]
    pub delimiter: Option<Delimiter>,
    /// The matrix file stores samples as rows.
    #[arg(long)]
    pub transpose: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Weight of the label-fit term (a choice; tune with `sweep --grid`).
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Weight of the row-sparsity term (a choice; tune with `sweep --grid`).
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Number of components.
    #[arg(long, short = 'k', default_value_t = 1)]
    pub k: usize,
    /// Relative objective change that stops the iteration (a choice).
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Iteration cap (a choice).
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Floor on row norms in the reweighting step (a choice).
    #[arg(long, default_value_t = 1e-8)]
    pub epsilon: f64,
    #[arg(long, env = "SDSPCA_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Subtract per-feature means before fitting (off: the objective uses raw X).
    #[arg(long)]
    pub center: bool,
}

impl ModelArgs {
    pub fn hyperparams(&self) -> HyperParams {
        HyperParams {
            alpha: self.alpha,
            beta: self.beta,
            k: self.k,
            tol: self.tol,
            max_iter: self.max_iter,
            epsilon: self.epsilon,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Cross-validation folds.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Neighbour count for the kNN classifier (a choice).
    #[arg(long, default_value_t = 1)]
    pub knn: usize,
    /// Keep class proportions equal across folds.
    #[arg(long)]
    pub stratify: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Also write the component matrix Q (samples x k).
    #[arg(long)]
    pub q_out: Option<PathBuf>,
    /// Also write the loading matrix Y (features x k).
    #[arg(long)]
    pub y_out: Option<PathBuf>,
    /// Log the objective at every iteration.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of top-ranked features to keep.
    #[arg(long, default_value_t = 500)]
    pub n_select: usize,
    /// Gene pool file, one symbol per line.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Match the selection against --pool.
    #[arg(long = "match")]
    pub match_pool: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Fraction of samples held out for a final test; CV runs on the rest.
    /// 0 disables the holdout.
    #[arg(long, default_value_t = 0.0)]
    pub holdout_fraction: f64,
    /// Skip cross-validation (requires a holdout).
    #[arg(long)]
    pub no_cv: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Dimensions to sweep: `a..b` (inclusive) or a comma list.
    #[arg(long, default_value = "1..50")]
    pub dims: String,
    /// Skip the dimension sweep.
    #[arg(long)]
    pub skip_dims: bool,
    /// Also run the alpha-beta grid at --k.
    #[arg(long)]
    pub grid: bool,
    /// Base-10 exponents for alpha: `a..b:step` or a comma list.
    #[arg(long, default_value = "-20..20:5", allow_hyphen_values = true)]
    pub alpha_exps: String,
    /// Base-10 exponents for beta: `a..b:step` or a comma list.
    #[arg(long, default_value = "-20..20:5", allow_hyphen_values = true)]
    pub beta_exps: String,
}

/// Parses `a..b` (inclusive) or `a,b,c`.
pub fn parse_dims(text: &str) -> Result<Vec<usize>> {
    let bad = || SdspcaError::InvalidInput(format!("cannot parse dimension list '{text}'"));
    let text = text.trim();
    let dims: Vec<usize> = if let Some((a, b)) = text.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if dims.is_empty() || dims.contains(&0) {
        return Err(bad());
    }
    Ok(dims)
}

/// Parses `a..b:step` (inclusive, step defaults to 1) or `a,b,c`.
pub fn parse_exponents(text: &str) -> Result<Vec<i32>> {
    let bad = || SdspcaError::InvalidInput(format!("cannot parse exponent list '{text}'"));
    let text = text.trim();
    if let Some((a, rest)) = text.split_once("..") {
        let (b, step) = match rest.split_once(':') {
            Some((b, s)) => (b, s.trim().parse::<i32>().map_err(|_| bad())?),
            None => (rest, 1),
        };
        let a: i32 = a.trim().parse().map_err(|_| bad())?;
        let b: i32 = b.trim().parse().map_err(|_| bad())?;
        if step <= 0 || a > b {
            return Err(bad());
        }
        Ok((a..=b).step_by(step as usize).collect())
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect()
    }
}

fn load_options(input: &InputArgs) -> LoadOptions {
    LoadOptions {
        delimiter: input.delimiter.map(|d| match d {
            Delimiter::Tab => '\t',
            Delimiter::Comma => ',',
        }),
        transpose: input.transpose,
    }
}

fn load(input: &InputArgs) -> Result<(Dataset, LabelVector)> {
    let ds = load_dataset(&input.matrix, Some(&input.labels), &load_options(input))?;
    let labels = ds.labels.clone().expect("labels path was given");
    Ok((ds, labels))
}

fn data_summary(ds: &Dataset, labels: &LabelVector) -> DataSummary {
    DataSummary {
        n_features: ds.matrix.n_features(),
        n_samples: ds.matrix.n_samples(),
        n_classes: labels.class_count(),
        classes: ds.label_names.clone(),
    }
}

fn row_norm_histogram(norms: &[f64]) -> Vec<HistogramBin> {
    let edges = [0.0, 1e-8, 1e-6, 1e-3, 1e-1];
    edges
        .iter()
        .enumerate()
        .map(|(i, &lower)| {
            let upper = edges.get(i + 1).copied();
            let count = norms
                .iter()
                .filter(|&&r| r >= lower && upper.is_none_or(|u| r < u))
                .count();
            HistogramBin {
                lower,
                upper,
                count,
            }
        })
        .collect()
}

fn fit_summary(fit: &FitResult) -> FitSummary {
    let norms = fit.q.row_norms();
    FitSummary {
        objective_trace: fit.objective_trace.clone(),
        final_objective: fit.final_objective(),
        iterations: fit.iterations,
        converged: fit.converged,
        centered: fit.feature_means.is_some(),
        near_zero_rows: norms.iter().filter(|&&r| r < NEAR_ZERO_ROW).count(),
        row_norm_histogram: row_norm_histogram(&norms),
    }
}

fn eval_config(model: &ModelArgs, eval: &EvalArgs, method: Method) -> EvalConfig {
    EvalConfig {
        folds: eval.folds,
        seed: model.seed,
        knn: eval.knn,
        stratify: eval.stratify,
        center: model.center,
        method,
    }
}

fn eval_settings(model: &ModelArgs, eval: &EvalArgs, holdout_fraction: f64) -> EvalSettings {
    EvalSettings {
        folds: eval.folds,
        knn: eval.knn,
        stratify: eval.stratify,
        center: model.center,
        holdout_fraction,
    }
}

fn write_components(path: &PathBuf, values: &nalgebra::DMatrix<f64>, rows: &[String]) -> Result<()> {
    let cols = (1..=values.ncols()).map(|c| format!("pc{c}")).collect();
    let m = DataMatrix::new(values.clone(), rows.to_vec(), cols)?;
    write_matrix(path, &m, '\t')
}

pub fn cmd_fit(args: &FitArgs) -> Result<Report> {
    let (ds, labels) = load(&args.input)?;
    let h = args.model.hyperparams();
    let opts = SolverOptions {
        center: args.model.center,
        verbose: args.verbose,
    };
    let fit = fit_sdspca(&ds.matrix, &labels, &h, &opts)?;
    if let Some(p) = &args.q_out {
        write_components(p, fit.q.values(), ds.matrix.sample_ids())?;
    }
    if let Some(p) = &args.y_out {
        write_components(p, fit.y.values(), ds.matrix.feature_ids())?;
    }
    let mut report = Report::new("fit", h, data_summary(&ds, &labels));
    report.fit = Some(fit_summary(&fit));
    write_report(&report, &args.input.out)?;
    Ok(report)
}

pub fn cmd_select_genes(args: &SelectArgs) -> Result<Report> {
    let pool = match (&args.pool, args.match_pool) {
        (Some(p), _) => Some(load_gene_pool(p)?),
        (None, true) => {
            return Err(SdspcaError::InvalidInput("--match requires --pool".into()));
        }
        (None, false) => None,
    };
    let (ds, labels) = load(&args.input)?;
    if args.n_select > ds.matrix.n_features() {
        return Err(SdspcaError::Range(format!(
            "--n-select {} exceeds the number of features ({})",
            args.n_select,
            ds.matrix.n_features()
        )));
    }
    let h = args.model.hyperparams();
    let opts = SolverOptions {
        center: args.model.center,
        verbose: false,
    };
    let fit = fit_sdspca(&ds.matrix, &labels, &h, &opts)?;
    let ranking = rank_features(&fit.y, ds.matrix.feature_ids())?;
    let selected_ids = select_top(&ranking, args.n_select)?;
    let selected = ranking
        .ordered_indices
        .iter()
        .zip(&ranking.scores)
        .take(args.n_select)
        .enumerate()
        .map(|(r, (&i, &score))| RankedFeature {
            rank: r + 1,
            id: ranking.feature_ids[i].clone(),
            score,
        })
        .collect();
    let overlap = pool.as_ref().map(|p| pool_overlap(&selected_ids, p));

    let mut report = Report::new("select-genes", h, data_summary(&ds, &labels));
    report.fit = Some(fit_summary(&fit));
    report.selection = Some(SelectionReport {
        n_select: args.n_select,
        selected,
        pool_size: pool.as_ref().map(|p| p.len()),
        overlap,
    });
    write_report(&report, &args.input.out)?;
    Ok(report)
}

pub fn cmd_classify(args: &ClassifyArgs) -> Result<Report> {
    if args.no_cv && args.holdout_fraction == 0.0 {
        return Err(SdspcaError::InvalidInput(
            "--no-cv needs a positive --holdout-fraction".into(),
        ));
    }
    let (ds, labels) = load(&args.input)?;
    let h = args.model.hyperparams();
    let cfg = eval_config(&args.model, &args.eval, Method::Sdspca);
    let n = ds.matrix.n_samples();

    let mut classification = ClassificationReport {
        cv: None,
        holdout: None,
    };
    if args.holdout_fraction > 0.0 {
        let strata = args.eval.stratify.then_some(&labels);
        let (rest, hold) = holdout_split(n, args.holdout_fraction, strata, h.seed)?;
        if hold.is_empty() {
            return Err(SdspcaError::Range(format!(
                "holdout fraction {} selects no samples out of {n}",
                args.holdout_fraction
            )));
        }
        if !args.no_cv {
            let sub_x = ds.matrix.select_samples(&rest)?;
            let raw: Vec<usize> = rest.iter().map(|&j| labels.labels()[j]).collect();
            let (sub_labels, _) = LabelVector::compact(&raw)?;
            classification.cv = Some(cross_validate(&sub_x, &sub_labels, &h, &cfg)?);
        }
        let hh = HyperParams {
            seed: unit_seed(h.seed, &[u64::MAX]),
            ..h.clone()
        };
        let acc = evaluate_split(
            &ds.matrix,
            &labels,
            &rest,
            &hold,
            &hh,
            Method::Sdspca,
            cfg.knn,
            cfg.center,
        )?;
        classification.holdout = Some(HoldoutReport {
            n_train: rest.len(),
            n_holdout: hold.len(),
            accuracy: acc,
        });
    } else {
        classification.cv = Some(cross_validate(&ds.matrix, &labels, &h, &cfg)?);
    }

    let mut report = Report::new("classify", h, data_summary(&ds, &labels));
    report.evaluation = Some(eval_settings(&args.model, &args.eval, args.holdout_fraction));
    report.classification = Some(classification);
    write_report(&report, &args.input.out)?;
    Ok(report)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Report> {
    if args.skip_dims && !args.grid {
        return Err(SdspcaError::InvalidInput(
            "--skip-dims without --grid leaves nothing to run".into(),
        ));
    }
    let dims = if args.skip_dims { Vec::new() } else { parse_dims(&args.dims)? };
    let (alpha_exps, beta_exps) = if args.grid {
        (parse_exponents(&args.alpha_exps)?, parse_exponents(&args.beta_exps)?)
    } else {
        (Vec::new(), Vec::new())
    };
    let (ds, labels) = load(&args.input)?;
    let h = args.model.hyperparams();

    let mut report = Report::new("sweep", h.clone(), data_summary(&ds, &labels));
    report.evaluation = Some(eval_settings(&args.model, &args.eval, 0.0));
    if !dims.is_empty() {
        for method in [Method::Sdspca, Method::Pca] {
            let cfg = eval_config(&args.model, &args.eval, method);
            let sweep = run_dimension_sweep(&ds.matrix, &labels, &h, &dims, &cfg)?;
            report.summary.push(SummaryRow {
                method: match method {
                    Method::Sdspca => "SDSPCA".into(),
                    Method::Pca => "PCA".into(),
                },
                average_acc: sweep.average_acc,
                variance: sweep.variance,
            });
            report.sweeps.push(sweep);
        }
    }
    if args.grid {
        let cfg = eval_config(&args.model, &args.eval, Method::Sdspca);
        report.grid = Some(grid_search(
            &ds.matrix,
            &labels,
            &alpha_exps,
            &beta_exps,
            h.k,
            &h,
            &cfg,
        )?);
    }
    write_report(&report, &args.input.out)?;
    Ok(report)
}

/// Dispatches a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a).map(|_| ()),
        Command::SelectGenes(a) => cmd_select_genes(a).map(|_| ()),
        Command::Classify(a) => cmd_classify(a).map(|_| ()),
        Command::Sweep(a) => cmd_sweep(a).map(|_| ()),
    }
}
