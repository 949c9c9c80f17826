//! Delimited-text readers for expression matrices, label files and gene
//! pools, and the JSON report writer.
//!
//! Matrix files are features x samples: the first row is a header cell
//! followed by the sample ids, every later row is a feature id followed by
//! one value per sample. Tab or comma delimited; the delimiter is taken from
//! the first line unless given explicitly. No transformation (log, filtering,
//! scaling) is applied to the values.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdspcaError};
use crate::evaluation::{CvResult, GridResult, SweepResult};
use crate::model::{DataMatrix, HyperParams, LabelVector};
use crate::selection::{GenePool, PoolOverlap};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Field delimiter; detected from the first line when `None`.
    pub delimiter: Option<char>,
    /// The file stores samples as rows and features as columns.
    pub transpose: bool,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| SdspcaError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| SdspcaError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, column: Option<usize>, msg: impl Into<String>) -> SdspcaError {
    SdspcaError::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: msg.into(),
    }
}

fn detect_delimiter(first_line: &str) -> char {
    if first_line.contains('\t') {
        '\t'
    } else if first_line.contains(',') {
        ','
    } else {
        '\t'
    }
}

/// Non-blank lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn load_matrix(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<DataMatrix> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut lines = content_lines(&text);
    let (header_no, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, None, "file is empty"))?;
    let delim = opts.delimiter.unwrap_or_else(|| detect_delimiter(header));

    let columns: Vec<String> = header.split(delim).skip(1).map(|s| s.trim().to_owned()).collect();
    if columns.is_empty() {
        return Err(parse_err(path, header_no, None, "header has no sample columns"));
    }
    let mut seen = HashSet::new();
    for (c, id) in columns.iter().enumerate() {
        if id.is_empty() {
            return Err(parse_err(path, header_no, Some(c + 2), "empty column id"));
        }
        if !seen.insert(id.as_str()) {
            return Err(parse_err(path, header_no, Some(c + 2), format!("duplicate column id '{id}'")));
        }
    }

    let width = columns.len();
    let mut rows: Vec<String> = Vec::new();
    let mut row_seen: HashMap<String, usize> = HashMap::new();
    let mut data: Vec<f64> = Vec::new();
    for (line_no, line) in lines {
        let mut cells = line.split(delim);
        let id = cells.next().unwrap_or("").trim().to_owned();
        if id.is_empty() {
            return Err(parse_err(path, line_no, Some(1), "empty row id"));
        }
        if let Some(first) = row_seen.insert(id.clone(), line_no) {
            return Err(parse_err(
                path,
                line_no,
                Some(1),
                format!("duplicate row id '{id}' (first seen on line {first})"),
            ));
        }
        let mut count = 0;
        for (c, cell) in cells.enumerate() {
            count += 1;
            if count > width {
                continue;
            }
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| {
                parse_err(path, line_no, Some(c + 2), format!("'{cell}' is not a number"))
            })?;
            if !v.is_finite() {
                return Err(parse_err(path, line_no, Some(c + 2), format!("non-finite value '{cell}'")));
            }
            data.push(v);
        }
        if count != width {
            return Err(parse_err(
                path,
                line_no,
                None,
                format!("row '{id}' has {count} values, header has {width}"),
            ));
        }
        rows.push(id);
    }
    if rows.is_empty() {
        return Err(parse_err(path, header_no, None, "no data rows"));
    }

    let values = DMatrix::from_row_slice(rows.len(), width, &data);
    if opts.transpose {
        DataMatrix::new(values.transpose(), columns, rows)
    } else {
        DataMatrix::new(values, rows, columns)
    }
}

/// Writes the matrix in the layout [`load_matrix`] reads, every value with 17
/// significant digits.
pub fn write_matrix(path: impl AsRef<Path>, matrix: &DataMatrix, delimiter: char) -> Result<()> {
    let mut out = String::new();
    out.push_str("feature");
    for s in matrix.sample_ids() {
        out.push(delimiter);
        out.push_str(s);
    }
    out.push('\n');
    let v = matrix.values();
    for (i, f) in matrix.feature_ids().iter().enumerate() {
        out.push_str(f);
        for j in 0..matrix.n_samples() {
            out.push(delimiter);
            write!(out, "{:.16e}", v[(i, j)]).unwrap();
        }
        out.push('\n');
    }
    write_text(path.as_ref(), &out)
}

/// Labels aligned to a matrix's samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub labels: LabelVector,
    /// Original label string of each class id.
    pub label_names: BTreeMap<usize, String>,
}

/// Reads `sample_id,label` pairs and aligns them to `sample_ids`.
///
/// Class ids are assigned in order of first appearance along `sample_ids`,
/// so the file's own row order does not matter. A first line whose id is not
/// a known sample is taken as a header.
pub fn load_labels(path: impl AsRef<Path>, sample_ids: &[String]) -> Result<LabelSet> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let known: HashSet<&str> = sample_ids.iter().map(String::as_str).collect();
    let mut by_sample: HashMap<String, (String, usize)> = HashMap::new();
    let mut delim = None;
    for (idx, (line_no, line)) in content_lines(&text).enumerate() {
        let d = *delim.get_or_insert_with(|| detect_delimiter(line));
        let fields: Vec<&str> = line.split(d).map(str::trim).collect();
        if fields.len() != 2 {
            return Err(parse_err(
                path,
                line_no,
                None,
                format!("expected 2 fields (sample id, label), found {}", fields.len()),
            ));
        }
        let (id, label) = (fields[0], fields[1]);
        if idx == 0 && !known.contains(id) {
            continue;
        }
        if !known.contains(id) {
            return Err(parse_err(path, line_no, Some(1), format!("unknown sample id '{id}'")));
        }
        if label.is_empty() {
            return Err(parse_err(path, line_no, Some(2), "empty label"));
        }
        if let Some((_, first)) = by_sample.insert(id.to_owned(), (label.to_owned(), line_no)) {
            return Err(parse_err(
                path,
                line_no,
                Some(1),
                format!("sample '{id}' listed twice (first on line {first})"),
            ));
        }
    }

    let missing: Vec<&str> = sample_ids
        .iter()
        .filter(|s| !by_sample.contains_key(s.as_str()))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(SdspcaError::InvalidInput(format!(
            "{}: no label for sample(s) {}",
            path.display(),
            missing.join(", ")
        )));
    }

    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut label_names = BTreeMap::new();
    let mut labels = Vec::with_capacity(sample_ids.len());
    for s in sample_ids {
        let name = by_sample[s.as_str()].0.as_str();
        let next = ids.len() + 1;
        let id = *ids.entry(name).or_insert_with(|| {
            label_names.insert(next, name.to_owned());
            next
        });
        labels.push(id);
    }
    let c = ids.len();
    Ok(LabelSet {
        labels: LabelVector::new(labels, c)?,
        label_names,
    })
}

/// One symbol per line; blank lines and `#` comments skipped, duplicates
/// collapsed.
pub fn load_gene_pool(path: impl AsRef<Path>) -> Result<GenePool> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let symbols: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    if symbols.is_empty() {
        return Err(SdspcaError::InvalidInput(format!(
            "{}: gene pool is empty",
            path.display()
        )));
    }
    GenePool::new(symbols)
}

pub fn write_gene_pool(path: impl AsRef<Path>, pool: &GenePool) -> Result<()> {
    let mut out = String::new();
    for s in pool.symbols() {
        out.push_str(s);
        out.push('\n');
    }
    write_text(path.as_ref(), &out)
}

/// A matrix with optional aligned labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub matrix: DataMatrix,
    pub labels: Option<LabelVector>,
    pub label_names: BTreeMap<usize, String>,
}

pub fn load_dataset(
    matrix_path: impl AsRef<Path>,
    labels_path: Option<&Path>,
    opts: &LoadOptions,
) -> Result<Dataset> {
    let matrix = load_matrix(matrix_path, opts)?;
    let (labels, label_names) = match labels_path {
        Some(p) => {
            let set = load_labels(p, matrix.sample_ids())?;
            (Some(set.labels), set.label_names)
        }
        None => (None, BTreeMap::new()),
    };
    Ok(Dataset {
        matrix,
        labels,
        label_names,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n_features: usize,
    pub n_samples: usize,
    pub n_classes: usize,
    /// Class id to original label string.
    pub classes: BTreeMap<usize, String>,
}

/// Count of component rows whose norm falls in `[lower, upper)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    /// `None` for the open-ended top bin.
    pub upper: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub objective_trace: Vec<f64>,
    pub final_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub centered: bool,
    pub row_norm_histogram: Vec<HistogramBin>,
    /// Rows of `Q` with norm below 1e-3.
    pub near_zero_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub rank: usize,
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub n_select: usize,
    pub selected: Vec<RankedFeature>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap: Option<PoolOverlap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub folds: usize,
    pub knn: usize,
    pub stratify: bool,
    pub center: bool,
    pub holdout_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutReport {
    pub n_train: usize,
    pub n_holdout: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout: Option<HoldoutReport>,
}

/// One row of the method comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub average_acc: f64,
    pub variance: f64,
}

/// Self-describing run report. Field order is fixed by declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub hyperparameters: HyperParams,
    pub data: DataSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvalSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweeps: Vec<SweepResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub summary: Vec<SummaryRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridResult>,
}

impl Report {
    pub fn new(command: &str, hyperparameters: HyperParams, data: DataSummary) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.to_owned(),
            seed: hyperparameters.seed,
            hyperparameters,
            data,
            evaluation: None,
            fit: None,
            selection: None,
            classification: None,
            sweeps: Vec::new(),
            summary: Vec::new(),
            grid: None,
        }
    }
}

pub fn report_to_string(report: &Report) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|source| SdspcaError::Json {
        path: PathBuf::from("<report>"),
        source,
    })?;
    s.push('\n');
    Ok(s)
}

pub fn write_report(report: &Report, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = report_to_string(report).map_err(|e| match e {
        SdspcaError::Json { source, .. } => SdspcaError::Json {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })?;
    write_text(path, &text)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Report> {
    let path = path.as_ref();
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| SdspcaError::Json {
        path: path.to_path_buf(),
        source,
    })
}
