//! Feature ranking from loadings, top-N selection and gene-pool matching.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result, SdspcaError};
use crate::model::{row_norms, Loadings};

/// Features ordered by descending loading magnitude.
///
/// `ordered_indices` are 0-based row indices into the loadings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub ordered_indices: Vec<usize>,
    pub scores: Vec<f64>,
    pub feature_ids: Vec<String>,
}

impl FeatureRanking {
    pub fn len(&self) -> usize {
        self.ordered_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordered_indices.is_empty()
    }

    /// Ids in rank order.
    pub fn ranked_ids(&self) -> impl Iterator<Item = &str> {
        self.ordered_indices.iter().map(|&i| self.feature_ids[i].as_str())
    }
}

/// Scores each feature by the Euclidean norm of its loading row.
///
/// Ties keep ascending feature index.
pub fn rank_features(y: &Loadings, feature_ids: &[String]) -> Result<FeatureRanking> {
    let m = y.values().nrows();
    if feature_ids.len() != m {
        return Err(shape_err(format!(
            "{} feature ids for {m} loading rows",
            feature_ids.len()
        )));
    }
    let norms = row_norms(y.values());
    let mut order: Vec<usize> = (0..m).collect();
    // stable sort keeps index order among equal scores
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let scores = order.iter().map(|&i| norms[i]).collect();
    Ok(FeatureRanking {
        ordered_indices: order,
        scores,
        feature_ids: feature_ids.to_vec(),
    })
}

/// First `n_select` ids of the ranking.
pub fn select_top(ranking: &FeatureRanking, n_select: usize) -> Result<Vec<String>> {
    if n_select == 0 {
        return Err(SdspcaError::Range("n_select must be >= 1".into()));
    }
    if n_select > ranking.len() {
        return Err(SdspcaError::Range(format!(
            "cannot select {n_select} features out of {}",
            ranking.len()
        )));
    }
    Ok(ranking.ranked_ids().take(n_select).map(str::to_owned).collect())
}

/// Reference set of gene symbols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenePool {
    symbols: BTreeSet<String>,
}

impl GenePool {
    pub fn new<I, S>(symbols: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let symbols: BTreeSet<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.is_empty() {
            return Err(SdspcaError::InvalidInput("gene pool is empty".into()));
        }
        Ok(Self { symbols })
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.symbols.contains(symbol)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &BTreeSet<String> {
        &self.symbols
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolOverlap {
    pub matched: Vec<String>,
    pub count: usize,
}

/// Selected ids found in the pool, in selection order. Case-sensitive.
pub fn pool_overlap(selected: &[String], pool: &GenePool) -> PoolOverlap {
    let matched: Vec<String> = selected
        .iter()
        .filter(|s| pool.contains(s))
        .cloned()
        .collect();
    PoolOverlap {
        count: matched.len(),
        matched,
    }
}
