use std::collections::BTreeMap;

use super::stats::pearson;
use super::SimError;
use crate::knn::Index;
use crate::model::Dataset;
use crate::selection::SelectionPlan;
use crate::uncertainty::{score_dataset, Scorer};

/// Pearson correlation between each target point's uncertainty and the mean
/// uncertainty of its k nearest source points.
pub fn neighborhood_uncertainty_correlation(
    source: &Dataset,
    targets: &Dataset,
    k: usize,
    scorer: Scorer,
) -> Result<f64, SimError> {
    if targets.len() < 2 {
        return Err(SimError::TooFewPoints(targets.len()));
    }
    let (target_u, neighbor_u) = neighborhood_uncertainties(source, targets, k, scorer)?;
    pearson(&target_u, &neighbor_u)
}

/// Per-target uncertainty and mean neighbor uncertainty, in target order.
pub fn neighborhood_uncertainties(
    source: &Dataset,
    targets: &Dataset,
    k: usize,
    scorer: Scorer,
) -> Result<(Vec<f64>, Vec<f64>), SimError> {
    let source_u = score_dataset(source, scorer)?;
    let target_u: Vec<f64> = score_dataset(targets, scorer)?
        .into_iter()
        .map(|s| s.value())
        .collect();
    let index = Index::build(source)?;
    let queries: Vec<&[f64]> = targets
        .examples()
        .iter()
        .map(|e| e.representation())
        .collect();
    let neighbor_u = index
        .neighbor_lists(queries, k)?
        .into_iter()
        .map(|list| {
            list.neighbors
                .iter()
                .map(|n| source_u[n.source_index].value())
                .sum::<f64>()
                / list.neighbors.len() as f64
        })
        .collect();
    Ok((target_u, neighbor_u))
}

/// Share of each language among the chosen ids.
pub fn language_distribution(plan: &SelectionPlan) -> Result<BTreeMap<String, f64>, SimError> {
    let total: usize = plan.lang_counts.values().sum();
    if total == 0 {
        return Err(SimError::EmptyPlan);
    }
    Ok(plan
        .lang_counts
        .iter()
        .map(|(l, &c)| (l.clone(), c as f64 / total as f64))
        .collect())
}
