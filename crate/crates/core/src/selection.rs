//! Selection strategies and baselines. Each turns a scored pool into a
//! [`SelectionPlan`] of at most `b` source ids.
//!
//! The distance and uncertainty objectives are sums of per-point scores, so the
//! best `b`-subset is simply the `b` best points. Ties always resolve to the
//! lexicographically smaller id.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knn::{Index, KnnError};
use crate::model::{target_distance, Dataset, ModelError, Role};
use crate::rng::{PlanRng, RNG_ALGORITHM};
use crate::uncertainty::{score_dataset, ScoreError, Scorer};

/// Language tag that blocks language-aware baselines.
pub const UNKNOWN_LANGUAGE: &str = "unknown";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectError {
    #[error("no eligible source examples")]
    EmptyPool,
    #[error("target pool is empty")]
    EmptyTargetPool,
    #[error("per-round budget must be at least 1")]
    ZeroBudget,
    #[error("k must be at least 1")]
    NonPositiveK,
    #[error("{count} eligible examples have no language tag (first: {first:?})")]
    UnknownLanguageTags { count: usize, first: String },
    #[error("language {language:?} has {available} eligible examples, {requested} requested")]
    InsufficientPerLanguagePool {
        language: String,
        available: usize,
        requested: usize,
    },
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Random,
    Egalitarian,
    Gold,
    AverageDist,
    Uncertainty,
    KnnUncertainty,
    SameRatio,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Random,
        Strategy::Egalitarian,
        Strategy::Gold,
        Strategy::AverageDist,
        Strategy::Uncertainty,
        Strategy::KnnUncertainty,
        Strategy::SameRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Egalitarian => "egalitarian",
            Strategy::Gold => "gold",
            Strategy::AverageDist => "average-dist",
            Strategy::Uncertainty => "uncertainty",
            Strategy::KnnUncertainty => "knn-uncertainty",
            Strategy::SameRatio => "same-ratio",
        }
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        Strategy::ALL.into_iter().find(|st| st.name() == s)
    }

    pub fn needs_targets(self) -> bool {
        matches!(self, Strategy::AverageDist | Strategy::KnnUncertainty)
    }

    pub fn uses_scorer(self) -> bool {
        matches!(self, Strategy::Uncertainty | Strategy::KnnUncertainty)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ids already selected in earlier rounds.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Exclusions {
    ids: BTreeSet<String>,
}

impl Exclusions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids.contains(id)
    }

    pub fn extend<I: IntoIterator<Item = S>, S: Into<String>>(&mut self, ids: I) {
        self.ids.extend(ids.into_iter().map(Into::into));
    }

    pub fn ids(&self) -> &BTreeSet<String> {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for Exclusions {
    fn from_iter<T: IntoIterator<Item = S>>(iter: T) -> Self {
        let mut e = Exclusions::new();
        e.extend(iter);
        e
    }
}

/// The outcome of one acquisition round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionPlan {
    pub round: u32,
    pub strategy: Strategy,
    /// Selected ids in selection order.
    pub chosen: Vec<String>,
    /// Strategy score of every chosen id (distance for average-dist,
    /// uncertainty for the uncertainty strategies); empty for random draws.
    pub scores: BTreeMap<String, f64>,
    pub lang_counts: BTreeMap<String, usize>,
    pub seed: u64,
    pub requested: usize,
    pub shortfall: bool,
    /// Neighborhood size actually used by knn-uncertainty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scorer: Option<Scorer>,
    pub rng: String,
}

impl SelectionPlan {
    pub fn empty(strategy: Strategy, round: u32, seed: u64, requested: usize) -> Self {
        SelectionPlan {
            round,
            strategy,
            chosen: Vec::new(),
            scores: BTreeMap::new(),
            lang_counts: BTreeMap::new(),
            seed,
            requested,
            shortfall: requested > 0,
            k: None,
            scorer: None,
            rng: RNG_ALGORITHM.to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.chosen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chosen.is_empty()
    }
}

/// Rounds to 9 significant digits; plan files carry scores at this precision.
pub fn canonical_score(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x + 0.0;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn eligible(source: &Dataset, excl: &Exclusions) -> Vec<usize> {
    source
        .examples()
        .iter()
        .enumerate()
        .filter(|(_, e)| !excl.contains(e.id()))
        .map(|(i, _)| i)
        .collect()
}

fn check_budget(b: usize) -> Result<(), SelectError> {
    if b == 0 {
        Err(SelectError::ZeroBudget)
    } else {
        Ok(())
    }
}

fn check_targets(targets: &Dataset) -> Result<(), SelectError> {
    if targets.role() != Role::Target {
        return Err(ModelError::RoleMismatch {
            expected: Role::Target,
            found: targets.role(),
        }
        .into());
    }
    if targets.is_empty() {
        return Err(SelectError::EmptyTargetPool);
    }
    Ok(())
}

fn build_plan(
    strategy: Strategy,
    source: &Dataset,
    picks: &[usize],
    scores: Option<&dyn Fn(usize) -> f64>,
    requested: usize,
    seed: u64,
) -> SelectionPlan {
    let mut plan = SelectionPlan::empty(strategy, 1, seed, requested);
    for &i in picks {
        let ex = &source.examples()[i];
        plan.chosen.push(ex.id().to_string());
        *plan
            .lang_counts
            .entry(ex.language().to_string())
            .or_default() += 1;
        if let Some(score) = scores {
            plan.scores
                .insert(ex.id().to_string(), canonical_score(score(i)));
        }
    }
    plan.shortfall = plan.chosen.len() < requested;
    plan
}

/// The `b` candidates with the best key, best first; ties by ascending id.
fn top_b(
    source: &Dataset,
    mut candidates: Vec<(usize, f64)>,
    b: usize,
    higher_is_better: bool,
) -> Vec<usize> {
    let id = |i: usize| source.examples()[i].id();
    candidates.sort_by(|a, c| {
        let ord = if higher_is_better {
            c.1.total_cmp(&a.1)
        } else {
            a.1.total_cmp(&c.1)
        };
        ord.then_with(|| id(a.0).cmp(id(c.0)))
    });
    candidates.truncate(b);
    candidates.into_iter().map(|(i, _)| i).collect()
}

/// Source points with the smallest mean distance to the target pool.
pub fn select_average_dist(
    source: &Dataset,
    targets: &Dataset,
    b: usize,
    excl: &Exclusions,
) -> Result<SelectionPlan, SelectError> {
    check_budget(b)?;
    check_targets(targets)?;
    let pool = eligible(source, excl);
    if pool.is_empty() {
        return Err(SelectError::EmptyPool);
    }
    let dists: Vec<(usize, f64)> = pool
        .par_iter()
        .map(|&i| {
            Ok((
                i,
                target_distance(source.examples()[i].representation(), targets)?,
            ))
        })
        .collect::<Result<_, ModelError>>()?;
    let lookup: BTreeMap<usize, f64> = dists.iter().copied().collect();
    let picks = top_b(source, dists, b, false);
    Ok(build_plan(
        Strategy::AverageDist,
        source,
        &picks,
        Some(&|i| lookup[&i]),
        b,
        0,
    ))
}

/// The most uncertain eligible source points.
pub fn select_uncertainty(
    source: &Dataset,
    b: usize,
    scorer: Scorer,
    excl: &Exclusions,
) -> Result<SelectionPlan, SelectError> {
    check_budget(b)?;
    let scores = score_dataset(source, scorer)?;
    let pool = eligible(source, excl);
    if pool.is_empty() {
        return Err(SelectError::EmptyPool);
    }
    let candidates = pool.iter().map(|&i| (i, scores[i].value())).collect();
    let picks = top_b(source, candidates, b, true);
    let mut plan = build_plan(
        Strategy::Uncertainty,
        source,
        &picks,
        Some(&|i| scores[i].value()),
        b,
        0,
    );
    plan.scorer = Some(scorer);
    Ok(plan)
}

/// The most uncertain points among the k nearest eligible neighbors of every
/// target point. If the neighbor union holds fewer than `b` points, `k` is
/// doubled until it does or until it covers the whole eligible pool.
pub fn select_knn_uncertainty(
    source: &Dataset,
    targets: &Dataset,
    b: usize,
    k: usize,
    scorer: Scorer,
    excl: &Exclusions,
) -> Result<SelectionPlan, SelectError> {
    check_budget(b)?;
    if k == 0 {
        return Err(SelectError::NonPositiveK);
    }
    check_targets(targets)?;
    let scores = score_dataset(source, scorer)?;
    let pool = eligible(source, excl);
    if pool.is_empty() {
        return Err(SelectError::EmptyPool);
    }
    let index = Index::from_points(
        source.dim(),
        pool.iter().map(|&i| source.examples()[i].representation()),
    )?;
    let mut k_used = k;
    let union = loop {
        let union = index.neighbor_union(targets, k_used)?;
        if union.len() >= b || k_used >= pool.len() {
            break union;
        }
        k_used = (k_used * 2).min(pool.len());
    };
    let candidates = union
        .members()
        .iter()
        .map(|&local| (pool[local], scores[pool[local]].value()))
        .collect();
    let picks = top_b(source, candidates, b, true);
    let mut plan = build_plan(
        Strategy::KnnUncertainty,
        source,
        &picks,
        Some(&|i| scores[i].value()),
        b,
        0,
    );
    plan.k = Some(k_used);
    plan.scorer = Some(scorer);
    Ok(plan)
}

fn sample_uniform(
    strategy: Strategy,
    pool_ds: &Dataset,
    b: usize,
    seed: u64,
    excl: &Exclusions,
) -> Result<SelectionPlan, SelectError> {
    check_budget(b)?;
    let mut pool = eligible(pool_ds, excl);
    if pool.is_empty() {
        return Err(SelectError::EmptyPool);
    }
    let mut rng = PlanRng::new(seed, 0);
    let picks = rng.partial_shuffle(&mut pool, b).to_vec();
    Ok(build_plan(strategy, pool_ds, &picks, None, b, seed))
}

/// Uniform sample of `b` eligible source points.
pub fn select_random(
    source: &Dataset,
    b: usize,
    seed: u64,
    excl: &Exclusions,
) -> Result<SelectionPlan, SelectError> {
    sample_uniform(Strategy::Random, source, b, seed, excl)
}

/// Uniform sample from a caller-supplied pool in the target languages; the
/// upper-bound arm of the simulator.
pub fn select_gold(
    target_language_pool: &Dataset,
    b: usize,
    seed: u64,
    excl: &Exclusions,
) -> Result<SelectionPlan, SelectError> {
    sample_uniform(Strategy::Gold, target_language_pool, b, seed, excl)
}

fn by_language(source: &Dataset, pool: &[usize]) -> BTreeMap<String, Vec<usize>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for &i in pool {
        groups
            .entry(source.examples()[i].language().to_string())
            .or_default()
            .push(i);
    }
    groups
}

/// Splits `b` over languages as evenly as their pools allow.
///
/// Every language with remaining capacity gets `floor(rest / n)`; when that
/// is zero the remaining `rest` units go one each to the languages with the
/// most remaining capacity (ties by name). Capacity shortfalls flow back into
/// `rest` and are redistributed the same way.
pub fn egalitarian_quotas(
    available: &BTreeMap<String, usize>,
    b: usize,
) -> BTreeMap<String, usize> {
    let mut quota: BTreeMap<String, usize> = available.keys().map(|l| (l.clone(), 0)).collect();
    let mut rest = b.min(available.values().sum());
    while rest > 0 {
        let mut open: Vec<(&String, usize)> = available
            .iter()
            .map(|(l, &cap)| (l, cap - quota[l]))
            .filter(|&(_, left)| left > 0)
            .collect();
        let share = rest / open.len();
        if share > 0 {
            for (lang, left) in open {
                let give = share.min(left);
                *quota.get_mut(lang).expect("known language") += give;
                rest -= give;
            }
        } else {
            open.sort_by(|a, c| c.1.cmp(&a.1).then_with(|| a.0.cmp(c.0)));
            for (lang, _) in open.into_iter().take(rest) {
                *quota.get_mut(lang).expect("known language") += 1;
            }
            rest = 0;
        }
    }
    quota
}

/// Equal share of the budget per source language, random within a language.
pub fn select_egalitarian(
    source: &Dataset,
    b: usize,
    seed: u64,
    excl: &Exclusions,
) -> Result<SelectionPlan, SelectError> {
    check_budget(b)?;
    let pool = eligible(source, excl);
    if pool.is_empty() {
        return Err(SelectError::EmptyPool);
    }
    let unknown: Vec<usize> = pool
        .iter()
        .copied()
        .filter(|&i| {
            let l = source.examples()[i].language();
            l.is_empty() || l == UNKNOWN_LANGUAGE
        })
        .collect();
    if let Some(&first) = unknown.first() {
        return Err(SelectError::UnknownLanguageTags {
            count: unknown.len(),
            first: source.examples()[first].id().to_string(),
        });
    }
    let mut groups = by_language(source, &pool);
    let available = groups.iter().map(|(l, v)| (l.clone(), v.len())).collect();
    let quotas = egalitarian_quotas(&available, b);
    let mut rng = PlanRng::new(seed, 0);
    let mut picks = Vec::with_capacity(b);
    for (lang, members) in groups.iter_mut() {
        picks.extend_from_slice(rng.partial_shuffle(members, quotas[lang]));
    }
    Ok(build_plan(
        Strategy::Egalitarian,
        source,
        &picks,
        None,
        b,
        seed,
    ))
}

/// Random sample matching the per-language counts of `reference`.
pub fn same_ratio_random(
    reference: &SelectionPlan,
    source: &Dataset,
    seed: u64,
    excl: &Exclusions,
) -> Result<SelectionPlan, SelectError> {
    let requested: usize = reference.lang_counts.values().sum();
    let pool = eligible(source, excl);
    let mut groups = by_language(source, &pool);
    let mut rng = PlanRng::new(seed, 0);
    let mut picks = Vec::with_capacity(requested);
    for (lang, &count) in reference.lang_counts.iter().filter(|(_, &c)| c > 0) {
        let members = groups.get_mut(lang).map_or(&mut [][..], Vec::as_mut_slice);
        if members.len() < count {
            return Err(SelectError::InsufficientPerLanguagePool {
                language: lang.clone(),
                available: members.len(),
                requested: count,
            });
        }
        picks.extend_from_slice(rng.partial_shuffle(members, count));
    }
    Ok(build_plan(
        Strategy::SameRatio,
        source,
        &picks,
        None,
        requested,
        seed,
    ))
}

/// Orders two plans' chosen sets; handy for asserting set equality.
pub fn chosen_set(plan: &SelectionPlan) -> BTreeSet<&str> {
    plan.chosen.iter().map(String::as_str).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Example, TaskKind, UncertaintyPayload};

    fn seq_ds(role: Role, items: &[(&str, &str, Vec<f64>, Vec<f64>)]) -> Dataset {
        let dim = items.first().map_or(1, |it| it.2.len());
        let ex = items
            .iter()
            .enumerate()
            .map(|(i, (id, lang, rep, probs))| {
                Example::new(
                    *id,
                    *lang,
                    i as u64,
                    rep.clone(),
                    UncertaintyPayload::SeqProbs(probs.clone()),
                )
                .unwrap()
            })
            .collect();
        Dataset::new(TaskKind::SequenceLevel, role, dim, ex).unwrap()
    }

    fn flat() -> Vec<f64> {
        vec![0.5, 0.5]
    }

    #[test]
    fn average_dist_picks_nearest() {
        let src = seq_ds(
            Role::Source,
            &[
                ("a", "de", vec![0.0, 0.0], flat()),
                ("b", "de", vec![5.0, 5.0], flat()),
                ("c", "de", vec![1.0, 1.0], flat()),
            ],
        );
        let tgt = seq_ds(Role::Target, &[("t", "hi", vec![0.0, 0.0], flat())]);
        let plan = select_average_dist(&src, &tgt, 2, &Exclusions::new()).unwrap();
        assert_eq!(plan.chosen, ["a", "c"]);
        assert!(!plan.shortfall);
        let all = select_average_dist(&src, &tgt, 3, &Exclusions::new()).unwrap();
        assert_eq!(all.len(), 3);
        let excl: Exclusions = ["a"].into_iter().collect();
        let plan = select_average_dist(&src, &tgt, 2, &excl).unwrap();
        assert_eq!(plan.chosen, ["c", "b"]);
    }

    #[test]
    fn shortfall_when_pool_is_small() {
        let src = seq_ds(Role::Source, &[("a", "de", vec![0.0], flat())]);
        let plan = select_random(&src, 5, 1, &Exclusions::new()).unwrap();
        assert_eq!(plan.chosen, ["a"]);
        assert!(plan.shortfall);
        assert_eq!(plan.requested, 5);
    }

    #[test]
    fn uncertainty_picks_smallest_margin_and_breaks_ties_by_id() {
        let src = seq_ds(
            Role::Source,
            &[
                ("x", "de", vec![0.0], vec![0.95, 0.05]),
                ("y", "de", vec![0.0], vec![0.5, 0.5]),
                ("z", "de", vec![0.0], vec![0.75, 0.25]),
            ],
        );
        let plan = select_uncertainty(&src, 1, Scorer::Margin, &Exclusions::new()).unwrap();
        assert_eq!(plan.chosen, ["y"]);
        let tied = seq_ds(
            Role::Source,
            &[
                ("c", "de", vec![0.0], flat()),
                ("a", "de", vec![0.0], flat()),
                ("b", "de", vec![0.0], flat()),
            ],
        );
        let plan = select_uncertainty(&tied, 2, Scorer::Margin, &Exclusions::new()).unwrap();
        assert_eq!(plan.chosen, ["a", "b"]);
        assert!(matches!(
            select_uncertainty(&tied, 2, Scorer::SumProb, &Exclusions::new()),
            Err(SelectError::Score(ScoreError::ScorerTaskMismatch { .. }))
        ));
    }

    #[test]
    fn empty_pool_and_targets() {
        let src = seq_ds(Role::Source, &[("a", "de", vec![0.0], flat())]);
        let excl: Exclusions = ["a"].into_iter().collect();
        assert_eq!(
            select_random(&src, 1, 0, &excl),
            Err(SelectError::EmptyPool)
        );
        let no_targets = Dataset::new(TaskKind::SequenceLevel, Role::Target, 1, vec![]).unwrap();
        assert_eq!(
            select_average_dist(&src, &no_targets, 1, &Exclusions::new()),
            Err(SelectError::EmptyTargetPool)
        );
        assert_eq!(
            select_knn_uncertainty(&src, &no_targets, 1, 1, Scorer::Margin, &Exclusions::new()),
            Err(SelectError::EmptyTargetPool)
        );
        assert_eq!(
            select_random(&src, 0, 0, &Exclusions::new()),
            Err(SelectError::ZeroBudget)
        );
    }

    #[test]
    fn knn_uncertainty_stays_in_neighborhood() {
        // "far" is the most uncertain point but no target is near it
        let src = seq_ds(
            Role::Source,
            &[
                ("far", "de", vec![100.0], vec![0.5, 0.5]),
                ("n1", "de", vec![0.0], vec![0.9, 0.1]),
                ("n2", "de", vec![1.0], vec![0.6, 0.4]),
                ("n3", "de", vec![2.0], vec![0.8, 0.2]),
            ],
        );
        let tgt = seq_ds(Role::Target, &[("t", "hi", vec![0.5], flat())]);
        let plan =
            select_knn_uncertainty(&src, &tgt, 1, 2, Scorer::Margin, &Exclusions::new()).unwrap();
        assert_eq!(plan.chosen, ["n2"]);
        assert_eq!(plan.k, Some(2));
        // b exceeds the union: k escalates 1 -> 2 -> 4
        let plan =
            select_knn_uncertainty(&src, &tgt, 3, 1, Scorer::Margin, &Exclusions::new()).unwrap();
        assert_eq!(plan.k, Some(4));
        assert_eq!(plan.chosen, ["far", "n2", "n3"]);
    }

    #[test]
    fn egalitarian_quota_rules() {
        let avail = |pairs: &[(&str, usize)]| -> BTreeMap<String, usize> {
            pairs.iter().map(|(l, n)| (l.to_string(), *n)).collect()
        };
        let q = egalitarian_quotas(&avail(&[("a", 10), ("b", 10), ("c", 10)]), 6);
        assert_eq!(q.values().copied().collect::<Vec<_>>(), [2, 2, 2]);
        let q = egalitarian_quotas(&avail(&[("a", 1), ("b", 100)]), 6);
        assert_eq!(q.values().copied().collect::<Vec<_>>(), [1, 5]);
        let q = egalitarian_quotas(&avail(&[("a", 10), ("b", 10)]), 5);
        assert_eq!(q.values().copied().collect::<Vec<_>>(), [3, 2]);
        let q = egalitarian_quotas(&avail(&[("a", 10), ("b", 12)]), 5);
        assert_eq!(q.values().copied().collect::<Vec<_>>(), [2, 3]);
        let q = egalitarian_quotas(&avail(&[("a", 2), ("b", 1)]), 10);
        assert_eq!(q.values().copied().collect::<Vec<_>>(), [2, 1]);
    }

    #[test]
    fn egalitarian_rejects_unknown_languages() {
        let src = seq_ds(
            Role::Source,
            &[
                ("a", "de", vec![0.0], flat()),
                ("b", UNKNOWN_LANGUAGE, vec![0.0], flat()),
            ],
        );
        assert!(matches!(
            select_egalitarian(&src, 2, 0, &Exclusions::new()),
            Err(SelectError::UnknownLanguageTags { count: 1, .. })
        ));
    }

    #[test]
    fn same_ratio_matches_counts() {
        let items: Vec<(String, &str)> = (0..6)
            .map(|i| (format!("de{i}"), "de"))
            .chain((0..6).map(|i| (format!("hi{i}"), "hi")))
            .collect();
        let rows: Vec<(&str, &str, Vec<f64>, Vec<f64>)> = items
            .iter()
            .map(|(id, l)| (id.as_str(), *l, vec![0.0], flat()))
            .collect();
        let src = seq_ds(Role::Source, &rows);
        let mut reference = SelectionPlan::empty(Strategy::KnnUncertainty, 1, 0, 3);
        reference.lang_counts = [("de".to_string(), 2), ("hi".to_string(), 1)].into();
        let plan = same_ratio_random(&reference, &src, 9, &Exclusions::new()).unwrap();
        assert_eq!(plan.lang_counts, reference.lang_counts);
        let empty = SelectionPlan::empty(Strategy::Random, 1, 0, 0);
        assert!(same_ratio_random(&empty, &src, 9, &Exclusions::new())
            .unwrap()
            .is_empty());
        reference.lang_counts.insert("sw".into(), 1);
        assert!(matches!(
            same_ratio_random(&reference, &src, 9, &Exclusions::new()),
            Err(SelectError::InsufficientPerLanguagePool { .. })
        ));
    }

    #[test]
    fn canonical_score_rounds_to_nine_digits() {
        assert_eq!(canonical_score(0.123456789123), 0.123456789);
        assert_eq!(canonical_score(-0.0), 0.0);
        assert_eq!(canonical_score(1234567891234.0), 1234567890000.0);
    }
}
