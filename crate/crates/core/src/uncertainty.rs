//! Per-example uncertainty scores.
//!
//! Raw scores follow the usual "lower is more uncertain" convention (margin,
//! min-margin, mean normalized log-probability, summed span log-probability).
//! Every scorer returns the negated raw value so that selection code can
//! always maximize.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Dataset, TaskKind, UncertaintyPayload};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("need at least two classes, found {0}")]
    FewerThanTwoClasses(usize),
    #[error("empty sequence")]
    EmptySequence,
    #[error("probability {0} is not positive")]
    NonPositiveProbability(f64),
    #[error("non-finite value {0} in payload")]
    NonFinite(f64),
    #[error("scorer {scorer} cannot score a {task} dataset")]
    ScorerTaskMismatch { scorer: Scorer, task: TaskKind },
}

/// Uncertainty with polarity "higher = more uncertain".
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct UncertaintyScore(f64);

impl UncertaintyScore {
    fn from_raw(raw: f64) -> Self {
        // 0.0 - x keeps +0.0 for a zero raw score
        UncertaintyScore(0.0 - raw)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The score in its original "lower = more uncertain" convention.
    pub fn raw(self) -> f64 {
        0.0 - self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scorer {
    Margin,
    MarginMin,
    Mnlp,
    SumProb,
}

impl Scorer {
    pub const ALL: [Scorer; 4] = [
        Scorer::Margin,
        Scorer::MarginMin,
        Scorer::Mnlp,
        Scorer::SumProb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scorer::Margin => "margin",
            Scorer::MarginMin => "margin-min",
            Scorer::Mnlp => "mnlp",
            Scorer::SumProb => "sum-prob",
        }
    }

    pub fn parse(s: &str) -> Option<Scorer> {
        Scorer::ALL.into_iter().find(|sc| sc.name() == s)
    }

    pub fn default_for(task: TaskKind) -> Scorer {
        match task {
            TaskKind::SequenceLevel => Scorer::Margin,
            TaskKind::TokenLevel => Scorer::MarginMin,
            TaskKind::SpanQa => Scorer::SumProb,
        }
    }

    pub fn supports(self, task: TaskKind) -> bool {
        matches!(
            (self, task),
            (Scorer::Margin, TaskKind::SequenceLevel)
                | (Scorer::MarginMin | Scorer::Mnlp, TaskKind::TokenLevel)
                | (Scorer::SumProb, TaskKind::SpanQa)
        )
    }
}

impl fmt::Display for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_finite(values: &[f64]) -> Result<(), ScoreError> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(&v) => Err(ScoreError::NonFinite(v)),
        None => Ok(()),
    }
}

/// Largest and second largest entries; equal values resolve to the lower
/// class index, which leaves the margin unchanged.
fn top_two(p: &[f64]) -> Result<(f64, f64), ScoreError> {
    if p.len() < 2 {
        return Err(ScoreError::FewerThanTwoClasses(p.len()));
    }
    check_finite(p)?;
    let (mut first, mut second) = (0usize, usize::MAX);
    for i in 1..p.len() {
        if p[i] > p[first] {
            second = first;
            first = i;
        } else if second == usize::MAX || p[i] > p[second] {
            second = i;
        }
    }
    Ok((p[first], p[second]))
}

fn margin(p: &[f64]) -> Result<f64, ScoreError> {
    let (a, b) = top_two(p)?;
    Ok(a - b)
}

/// Gap between the two most probable classes.
pub fn margin_sequence(p: &[f64]) -> Result<UncertaintyScore, ScoreError> {
    margin(p).map(UncertaintyScore::from_raw)
}

/// Smallest per-token margin over the sequence.
pub fn margin_min_token(rows: &[Vec<f64>]) -> Result<UncertaintyScore, ScoreError> {
    if rows.is_empty() {
        return Err(ScoreError::EmptySequence);
    }
    let mut lowest = f64::INFINITY;
    for row in rows {
        lowest = lowest.min(margin(row)?);
    }
    Ok(UncertaintyScore::from_raw(lowest))
}

/// Best start log-probability plus best end log-probability.
pub fn sum_prob_qa(start_logp: &[f64], end_logp: &[f64]) -> Result<UncertaintyScore, ScoreError> {
    if start_logp.is_empty() || end_logp.is_empty() {
        return Err(ScoreError::EmptySequence);
    }
    check_finite(start_logp)?;
    check_finite(end_logp)?;
    let best = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(UncertaintyScore::from_raw(
        best(start_logp) + best(end_logp),
    ))
}

/// Mean log-probability of the predicted class per token.
pub fn mnlp_token(top_class_probs: &[f64]) -> Result<UncertaintyScore, ScoreError> {
    if top_class_probs.is_empty() {
        return Err(ScoreError::EmptySequence);
    }
    check_finite(top_class_probs)?;
    if let Some(&p) = top_class_probs.iter().find(|&&p| p <= 0.0) {
        return Err(ScoreError::NonPositiveProbability(p));
    }
    // mean taken around the first term, so constant rows give ln p exactly
    let first = top_class_probs[0].ln();
    let spread: f64 = top_class_probs[1..].iter().map(|p| p.ln() - first).sum();
    Ok(UncertaintyScore::from_raw(
        first + spread / top_class_probs.len() as f64,
    ))
}

pub fn score_payload(
    payload: &UncertaintyPayload,
    scorer: Scorer,
) -> Result<UncertaintyScore, ScoreError> {
    match (scorer, payload) {
        (Scorer::Margin, UncertaintyPayload::SeqProbs(p)) => margin_sequence(p),
        (Scorer::MarginMin, UncertaintyPayload::TokenProbs(rows)) => margin_min_token(rows),
        (Scorer::Mnlp, UncertaintyPayload::TokenProbs(rows)) => {
            let top: Vec<f64> = rows
                .iter()
                .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .collect();
            mnlp_token(&top)
        }
        (Scorer::SumProb, UncertaintyPayload::SpanLogProbs { start, end }) => {
            sum_prob_qa(start, end)
        }
        _ => Err(ScoreError::ScorerTaskMismatch {
            scorer,
            task: payload.task(),
        }),
    }
}

/// Scores every example of `ds`; element `i` belongs to example `i`.
pub fn score_dataset(ds: &Dataset, scorer: Scorer) -> Result<Vec<UncertaintyScore>, ScoreError> {
    if !scorer.supports(ds.task()) {
        return Err(ScoreError::ScorerTaskMismatch {
            scorer,
            task: ds.task(),
        });
    }
    ds.examples()
        .par_iter()
        .map(|e| score_payload(e.payload(), scorer))
        .collect()
}
