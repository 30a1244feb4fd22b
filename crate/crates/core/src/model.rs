//! Shared domain types: examples, datasets, payloads, representation pooling
//! and the average target distance.

use std::collections::HashSet;
use std::fmt;
use std::hash::Hasher;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on probability rows summing to one.
pub const PROB_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("token-level pooling requires a word alignment")]
    MissingAlignment,
    #[error("alignment index {index} out of range for {len} tokens")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("target pool is empty")]
    EmptyTargetPool,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("expected a {expected} dataset, found {found}")]
    RoleMismatch { expected: Role, found: Role },
    #[error("example {id:?} violates rule {rule}: {detail}")]
    InvariantViolation {
        id: String,
        rule: &'static str,
        detail: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    SequenceLevel,
    TokenLevel,
    SpanQa,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [
        TaskKind::SequenceLevel,
        TaskKind::TokenLevel,
        TaskKind::SpanQa,
    ];

    pub fn parse(s: &str) -> Option<TaskKind> {
        TaskKind::ALL.into_iter().find(|t| t.name() == s)
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::SequenceLevel => "sequence-level",
            TaskKind::TokenLevel => "token-level",
            TaskKind::SpanQa => "span-qa",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Source,
    Target,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Source => "source",
            Role::Target => "target",
        })
    }
}

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ModelError> {
        if data.len() != rows * cols {
            return Err(ModelError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(ModelError::DimensionMismatch {
                    expected: cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero; a 0-column matrix has no meaningful rows
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Index of the first sub-word token of every word in a token sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordAlignment {
    first_subword_index: Vec<usize>,
}

impl WordAlignment {
    pub fn new(first_subword_index: Vec<usize>) -> Result<Self, ModelError> {
        if first_subword_index.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        if let Some(w) = first_subword_index.windows(2).find(|w| w[0] >= w[1]) {
            return Err(ModelError::InvariantViolation {
                id: String::new(),
                rule: "alignment-increasing",
                detail: format!("index {} followed by {}", w[0], w[1]),
            });
        }
        Ok(Self {
            first_subword_index,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.first_subword_index
    }
}

/// Task-dependent model outputs used to score uncertainty.
#[derive(Clone, Debug, PartialEq)]
pub enum UncertaintyPayload {
    /// Class probabilities of a sequence classifier.
    SeqProbs(Vec<f64>),
    /// Per-token class probabilities, one row per token.
    TokenProbs(Vec<Vec<f64>>),
    /// Start and end log-probabilities over context positions.
    SpanLogProbs { start: Vec<f64>, end: Vec<f64> },
}

impl UncertaintyPayload {
    pub fn task(&self) -> TaskKind {
        match self {
            UncertaintyPayload::SeqProbs(_) => TaskKind::SequenceLevel,
            UncertaintyPayload::TokenProbs(_) => TaskKind::TokenLevel,
            UncertaintyPayload::SpanLogProbs { .. } => TaskKind::SpanQa,
        }
    }

    /// Checks the payload invariants; returns the violated rule name and a
    /// human readable detail on failure.
    pub fn check(&self) -> Result<(), (&'static str, String)> {
        match self {
            UncertaintyPayload::SeqProbs(p) => check_prob_row(p, 0),
            UncertaintyPayload::TokenProbs(rows) => {
                if rows.is_empty() {
                    return Err(("token-count", "no tokens".into()));
                }
                let c = rows[0].len();
                for (t, row) in rows.iter().enumerate() {
                    if row.len() != c {
                        return Err((
                            "token-width",
                            format!("token {t} has {} classes, expected {c}", row.len()),
                        ));
                    }
                    check_prob_row(row, t)?;
                }
                Ok(())
            }
            UncertaintyPayload::SpanLogProbs { start, end } => {
                if start.is_empty() {
                    return Err(("span-length", "empty span vectors".into()));
                }
                if start.len() != end.len() {
                    return Err((
                        "span-length",
                        format!("start has {} entries, end has {}", start.len(), end.len()),
                    ));
                }
                for (i, &v) in start.iter().chain(end.iter()).enumerate() {
                    if !v.is_finite() {
                        return Err(("finite", format!("entry {i} is {v}")));
                    }
                    if v > 0.0 {
                        return Err(("log-prob-nonpositive", format!("entry {i} is {v}")));
                    }
                }
                Ok(())
            }
        }
    }
}

fn check_prob_row(p: &[f64], token: usize) -> Result<(), (&'static str, String)> {
    if p.len() < 2 {
        return Err((
            "min-classes",
            format!("{} classes, need at least 2", p.len()),
        ));
    }
    let mut sum = 0.0;
    for (c, &v) in p.iter().enumerate() {
        if !v.is_finite() {
            return Err(("finite", format!("token {token} class {c} is {v}")));
        }
        if !(0.0..=1.0).contains(&v) {
            return Err(("prob-range", format!("token {token} class {c} is {v}")));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
        return Err(("prob-sum", format!("token {token} sums to {sum}")));
    }
    Ok(())
}

/// A single validated example. Construct with [`Example::new`].
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    id: String,
    language: String,
    text_hash: u64,
    representation: Vec<f64>,
    payload: UncertaintyPayload,
}

impl Example {
    pub fn new(
        id: impl Into<String>,
        language: impl Into<String>,
        text_hash: u64,
        representation: Vec<f64>,
        payload: UncertaintyPayload,
    ) -> Result<Self, ModelError> {
        let id = id.into();
        let violation = |rule, detail| ModelError::InvariantViolation {
            id: id.clone(),
            rule,
            detail,
        };
        if representation.is_empty() {
            return Err(violation("dim", "empty representation".into()));
        }
        if let Some((i, v)) = representation
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite())
        {
            return Err(violation("finite", format!("representation[{i}] is {v}")));
        }
        if let Err((rule, detail)) = payload.check() {
            return Err(violation(rule, detail));
        }
        Ok(Self {
            id,
            language: language.into(),
            text_hash,
            representation,
            payload,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn text_hash(&self) -> u64 {
        self.text_hash
    }

    pub fn representation(&self) -> &[f64] {
        &self.representation
    }

    pub fn payload(&self) -> &UncertaintyPayload {
        &self.payload
    }

    /// Same id, language and hash with fresh model outputs.
    pub fn with_model_outputs(
        &self,
        representation: Vec<f64>,
        payload: UncertaintyPayload,
    ) -> Result<Self, ModelError> {
        Example::new(
            self.id.clone(),
            self.language.clone(),
            self.text_hash,
            representation,
            payload,
        )
    }
}

/// An unlabeled source or target pool.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    task: TaskKind,
    role: Role,
    dim: usize,
    examples: Vec<Example>,
}

impl Dataset {
    pub fn new(
        task: TaskKind,
        role: Role,
        dim: usize,
        examples: Vec<Example>,
    ) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(ModelError::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        let mut seen = HashSet::with_capacity(examples.len());
        let mut classes = None;
        for ex in &examples {
            let c = match &ex.payload {
                UncertaintyPayload::SeqProbs(p) => Some(p.len()),
                UncertaintyPayload::TokenProbs(rows) => rows.first().map(Vec::len),
                UncertaintyPayload::SpanLogProbs { .. } => None,
            };
            if let Some(c) = c {
                if *classes.get_or_insert(c) != c {
                    return Err(ModelError::InvariantViolation {
                        id: ex.id.clone(),
                        rule: "class-count",
                        detail: format!("{c} classes, earlier examples have {}", classes.unwrap()),
                    });
                }
            }
            if ex.representation.len() != dim {
                return Err(ModelError::InvariantViolation {
                    id: ex.id.clone(),
                    rule: "dim",
                    detail: format!(
                        "representation has {} values, dataset dim is {dim}",
                        ex.representation.len()
                    ),
                });
            }
            if ex.payload.task() != task {
                return Err(ModelError::InvariantViolation {
                    id: ex.id.clone(),
                    rule: "payload-variant",
                    detail: format!("{} payload in a {task} dataset", ex.payload.task()),
                });
            }
            if !seen.insert(ex.id.as_str()) {
                return Err(ModelError::InvariantViolation {
                    id: ex.id.clone(),
                    rule: "unique-id",
                    detail: "duplicate id".into(),
                });
            }
        }
        Ok(Self {
            task,
            role,
            dim,
            examples,
        })
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.examples.iter().position(|e| e.id == id)
    }
}

/// FNV-1a (64-bit) over the UTF-8 bytes of `text`.
pub fn fnv1a64(text: &str) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(text.as_bytes());
    h.finish()
}

/// Euclidean distance with a fixed left-to-right accumulation order.
pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .fold(0.0, |acc, v| acc + v)
        .sqrt()
}

/// Collapses raw token embeddings into the single vector fed to the
/// classifier: row 0 for sequence and span tasks, the mean of every word's
/// first sub-word row for token tasks.
pub fn pool_representation(
    raw: &Matrix,
    task: TaskKind,
    align: Option<&WordAlignment>,
) -> Result<Vec<f64>, ModelError> {
    if raw.rows() == 0 || raw.cols() == 0 {
        return Err(ModelError::EmptyInput);
    }
    match task {
        TaskKind::SequenceLevel | TaskKind::SpanQa => Ok(raw.row(0).to_vec()),
        TaskKind::TokenLevel => {
            let align = align.ok_or(ModelError::MissingAlignment)?;
            let mut acc = vec![0.0; raw.cols()];
            for &idx in align.indices() {
                if idx >= raw.rows() {
                    return Err(ModelError::IndexOutOfRange {
                        index: idx,
                        len: raw.rows(),
                    });
                }
                for (a, v) in acc.iter_mut().zip(raw.row(idx)) {
                    *a += v;
                }
            }
            let n = align.indices().len() as f64;
            Ok(acc.into_iter().map(|a| a / n).collect())
        }
    }
}

/// Mean Euclidean distance from `x` to every point of the target pool.
pub fn target_distance(x: &[f64], targets: &Dataset) -> Result<f64, ModelError> {
    if targets.role() != Role::Target {
        return Err(ModelError::RoleMismatch {
            expected: Role::Target,
            found: targets.role(),
        });
    }
    if targets.is_empty() {
        return Err(ModelError::EmptyTargetPool);
    }
    if x.len() != targets.dim() {
        return Err(ModelError::DimensionMismatch {
            expected: targets.dim(),
            found: x.len(),
        });
    }
    let total = targets
        .examples()
        .iter()
        .map(|t| l2_distance(x, t.representation()))
        .fold(0.0, |acc, d| acc + d);
    Ok(total / targets.len() as f64)
}

/// `target_distance` for every example of `source`, in order.
pub fn target_distances(source: &Dataset, targets: &Dataset) -> Result<Vec<f64>, ModelError> {
    source
        .examples()
        .par_iter()
        .map(|e| target_distance(e.representation(), targets))
        .collect()
}

/// Keeps the first occurrence of every text hash, preserving order.
pub fn dedup(ds: &Dataset) -> Dataset {
    let mut seen = HashSet::with_capacity(ds.len());
    let examples = ds
        .examples
        .iter()
        .filter(|e| seen.insert(e.text_hash))
        .cloned()
        .collect();
    Dataset {
        task: ds.task,
        role: ds.role,
        dim: ds.dim,
        examples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(id: &str, hash: u64, rep: Vec<f64>) -> Example {
        Example::new(
            id,
            "xx",
            hash,
            rep,
            UncertaintyPayload::SeqProbs(vec![0.5, 0.5]),
        )
        .unwrap()
    }

    fn targets(points: &[[f64; 2]]) -> Dataset {
        let ex = points
            .iter()
            .enumerate()
            .map(|(i, p)| seq(&format!("t{i}"), i as u64, p.to_vec()))
            .collect();
        Dataset::new(TaskKind::SequenceLevel, Role::Target, 2, ex).unwrap()
    }

    #[test]
    fn pooling_sequence_takes_row_zero() {
        let raw = Matrix::from_rows(&[vec![1.0, 1.0], vec![5.0, 5.0]]).unwrap();
        assert_eq!(
            pool_representation(&raw, TaskKind::SequenceLevel, None).unwrap(),
            vec![1.0, 1.0]
        );
        assert_eq!(
            pool_representation(&raw, TaskKind::SpanQa, None).unwrap(),
            vec![1.0, 1.0]
        );
    }

    #[test]
    fn pooling_token_means_first_subwords() {
        let raw = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0], vec![9.0, 9.0]]).unwrap();
        let align = WordAlignment::new(vec![0, 1]).unwrap();
        assert_eq!(
            pool_representation(&raw, TaskKind::TokenLevel, Some(&align)).unwrap(),
            vec![1.0, 1.0]
        );
        let single = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let align = WordAlignment::new(vec![0]).unwrap();
        assert_eq!(
            pool_representation(&single, TaskKind::TokenLevel, Some(&align)).unwrap(),
            vec![3.0, 4.0]
        );
    }

    #[test]
    fn pooling_errors() {
        let raw = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert_eq!(
            pool_representation(&raw, TaskKind::TokenLevel, None),
            Err(ModelError::MissingAlignment)
        );
        let align = WordAlignment::new(vec![0, 3]).unwrap();
        assert_eq!(
            pool_representation(&raw, TaskKind::TokenLevel, Some(&align)),
            Err(ModelError::IndexOutOfRange { index: 3, len: 1 })
        );
        let empty = Matrix::new(0, 2, vec![]).unwrap();
        assert_eq!(
            pool_representation(&empty, TaskKind::SequenceLevel, None),
            Err(ModelError::EmptyInput)
        );
        assert!(WordAlignment::new(vec![1, 1]).is_err());
        assert!(WordAlignment::new(vec![]).is_err());
    }

    #[test]
    fn target_distance_spot_values() {
        assert_eq!(
            target_distance(&[0.0, 0.0], &targets(&[[0.0, 0.0]])).unwrap(),
            0.0
        );
        assert_eq!(
            target_distance(&[1.0, 0.0], &targets(&[[0.0, 0.0], [2.0, 0.0]])).unwrap(),
            1.0
        );
        assert_eq!(
            target_distance(&[0.0, 0.0], &targets(&[[3.0, 4.0], [0.0, 0.0]])).unwrap(),
            2.5
        );
    }

    #[test]
    fn target_distance_errors() {
        let empty = Dataset::new(TaskKind::SequenceLevel, Role::Target, 2, vec![]).unwrap();
        assert_eq!(
            target_distance(&[0.0, 0.0], &empty),
            Err(ModelError::EmptyTargetPool)
        );
        assert_eq!(
            target_distance(&[0.0], &targets(&[[0.0, 0.0]])),
            Err(ModelError::DimensionMismatch {
                expected: 2,
                found: 1
            })
        );
        let src = targets(&[[0.0, 0.0]]).with_role(Role::Source);
        assert!(matches!(
            target_distance(&[0.0, 0.0], &src),
            Err(ModelError::RoleMismatch { .. })
        ));
    }

    #[test]
    fn dedup_keeps_first_occurrence() {
        let ds = Dataset::new(
            TaskKind::SequenceLevel,
            Role::Source,
            1,
            vec![
                seq("a0", 1, vec![0.0]),
                seq("b", 2, vec![1.0]),
                seq("a1", 1, vec![2.0]),
            ],
        )
        .unwrap();
        let ids: Vec<_> = dedup(&ds)
            .examples()
            .iter()
            .map(|e| e.id().to_string())
            .collect();
        assert_eq!(ids, ["a0", "b"]);
    }

    #[test]
    fn dataset_rejects_bad_examples() {
        let bad = Example::new(
            "x",
            "en",
            0,
            vec![f64::NAN],
            UncertaintyPayload::SeqProbs(vec![0.5, 0.5]),
        );
        assert!(matches!(
            bad,
            Err(ModelError::InvariantViolation { rule: "finite", .. })
        ));
        let bad = Example::new(
            "x",
            "en",
            0,
            vec![0.0],
            UncertaintyPayload::SeqProbs(vec![0.5, 0.4]),
        );
        assert!(matches!(
            bad,
            Err(ModelError::InvariantViolation {
                rule: "prob-sum",
                ..
            })
        ));
        let bad = Example::new(
            "x",
            "en",
            0,
            vec![0.0],
            UncertaintyPayload::SeqProbs(vec![1.0]),
        );
        assert!(matches!(
            bad,
            Err(ModelError::InvariantViolation {
                rule: "min-classes",
                ..
            })
        ));
        let bad = Example::new(
            "x",
            "en",
            0,
            vec![0.0],
            UncertaintyPayload::SpanLogProbs {
                start: vec![0.1],
                end: vec![-1.0],
            },
        );
        assert!(matches!(
            bad,
            Err(ModelError::InvariantViolation {
                rule: "log-prob-nonpositive",
                ..
            })
        ));
        let dup = Dataset::new(
            TaskKind::SequenceLevel,
            Role::Source,
            1,
            vec![seq("a", 1, vec![0.0]), seq("a", 2, vec![0.0])],
        );
        assert!(matches!(
            dup,
            Err(ModelError::InvariantViolation {
                rule: "unique-id",
                ..
            })
        ));
        let wrong_dim = Dataset::new(
            TaskKind::SequenceLevel,
            Role::Source,
            2,
            vec![seq("a", 1, vec![0.0])],
        );
        assert!(matches!(
            wrong_dim,
            Err(ModelError::InvariantViolation { rule: "dim", .. })
        ));
        let wrong_task = Dataset::new(
            TaskKind::TokenLevel,
            Role::Source,
            1,
            vec![seq("a", 1, vec![0.0])],
        );
        assert!(matches!(
            wrong_task,
            Err(ModelError::InvariantViolation {
                rule: "payload-variant",
                ..
            })
        ));
    }

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64("a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64("foobar"), 0x85944171f73967e8);
    }
}
