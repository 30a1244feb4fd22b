//! Exact brute-force k-nearest-neighbor search under the Euclidean metric.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{l2_distance, Dataset, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KnnError {
    #[error("source pool is empty")]
    EmptySource,
    #[error("target pool is empty")]
    EmptyTargets,
    #[error("k must be at least 1")]
    NonPositiveK,
    #[error("dimension mismatch: index has {expected}, query has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in source point {0}")]
    NonFinite(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub source_index: usize,
    pub distance: f64,
}

/// Neighbors of one query, ascending by distance then by source index.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborList {
    pub target_index: usize,
    pub neighbors: Vec<Neighbor>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NeighborUnion {
    members: BTreeSet<usize>,
    provenance: BTreeMap<usize, Vec<usize>>,
}

impl NeighborUnion {
    pub fn members(&self) -> &BTreeSet<usize> {
        &self.members
    }

    /// Target indices whose neighbor list contains `source_index`.
    pub fn selected_by(&self, source_index: usize) -> &[usize] {
        self.provenance
            .get(&source_index)
            .map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

fn by_distance_then_index(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.source_index.cmp(&b.source_index))
}

/// Immutable point set answering exact L2 top-k queries.
#[derive(Clone, Debug)]
pub struct Index {
    points: Matrix,
}

impl Index {
    pub fn build(source: &Dataset) -> Result<Self, KnnError> {
        Self::from_points(
            source.dim(),
            source.examples().iter().map(|e| e.representation()),
        )
    }

    pub fn from_points<'a>(
        dim: usize,
        points: impl IntoIterator<Item = &'a [f64]>,
    ) -> Result<Self, KnnError> {
        let mut data = Vec::new();
        let mut n = 0;
        for (i, p) in points.into_iter().enumerate() {
            if p.len() != dim {
                return Err(KnnError::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(KnnError::NonFinite(i));
            }
            data.extend_from_slice(p);
            n += 1;
        }
        if n == 0 {
            return Err(KnnError::EmptySource);
        }
        let points = Matrix::new(n, dim, data).expect("row lengths checked");
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    /// The `min(k, len)` nearest points to `q`.
    pub fn query_topk(&self, q: &[f64], k: usize) -> Result<Vec<Neighbor>, KnnError> {
        if k == 0 {
            return Err(KnnError::NonPositiveK);
        }
        if q.len() != self.dim() {
            return Err(KnnError::DimensionMismatch {
                expected: self.dim(),
                found: q.len(),
            });
        }
        let mut all: Vec<Neighbor> = self
            .points
            .iter_rows()
            .enumerate()
            .map(|(source_index, p)| Neighbor {
                source_index,
                distance: l2_distance(q, p),
            })
            .collect();
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, by_distance_then_index);
            all.truncate(k);
        }
        all.sort_unstable_by(by_distance_then_index);
        Ok(all)
    }

    /// Neighbor lists for every query, in query order.
    pub fn neighbor_lists<'a, I>(&self, queries: I, k: usize) -> Result<Vec<NeighborList>, KnnError>
    where
        I: IntoParallelIterator<Item = &'a [f64]>,
        I::Iter: IndexedParallelIterator,
    {
        queries
            .into_par_iter()
            .enumerate()
            .map(|(target_index, q)| {
                Ok(NeighborList {
                    target_index,
                    neighbors: self.query_topk(q, k)?,
                })
            })
            .collect()
    }

    /// Union of the k nearest source points of every target point.
    pub fn neighbor_union(&self, targets: &Dataset, k: usize) -> Result<NeighborUnion, KnnError> {
        if targets.is_empty() {
            return Err(KnnError::EmptyTargets);
        }
        let queries: Vec<&[f64]> = targets
            .examples()
            .iter()
            .map(|e| e.representation())
            .collect();
        let lists = self.neighbor_lists(queries, k)?;
        Ok(union_of(&lists))
    }
}

pub fn union_of(lists: &[NeighborList]) -> NeighborUnion {
    let mut union = NeighborUnion::default();
    for list in lists {
        for n in &list.neighbors {
            union.members.insert(n.source_index);
            union
                .provenance
                .entry(n.source_index)
                .or_default()
                .push(list.target_index);
        }
    }
    union
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index(points: &[Vec<f64>]) -> Index {
        Index::from_points(points[0].len(), points.iter().map(Vec::as_slice)).unwrap()
    }

    #[test]
    fn single_point_answers_everything() {
        let idx = index(&[vec![2.0, 2.0]]);
        let got = idx.query_topk(&[-5.0, 1.0], 3).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].source_index, 0);
    }

    #[test]
    fn nearest_and_ties() {
        let idx = index(&[vec![0.0, 0.0], vec![10.0, 0.0]]);
        assert_eq!(
            idx.query_topk(&[1.0, 0.0], 1).unwrap(),
            vec![Neighbor {
                source_index: 0,
                distance: 1.0
            }]
        );
        let mut pts = vec![vec![100.0, 100.0]; 8];
        pts[3] = vec![1.0, 0.0];
        pts[7] = vec![-1.0, 0.0];
        let idx = index(&pts);
        assert_eq!(idx.query_topk(&[0.0, 0.0], 1).unwrap()[0].source_index, 3);
    }

    #[test]
    fn k_larger_than_pool_returns_all_sorted() {
        let idx = index(&[vec![3.0], vec![1.0], vec![2.0]]);
        let got: Vec<_> = idx
            .query_topk(&[0.0], 10)
            .unwrap()
            .iter()
            .map(|n| n.source_index)
            .collect();
        assert_eq!(got, [1, 2, 0]);
    }

    #[test]
    fn errors() {
        let idx = index(&[vec![0.0, 0.0]]);
        assert_eq!(idx.query_topk(&[0.0, 0.0], 0), Err(KnnError::NonPositiveK));
        assert!(matches!(
            idx.query_topk(&[0.0], 1),
            Err(KnnError::DimensionMismatch { .. })
        ));
        let nan = [vec![0.0], vec![f64::NAN]];
        assert_eq!(
            Index::from_points(1, nan.iter().map(Vec::as_slice)).unwrap_err(),
            KnnError::NonFinite(1)
        );
        let none: [&[f64]; 0] = [];
        assert_eq!(
            Index::from_points(1, none).unwrap_err(),
            KnnError::EmptySource
        );
    }

    #[test]
    fn union_records_provenance() {
        let idx = index(&[vec![0.0], vec![1.0], vec![10.0], vec![11.0]]);
        let lists = idx
            .neighbor_lists(vec![&[0.2][..], &[10.2][..], &[0.4][..]], 2)
            .unwrap();
        let u = union_of(&lists);
        assert_eq!(
            u.members().iter().copied().collect::<Vec<_>>(),
            [0, 1, 2, 3]
        );
        assert_eq!(u.selected_by(0), &[0, 2]);
        assert_eq!(u.selected_by(3), &[1]);
    }
}
