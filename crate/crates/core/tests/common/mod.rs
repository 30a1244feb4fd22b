#![allow(dead_code)]

use demux_core::{Dataset, Example, Role, TaskKind, UncertaintyPayload};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random probability vector of length `c`, strictly positive.
pub fn probs(r: &mut ChaCha8Rng, c: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..c).map(|_| r.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

pub fn point(r: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// Sequence-level dataset over `langs` with random points and probabilities.
pub fn seq_dataset(r: &mut ChaCha8Rng, role: Role, n: usize, d: usize, langs: &[&str]) -> Dataset {
    let prefix = match role {
        Role::Source => "s",
        Role::Target => "t",
    };
    let ex = (0..n)
        .map(|i| {
            Example::new(
                format!("{prefix}{i:04}"),
                langs[i % langs.len()],
                i as u64,
                point(r, d),
                UncertaintyPayload::SeqProbs(probs(r, 3)),
            )
            .unwrap()
        })
        .collect();
    Dataset::new(TaskKind::SequenceLevel, role, d, ex).unwrap()
}

/// Calls `f` on every `b`-subset of `0..n` in lexicographic order.
pub fn for_each_subset(n: usize, b: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, b: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == b {
            f(cur);
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, b, cur, f);
            cur.pop();
        }
    }
    rec(0, n, b, &mut Vec::new(), f);
}
