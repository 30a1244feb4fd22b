mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use demux_core::selection::{
    chosen_set, egalitarian_quotas, same_ratio_random, select_average_dist, select_egalitarian,
    select_gold, select_knn_uncertainty, select_random, select_uncertainty, Exclusions,
};
use demux_core::{Role, Scorer};
use rand::Rng;

/// Best subset by exhaustive enumeration; `better(a, b)` says a beats b.
fn best_subset(values: &[f64], b: usize, better: impl Fn(f64, f64) -> bool) -> BTreeSet<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for_each_subset(values.len(), b, &mut |s| {
        let total: f64 = s.iter().map(|&i| values[i]).sum();
        if best.as_ref().is_none_or(|(t, _)| better(total, *t)) {
            best = Some((total, s.to_vec()));
        }
    });
    best.unwrap().1.into_iter().collect()
}

fn mean_dist(x: &[f64], targets: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for t in targets {
        let mut sq = 0.0;
        for i in 0..x.len() {
            sq += (x[i] - t[i]).powi(2);
        }
        total += sq.sqrt();
    }
    total / targets.len() as f64
}

fn margin_oracle(p: &[f64]) -> f64 {
    let mut s = p.to_vec();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    -(s[0] - s[1])
}

#[test]
fn average_dist_matches_enumeration() {
    for inst in 0..100 {
        let mut r = rng(inst);
        let n = r.random_range(1..=12);
        let b = r.random_range(1..=4usize.min(n));
        let d = r.random_range(1..=5);
        let src = seq_dataset(&mut r, Role::Source, n, d, &["a", "b"]);
        let m = r.random_range(1..6);
        let tgt = seq_dataset(&mut r, Role::Target, m, d, &["t"]);
        let tpts: Vec<Vec<f64>> = tgt
            .examples()
            .iter()
            .map(|e| e.representation().to_vec())
            .collect();
        let dists: Vec<f64> = src
            .examples()
            .iter()
            .map(|e| mean_dist(e.representation(), &tpts))
            .collect();
        let want = best_subset(&dists, b, |a, b| a < b);
        let plan = select_average_dist(&src, &tgt, b, &Exclusions::new()).unwrap();
        let got: BTreeSet<usize> = plan
            .chosen
            .iter()
            .map(|id| src.position(id).unwrap())
            .collect();
        assert_eq!(got, want, "instance {inst}");
    }
}

#[test]
fn uncertainty_matches_enumeration() {
    for inst in 0..100 {
        let mut r = rng(1000 + inst);
        let n = r.random_range(1..=12);
        let b = r.random_range(1..=4usize.min(n));
        let src = seq_dataset(&mut r, Role::Source, n, 2, &["a"]);
        let u: Vec<f64> = src
            .examples()
            .iter()
            .map(|e| match e.payload() {
                demux_core::UncertaintyPayload::SeqProbs(p) => margin_oracle(p),
                _ => unreachable!(),
            })
            .collect();
        let want = best_subset(&u, b, |a, b| a > b);
        let plan = select_uncertainty(&src, b, Scorer::Margin, &Exclusions::new()).unwrap();
        let got: BTreeSet<usize> = plan
            .chosen
            .iter()
            .map(|id| src.position(id).unwrap())
            .collect();
        assert_eq!(got, want, "instance {inst}");
    }
}

#[test]
fn knn_with_full_k_equals_uncertainty() {
    for inst in 0..50 {
        let mut r = rng(2000 + inst);
        let n = r.random_range(2..60);
        let b = r.random_range(1..=n);
        let src = seq_dataset(&mut r, Role::Source, n, 3, &["a", "b", "c"]);
        let m = r.random_range(1..8);
        let tgt = seq_dataset(&mut r, Role::Target, m, 3, &["t"]);
        let knn =
            select_knn_uncertainty(&src, &tgt, b, n, Scorer::Margin, &Exclusions::new()).unwrap();
        let unc = select_uncertainty(&src, b, Scorer::Margin, &Exclusions::new()).unwrap();
        assert_eq!(chosen_set(&knn), chosen_set(&unc));
    }
}

#[test]
fn knn_choices_lie_in_the_neighbor_union() {
    for inst in 0..30 {
        let mut r = rng(3000 + inst);
        let src = seq_dataset(&mut r, Role::Source, 200, 4, &["a", "b"]);
        let tgt = seq_dataset(&mut r, Role::Target, 10, 4, &["t"]);
        let k = r.random_range(1..10);
        let b = r.random_range(1..40);
        let plan =
            select_knn_uncertainty(&src, &tgt, b, k, Scorer::Margin, &Exclusions::new()).unwrap();
        let used_k = plan.k.unwrap();
        let index = demux_core::Index::build(&src).unwrap();
        let union = index.neighbor_union(&tgt, used_k).unwrap();
        assert!(union.len() >= b || used_k == src.len());
        for id in &plan.chosen {
            assert!(union.members().contains(&src.position(id).unwrap()));
        }
        assert_eq!(plan.chosen.len(), b);
    }
}

#[test]
fn random_inclusion_frequency_is_binomial() {
    // each of n items is chosen with probability b/n
    let mut r = rng(7);
    let src = seq_dataset(&mut r, Role::Source, 20, 2, &["a"]);
    let (b, reps) = (5usize, 4000usize);
    let mut hits = vec![0usize; src.len()];
    for seed in 0..reps as u64 {
        for id in select_random(&src, b, seed, &Exclusions::new())
            .unwrap()
            .chosen
        {
            hits[src.position(&id).unwrap()] += 1;
        }
    }
    let p = b as f64 / src.len() as f64;
    let sd = (reps as f64 * p * (1.0 - p)).sqrt();
    for h in hits {
        assert!((h as f64 - reps as f64 * p).abs() < 4.0 * sd, "{h}");
    }
}

#[test]
fn gold_language_counts_follow_pool_composition() {
    let mut r = rng(8);
    // 60% "hi", 40% "ur"
    let pool = seq_dataset(
        &mut r,
        Role::Source,
        500,
        2,
        &["hi", "hi", "hi", "ur", "ur"],
    );
    let (b, reps) = (50usize, 400u64);
    let counts: Vec<f64> = (0..reps)
        .map(|s| {
            select_gold(&pool, b, s, &Exclusions::new())
                .unwrap()
                .lang_counts["hi"] as f64
        })
        .collect();
    let mean = counts.iter().sum::<f64>() / reps as f64;
    // hypergeometric sd, finite population
    let sd = (b as f64 * 0.6 * 0.4 * (500.0 - b as f64) / 499.0).sqrt() / (reps as f64).sqrt();
    assert!((mean - 30.0).abs() < 3.0 * sd, "{mean}");
}

#[test]
fn egalitarian_quota_oracle() {
    // brute force: quotas maximize the minimum share, then prefer larger capacity
    for inst in 0..300 {
        let mut r = rng(4000 + inst);
        let langs = r.random_range(1..5);
        let caps: BTreeMap<String, usize> = (0..langs)
            .map(|l| (format!("l{l}"), r.random_range(1..12)))
            .collect();
        let b = r.random_range(1..30);
        let q = egalitarian_quotas(&caps, b);
        let total: usize = q.values().sum();
        assert_eq!(total, b.min(caps.values().sum()));
        for (l, &n) in &q {
            assert!(n <= caps[l]);
        }
        // no language below capacity can be more than one short of any other
        for (l, &n) in &q {
            if n < caps[l] {
                assert!(q.values().all(|&m| m <= n + 1), "{caps:?} {b} {q:?}");
            }
        }
    }
}

#[test]
fn egalitarian_plan_matches_quotas() {
    let mut r = rng(9);
    let src = seq_dataset(&mut r, Role::Source, 23, 2, &["a", "b", "b", "c", "c", "c"]);
    let plan = select_egalitarian(&src, 10, 3, &Exclusions::new()).unwrap();
    let caps: BTreeMap<String, usize> = ["a", "b", "c"]
        .iter()
        .map(|l| {
            (
                l.to_string(),
                src.examples().iter().filter(|e| e.language() == *l).count(),
            )
        })
        .collect();
    let q: BTreeMap<String, usize> = egalitarian_quotas(&caps, 10)
        .into_iter()
        .filter(|(_, n)| *n > 0)
        .collect();
    assert_eq!(plan.lang_counts, q);
}

#[test]
fn same_ratio_matches_reference_histogram() {
    let mut r = rng(10);
    let src = seq_dataset(
        &mut r,
        Role::Source,
        1000,
        4,
        &["de", "es", "fr", "ru", "zh"],
    );
    let tgt = seq_dataset(&mut r, Role::Target, 20, 4, &["hi"]);
    let reference =
        select_knn_uncertainty(&src, &tgt, 100, 5, Scorer::Margin, &Exclusions::new()).unwrap();
    let mut differ = 0;
    for seed in 0..100 {
        let plan = same_ratio_random(&reference, &src, seed, &Exclusions::new()).unwrap();
        assert_eq!(plan.lang_counts, reference.lang_counts);
        if chosen_set(&plan) != chosen_set(&reference) {
            differ += 1;
        }
    }
    assert!(differ >= 95, "{differ}");
}

#[test]
fn budget_sweep_sizes() {
    let mut r = rng(11);
    let src = seq_dataset(&mut r, Role::Source, 1200, 4, &["a", "b", "c"]);
    let tgt = seq_dataset(&mut r, Role::Target, 30, 4, &["t"]);
    for b in [5, 10, 50, 100, 250, 500, 1000] {
        let none = Exclusions::new();
        for plan in [
            select_random(&src, b, 1, &none).unwrap(),
            select_egalitarian(&src, b, 1, &none).unwrap(),
            select_average_dist(&src, &tgt, b, &none).unwrap(),
            select_uncertainty(&src, b, Scorer::Margin, &none).unwrap(),
            select_knn_uncertainty(&src, &tgt, b, 10, Scorer::Margin, &none).unwrap(),
        ] {
            assert_eq!(plan.chosen.len(), b, "{:?}", plan.strategy);
            assert!(!plan.shortfall);
        }
    }
}
