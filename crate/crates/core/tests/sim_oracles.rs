mod common;

use common::*;
use demux_core::sim::experiment::{initial_probe, run_experiment, RunOptions};
use demux_core::sim::probe::{softmax, train_probe_with_history, ProbeModel, TrainConfig};
use demux_core::sim::stats::{mean, pearson, std_dev};
use demux_core::sim::{make_synthetic_task, SimTask};
use demux_core::{ALConfig, Example, Strategy, TaskKind, UncertaintyPayload};
use rand::Rng;

fn pearson_two_pass(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx).powi(2);
        syy += (y[i] - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

#[test]
fn pearson_matches_two_pass_formula() {
    let mut r = rng(1);
    for _ in 0..500 {
        let n = r.random_range(2..200);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 0.3 * v + r.random_range(-5.0..5.0))
            .collect();
        let got = pearson(&x, &y).unwrap();
        assert!((got - pearson_two_pass(&x, &y)).abs() < 1e-12);
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut r = rng(2);
    let (c, d) = (3, 4);
    let xs: Vec<Vec<f64>> = (0..5).map(|_| point(&mut r, d)).collect();
    let data: Vec<(&[f64], usize)> = xs
        .iter()
        .enumerate()
        .map(|(i, x)| (x.as_slice(), i % c))
        .collect();
    let w: Vec<f64> = (0..c * d).map(|_| r.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..c).map(|_| r.random_range(-1.0..1.0)).collect();
    let l2 = 0.1;
    let model = ProbeModel::from_parts(c, d, w.clone(), b.clone());
    let (gw, gb) = model.gradient(&data, l2);
    let h = 1e-6;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
    let mut worst: f64 = 0.0;
    for i in 0..w.len() {
        let (mut up, mut down) = (w.clone(), w.clone());
        up[i] += h;
        down[i] -= h;
        let num = (ProbeModel::from_parts(c, d, up, b.clone()).loss(&data, l2)
            - ProbeModel::from_parts(c, d, down, b.clone()).loss(&data, l2))
            / (2.0 * h);
        worst = worst.max(rel(gw[i], num));
    }
    for i in 0..b.len() {
        let (mut up, mut down) = (b.clone(), b.clone());
        up[i] += h;
        down[i] -= h;
        let num = (ProbeModel::from_parts(c, d, w.clone(), up).loss(&data, l2)
            - ProbeModel::from_parts(c, d, w.clone(), down).loss(&data, l2))
            / (2.0 * h);
        worst = worst.max(rel(gb[i], num));
    }
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn training_loss_is_non_increasing_on_a_world() {
    let world = make_synthetic_task(&SimTask::default()).unwrap();
    let data: Vec<(&[f64], usize)> = world
        .seed_set
        .examples
        .iter()
        .map(|e| (e.features.as_slice(), e.label))
        .collect();
    let cfg = TrainConfig {
        epochs: 100,
        lr: 0.01,
        l2: 1e-3,
    };
    let (_, losses) = train_probe_with_history(&ProbeModel::zeros(4, 16), &data, &cfg).unwrap();
    assert!(losses.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn softmax_outputs_are_valid_payloads() {
    let mut r = rng(3);
    for i in 0..500 {
        let logits: Vec<f64> = (0..r.random_range(2..10))
            .map(|_| r.random_range(-40.0..40.0))
            .collect();
        let p = softmax(&logits);
        Example::new(
            format!("e{i}"),
            "xx",
            0,
            vec![0.0],
            UncertaintyPayload::SeqProbs(p),
        )
        .unwrap();
    }
}

#[test]
fn full_overlap_matches_target_marginals() {
    let task = SimTask {
        overlap: 1.0,
        proximity_spread: 0.0,
        source_languages: 1,
        target_languages: 1,
        source_per_language: 400,
        target_per_language: 400,
        seed: 5,
        ..SimTask::default()
    };
    let w = make_synthetic_task(&task).unwrap();
    assert_eq!(w.source_means[0].1, w.target_means[0].1);
    // both pools hold 100 examples per class, so only noise separates their means
    let n = 400.0_f64;
    let sigma = task.noise_std * (2.0 / n).sqrt();
    for j in 0..task.dim {
        let ms = w.source.examples.iter().map(|e| e.features[j]).sum::<f64>() / n;
        let mt = w.target.examples.iter().map(|e| e.features[j]).sum::<f64>() / n;
        assert!((ms - mt).abs() < 3.0 * sigma, "dim {j}: {ms} vs {mt}");
    }
}

fn small_world() -> SimTask {
    SimTask {
        source_per_language: 20,
        target_per_language: 10,
        test_per_language: 100,
        gold_per_language: 20,
        seed_set_size: 40,
        ..SimTask::default()
    }
}

#[test]
fn full_budget_saturates_every_zero_shot_arm() {
    let sim = small_world();
    let n = sim.source_languages * sim.source_per_language;
    let mut cfg = ALConfig::new(n, 1, Strategy::Random, TaskKind::SequenceLevel);
    cfg.k = Some(5);
    let arms = [
        Strategy::Random,
        Strategy::Egalitarian,
        Strategy::AverageDist,
        Strategy::Uncertainty,
        Strategy::KnnUncertainty,
    ];
    let table = run_experiment(&sim, &cfg, &RunOptions::default(), &arms, 3).unwrap();
    for seed in 0..3 {
        let accs: Vec<f64> = table
            .rows
            .iter()
            .filter(|r| r.seed == seed)
            .map(|r| r.accuracy)
            .collect();
        let spread = accs.iter().cloned().fold(f64::MIN, f64::max)
            - accs.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread <= 0.005, "seed {seed}: {accs:?}");
    }
}

#[test]
fn random_against_random_is_noise() {
    let sim = small_world();
    let run = |seed| {
        let mut cfg = ALConfig::new(40, 1, Strategy::Random, TaskKind::SequenceLevel);
        cfg.seed = seed;
        run_experiment(&sim, &cfg, &RunOptions::default(), &[Strategy::Random], 20).unwrap()
    };
    let (a, b) = (run(1), run(99));
    let diffs: Vec<f64> = a
        .rows
        .iter()
        .zip(&b.rows)
        .map(|(x, y)| x.accuracy - y.accuracy)
        .collect();
    let t = mean(&diffs) / (std_dev(&diffs) / (diffs.len() as f64).sqrt());
    assert!(t.abs() < 3.0, "t = {t}");
}

#[test]
fn initial_probe_is_deterministic() {
    let world = make_synthetic_task(&small_world()).unwrap();
    let cfg = TrainConfig::default();
    assert_eq!(
        initial_probe(&world, &cfg).unwrap(),
        initial_probe(&world, &cfg).unwrap()
    );
}
