//! Strategy-vs-baseline experiments on synthetic worlds.
//!
//! For every seed a fresh world is generated and an initial probe is trained
//! on the English seed set. Each arm then runs the acquisition loop against
//! an in-process provider that re-scores the pools with the current probe,
//! and after every round continues training on the seed set plus everything
//! annotated so far. Accuracy is measured on the target-language test set.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::probe::{train_probe, ProbeModel, TrainConfig};
use super::stats::{mean, paired_permutation_p, std_dev};
use super::world::{make_synthetic_task, LabeledPool, SimTask, SimWorld};
use super::SimError;
use crate::io::{to_canonical_json, DatasetIoError};
use crate::model::Role;
use crate::orchestrator::{run_loop, ALConfig, ModelProvider, OrchestratorError, RoundData};
use crate::selection::{SelectionPlan, Strategy};
use crate::uncertainty::Scorer;

/// Everything `demux simulate` reads from its config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: SimTask,
    pub train: TrainConfig,
    pub budgets: Vec<usize>,
    pub rounds: usize,
    pub k: usize,
    pub scorer: Option<Scorer>,
    pub selection_seed: u64,
    /// Arm whose language counts the same-ratio arm copies.
    pub same_ratio_reference: Strategy,
    /// Arm the paired significance tests compare against.
    pub baseline: Strategy,
    pub permutations: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            world: SimTask::default(),
            train: TrainConfig::default(),
            budgets: vec![100],
            rounds: 1,
            k: 10,
            scorer: None,
            selection_seed: 0,
            same_ratio_reference: Strategy::KnnUncertainty,
            baseline: Strategy::Random,
            permutations: 10_000,
        }
    }
}

impl ExperimentConfig {
    /// Acquisition settings for one budget of the sweep.
    pub fn al_config(&self, budget: usize) -> ALConfig {
        let mut al = ALConfig::new(
            budget,
            self.rounds,
            Strategy::Random,
            crate::TaskKind::SequenceLevel,
        );
        al.k = Some(self.k);
        al.scorer = self.scorer;
        al.seed = self.selection_seed;
        al
    }

    /// Runs every budget of the sweep and concatenates the rows.
    pub fn run(&self, arms: &[Strategy], n_seeds: usize) -> Result<ResultTable, SimError> {
        let mut table = ResultTable::default();
        for &budget in &self.budgets {
            let part = run_experiment(
                &self.world,
                &self.al_config(budget),
                &RunOptions {
                    train: self.train,
                    same_ratio_reference: self.same_ratio_reference,
                },
                arms,
                n_seeds,
            )?;
            table.rows.extend(part.rows);
        }
        Ok(table)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub train: TrainConfig,
    pub same_ratio_reference: Strategy,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            train: TrainConfig::default(),
            same_ratio_reference: Strategy::KnnUncertainty,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub arm: String,
    pub seed: u64,
    pub budget: usize,
    pub round: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedStats {
    pub mean_diff: f64,
    pub p_value: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryGroup {
    pub budget: usize,
    pub round: usize,
    pub arms: BTreeMap<String, ArmStats>,
    /// Paired comparison of each arm against the baseline, one-sided
    /// (arm better than baseline).
    pub paired: BTreeMap<String, PairedStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub baseline: String,
    pub permutations: usize,
    pub groups: Vec<SummaryGroup>,
}

impl ResultTable {
    /// Accuracies of `arm` at (`budget`, `round`) keyed by seed.
    pub fn accuracies(&self, arm: &str, budget: usize, round: usize) -> BTreeMap<u64, f64> {
        self.rows
            .iter()
            .filter(|r| r.arm == arm && r.budget == budget && r.round == round)
            .map(|r| (r.seed, r.accuracy))
            .collect()
    }

    pub fn summary(&self, baseline: &str, permutations: usize) -> Summary {
        let mut keys: Vec<(usize, usize)> = self.rows.iter().map(|r| (r.budget, r.round)).collect();
        keys.sort_unstable();
        keys.dedup();
        let mut arm_names: Vec<&str> = self.rows.iter().map(|r| r.arm.as_str()).collect();
        arm_names.sort_unstable();
        arm_names.dedup();
        let groups = keys
            .into_iter()
            .map(|(budget, round)| {
                let base = self.accuracies(baseline, budget, round);
                let mut arms = BTreeMap::new();
                let mut paired = BTreeMap::new();
                for &arm in &arm_names {
                    let acc = self.accuracies(arm, budget, round);
                    if acc.is_empty() {
                        continue;
                    }
                    let values: Vec<f64> = acc.values().copied().collect();
                    arms.insert(
                        arm.to_string(),
                        ArmStats {
                            mean: mean(&values),
                            std: std_dev(&values),
                            n: values.len(),
                        },
                    );
                    if arm == baseline || base.is_empty() {
                        continue;
                    }
                    let diffs: Vec<f64> = acc
                        .iter()
                        .filter_map(|(s, a)| base.get(s).map(|b| a - b))
                        .collect();
                    if diffs.is_empty() {
                        continue;
                    }
                    paired.insert(
                        arm.to_string(),
                        PairedStats {
                            mean_diff: mean(&diffs),
                            p_value: paired_permutation_p(&diffs, permutations, 0),
                            n: diffs.len(),
                        },
                    );
                }
                SummaryGroup {
                    budget,
                    round,
                    arms,
                    paired,
                }
            })
            .collect();
        Summary {
            baseline: baseline.to_string(),
            permutations,
            groups,
        }
    }

    pub fn to_csv(&self) -> Result<String, SimError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)
                .map_err(|e| SimError::Output(e.to_string()))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| SimError::Output(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| SimError::Output(e.to_string()))
    }

    /// Writes `results.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path, baseline: &str, permutations: usize) -> Result<(), SimError> {
        let out = |e: DatasetIoError| SimError::Output(e.to_string());
        std::fs::create_dir_all(dir)
            .map_err(|e| SimError::Output(format!("{}: {e}", dir.display())))?;
        crate::io::write_atomic(&dir.join("results.csv"), self.to_csv()?.as_bytes())
            .map_err(out)?;
        let summary = to_canonical_json(&self.summary(baseline, permutations)).map_err(out)?;
        crate::io::write_atomic(&dir.join("summary.json"), summary.as_bytes()).map_err(out)
    }
}

/// Indices of `pool` as `(features, label)` pairs.
fn training_pairs(pool: &LabeledPool, idx: impl Iterator<Item = usize>) -> Vec<(&[f64], usize)> {
    idx.map(|i| {
        let e = &pool.examples[i];
        (e.features.as_slice(), e.label)
    })
    .collect()
}

/// Probe trained on the English seed set only.
pub fn initial_probe(world: &SimWorld, train: &TrainConfig) -> Result<ProbeModel, SimError> {
    let start = ProbeModel::zeros(world.task.classes, world.task.dim);
    let data = training_pairs(&world.seed_set, 0..world.seed_set.len());
    train_probe(&start, &data, train)
}

struct SimProvider<'w> {
    world: &'w SimWorld,
    pool: &'w LabeledPool,
    lookup: HashMap<&'w str, usize>,
    probe: ProbeModel,
    train: TrainConfig,
    annotated: Vec<usize>,
    accuracy: Vec<f64>,
}

impl<'w> SimProvider<'w> {
    fn new(
        world: &'w SimWorld,
        pool: &'w LabeledPool,
        probe: ProbeModel,
        train: TrainConfig,
    ) -> Self {
        let lookup = pool
            .examples
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.as_str(), i))
            .collect();
        SimProvider {
            world,
            pool,
            lookup,
            probe,
            train,
            annotated: Vec::new(),
            accuracy: Vec::new(),
        }
    }
}

impl ModelProvider for SimProvider<'_> {
    fn round_data(
        &mut self,
        round: usize,
        _: &[SelectionPlan],
    ) -> Result<RoundData, OrchestratorError> {
        let failure = |e: SimError| OrchestratorError::ProviderFailure {
            round,
            message: e.to_string(),
        };
        Ok(RoundData {
            source: self
                .pool
                .to_dataset(&self.probe, Role::Source)
                .map_err(failure)?,
            targets: Some(
                self.world
                    .target
                    .to_dataset(&self.probe, Role::Target)
                    .map_err(failure)?,
            ),
        })
    }

    fn plan_emitted(&mut self, plan: &SelectionPlan) -> Result<(), OrchestratorError> {
        let round = plan.round as usize;
        for id in &plan.chosen {
            let &i =
                self.lookup
                    .get(id.as_str())
                    .ok_or_else(|| OrchestratorError::ProviderFailure {
                        round,
                        message: format!("unknown id {id:?}"),
                    })?;
            self.annotated.push(i);
        }
        // training order is canonical, independent of selection order
        self.annotated.sort_unstable();
        let mut data = training_pairs(&self.world.seed_set, 0..self.world.seed_set.len());
        data.extend(training_pairs(self.pool, self.annotated.iter().copied()));
        self.probe = train_probe(&self.probe, &data, &self.train).map_err(|e| {
            OrchestratorError::ProviderFailure {
                round,
                message: e.to_string(),
            }
        })?;
        self.accuracy.push(self.world.test.accuracy(&self.probe));
        Ok(())
    }
}

fn arm_config(base: &ALConfig, arm: Strategy, reference: Vec<SelectionPlan>) -> ALConfig {
    let mut cfg = base.clone();
    cfg.strategy = arm;
    if arm != Strategy::KnnUncertainty {
        cfg.k = None;
    } else if cfg.k.is_none() {
        cfg.k = Some(10);
    }
    if !arm.uses_scorer() {
        cfg.scorer = None;
    }
    cfg.reference = reference;
    cfg
}

/// Runs one arm on `world`; returns its plans and per-round test accuracy.
pub fn run_arm(
    world: &SimWorld,
    start: &ProbeModel,
    cfg: &ALConfig,
    train: &TrainConfig,
) -> Result<(Vec<SelectionPlan>, Vec<f64>), SimError> {
    let pool = if cfg.strategy == Strategy::Gold {
        &world.gold
    } else {
        &world.source
    };
    let mut provider = SimProvider::new(world, pool, start.clone(), *train);
    let plans = run_loop(cfg, &mut provider)?;
    Ok((plans, provider.accuracy))
}

/// Mean target-test accuracy per arm across `n_seeds` worlds.
///
/// World `s` is generated with seed `sim.seed + s`; its selection seed is
/// `cfg.seed + (s << 32)`. `cfg.strategy` is ignored in favor of `arms`.
pub fn run_experiment(
    sim: &SimTask,
    cfg: &ALConfig,
    opts: &RunOptions,
    arms: &[Strategy],
    n_seeds: usize,
) -> Result<ResultTable, SimError> {
    if arms.is_empty() {
        return Err(SimError::InvalidConfig("no arms given".into()));
    }
    sim.validate()?;
    let per_seed: Vec<Vec<ResultRow>> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|s| {
            let world = make_synthetic_task(&SimTask {
                seed: sim.seed.wrapping_add(s),
                ..sim.clone()
            })?;
            let start = initial_probe(&world, &opts.train)?;
            let mut seed_cfg = cfg.clone();
            seed_cfg.seed = cfg.seed.wrapping_add(s << 32);
            let mut rows = Vec::new();
            let mut cache: HashMap<Strategy, Vec<SelectionPlan>> = HashMap::new();
            for &arm in arms {
                let reference = if arm == Strategy::SameRatio {
                    let r = opts.same_ratio_reference;
                    if r == Strategy::SameRatio {
                        return Err(SimError::InvalidConfig(
                            "same-ratio cannot reference itself".into(),
                        ));
                    }
                    match cache.get(&r) {
                        Some(p) => p.clone(),
                        None => {
                            run_arm(
                                &world,
                                &start,
                                &arm_config(&seed_cfg, r, vec![]),
                                &opts.train,
                            )?
                            .0
                        }
                    }
                } else {
                    Vec::new()
                };
                let arm_cfg = arm_config(&seed_cfg, arm, reference);
                let (plans, accuracy) = run_arm(&world, &start, &arm_cfg, &opts.train)?;
                for (round, acc) in accuracy.into_iter().enumerate() {
                    rows.push(ResultRow {
                        arm: arm.name().to_string(),
                        seed: s,
                        budget: cfg.budget,
                        round: round + 1,
                        accuracy: acc,
                    });
                }
                cache.insert(arm, plans);
            }
            Ok(rows)
        })
        .collect::<Result<_, SimError>>()?;
    Ok(ResultTable {
        rows: per_seed.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimTask {
        SimTask {
            source_per_language: 30,
            target_per_language: 10,
            test_per_language: 40,
            gold_per_language: 30,
            seed_set_size: 20,
            ..SimTask::default()
        }
    }

    #[test]
    fn one_row_per_arm_seed_round() {
        let mut cfg = ALConfig::new(20, 2, Strategy::Random, crate::TaskKind::SequenceLevel);
        cfg.k = Some(3);
        let arms = [
            Strategy::Random,
            Strategy::KnnUncertainty,
            Strategy::SameRatio,
        ];
        let table = run_experiment(&small(), &cfg, &RunOptions::default(), &arms, 2).unwrap();
        assert_eq!(table.rows.len(), 3 * 2 * 2);
        let again = run_experiment(&small(), &cfg, &RunOptions::default(), &arms, 2).unwrap();
        assert_eq!(table, again);
        let csv = table.to_csv().unwrap();
        assert!(csv.starts_with("arm,seed,budget,round,accuracy\n"));
    }

    #[test]
    fn summary_pairs_against_baseline() {
        let rows = (0..4)
            .flat_map(|s| {
                [
                    ResultRow {
                        arm: "random".into(),
                        seed: s,
                        budget: 5,
                        round: 1,
                        accuracy: 0.5,
                    },
                    ResultRow {
                        arm: "gold".into(),
                        seed: s,
                        budget: 5,
                        round: 1,
                        accuracy: 0.75,
                    },
                ]
            })
            .collect();
        let summary = ResultTable { rows }.summary("random", 1000);
        let g = &summary.groups[0];
        assert_eq!(g.arms["gold"].mean, 0.75);
        assert_eq!(g.paired["gold"].mean_diff, 0.25);
        assert!(!g.paired.contains_key("random"));
    }
}
