//! The K-round acquisition loop.
//!
//! Between rounds a [`ModelProvider`] supplies freshly scored pools (the model
//! has been fine-tuned on everything selected so far). Example ids must stay
//! stable across rounds because exclusions are id based.

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::io::{read_dataset_as, write_plan, DatasetIoError};
use crate::model::{dedup, Dataset, Role, TaskKind};
use crate::selection::{
    same_ratio_random, select_average_dist, select_egalitarian, select_gold,
    select_knn_uncertainty, select_random, select_uncertainty, Exclusions, SelectError,
    SelectionPlan, Strategy,
};
use crate::uncertainty::Scorer;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("budget exhausted: all {rounds} rounds have run")]
    BudgetExhausted { rounds: usize },
    #[error("provider failure in round {round}: {message}")]
    ProviderFailure { round: usize, message: String },
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Io(#[from] DatasetIoError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ALConfig {
    /// Total annotation budget over all rounds.
    pub budget: usize,
    pub rounds: usize,
    pub strategy: Strategy,
    /// Neighborhood size, knn-uncertainty only.
    pub k: Option<usize>,
    /// Defaults to the task's standard scorer.
    pub scorer: Option<Scorer>,
    pub seed: u64,
    pub task: TaskKind,
    /// Per-round reference plans for same-ratio.
    pub reference: Vec<SelectionPlan>,
}

impl ALConfig {
    pub fn new(budget: usize, rounds: usize, strategy: Strategy, task: TaskKind) -> Self {
        ALConfig {
            budget,
            rounds,
            strategy,
            k: None,
            scorer: None,
            seed: 0,
            task,
            reference: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let bad = |m: &str| Err(OrchestratorError::InvalidConfig(m.to_string()));
        if self.budget == 0 {
            return bad("budget must be at least 1");
        }
        if self.rounds == 0 {
            return bad("rounds must be at least 1");
        }
        if self.rounds > self.budget {
            return bad("more rounds than budget leaves empty rounds");
        }
        match (self.strategy, self.k) {
            (Strategy::KnnUncertainty, None | Some(0)) => {
                return bad("knn-uncertainty needs k >= 1")
            }
            (Strategy::KnnUncertainty, Some(_)) => {}
            (_, Some(_)) => return bad("k only applies to knn-uncertainty"),
            _ => {}
        }
        if let Some(sc) = self.scorer {
            if !self.strategy.uses_scorer() {
                return bad("scorer only applies to uncertainty strategies");
            }
            if !sc.supports(self.task) {
                return Err(OrchestratorError::InvalidConfig(format!(
                    "scorer {sc} cannot score {} data",
                    self.task
                )));
            }
        }
        if self.strategy == Strategy::SameRatio && self.reference.len() < self.rounds {
            return bad("same-ratio needs one reference plan per round");
        }
        Ok(())
    }

    pub fn scorer(&self) -> Scorer {
        self.scorer
            .unwrap_or_else(|| Scorer::default_for(self.task))
    }

    /// Points requested in 1-based round `round`: `floor(B/K)`, plus one for
    /// the first `B mod K` rounds.
    pub fn round_budget(&self, round: usize) -> usize {
        let base = self.budget / self.rounds;
        base + usize::from(round <= self.budget % self.rounds)
    }

    pub fn round_budgets(&self) -> Vec<usize> {
        (1..=self.rounds).map(|r| self.round_budget(r)).collect()
    }

    /// Sampling seed of round `round`.
    pub fn round_seed(&self, round: usize) -> u64 {
        self.seed.wrapping_add(round as u64 - 1)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoundState {
    /// Completed rounds.
    pub round_index: usize,
    pub exclusions: Exclusions,
    pub plan_history: Vec<SelectionPlan>,
}

impl RoundState {
    pub fn selected(&self) -> usize {
        self.plan_history.iter().map(SelectionPlan::len).sum()
    }
}

/// Runs one acquisition round on freshly scored pools.
pub fn run_round(
    cfg: &ALConfig,
    source: &Dataset,
    targets: Option<&Dataset>,
    mut state: RoundState,
) -> Result<(SelectionPlan, RoundState), OrchestratorError> {
    cfg.validate()?;
    if state.round_index >= cfg.rounds {
        return Err(OrchestratorError::BudgetExhausted { rounds: cfg.rounds });
    }
    let round = state.round_index + 1;
    if source.task() != cfg.task {
        return Err(OrchestratorError::InvalidConfig(format!(
            "configured for {} but source pool is {}",
            cfg.task,
            source.task()
        )));
    }
    let b = cfg.round_budget(round);
    let seed = cfg.round_seed(round);
    let source = dedup(source);
    let targets = targets.map(dedup);
    let need_targets = || {
        targets.as_ref().ok_or_else(|| {
            OrchestratorError::InvalidConfig(format!("{} needs a target pool", cfg.strategy))
        })
    };
    let excl = &state.exclusions;
    let any_eligible = source.examples().iter().any(|e| !excl.contains(e.id()));
    let mut plan = if !any_eligible {
        SelectionPlan::empty(cfg.strategy, round as u32, seed, b)
    } else {
        match cfg.strategy {
            Strategy::Random => select_random(&source, b, seed, excl)?,
            Strategy::Gold => select_gold(&source, b, seed, excl)?,
            Strategy::Egalitarian => select_egalitarian(&source, b, seed, excl)?,
            Strategy::AverageDist => select_average_dist(&source, need_targets()?, b, excl)?,
            Strategy::Uncertainty => select_uncertainty(&source, b, cfg.scorer(), excl)?,
            Strategy::KnnUncertainty => select_knn_uncertainty(
                &source,
                need_targets()?,
                b,
                cfg.k.expect("validated"),
                cfg.scorer(),
                excl,
            )?,
            Strategy::SameRatio => {
                same_ratio_random(&cfg.reference[round - 1], &source, seed, excl)?
            }
        }
    };
    plan.round = round as u32;
    plan.seed = seed;
    if state.selected() + plan.len() > cfg.budget {
        return Err(OrchestratorError::BudgetExhausted { rounds: cfg.rounds });
    }
    state.exclusions.extend(plan.chosen.iter().cloned());
    state.plan_history.push(plan.clone());
    state.round_index = round;
    Ok((plan, state))
}

/// Pools for one round, scored by the current model.
#[derive(Clone, Debug)]
pub struct RoundData {
    pub source: Dataset,
    pub targets: Option<Dataset>,
}

pub trait ModelProvider {
    /// Pools for 1-based round `round`, given all plans emitted so far.
    fn round_data(
        &mut self,
        round: usize,
        history: &[SelectionPlan],
    ) -> Result<RoundData, OrchestratorError>;

    /// Called after each plan is emitted; providers that retrain do it here.
    fn plan_emitted(&mut self, _plan: &SelectionPlan) -> Result<(), OrchestratorError> {
        Ok(())
    }
}

/// Runs all `cfg.rounds` rounds against `provider`.
pub fn run_loop(
    cfg: &ALConfig,
    provider: &mut dyn ModelProvider,
) -> Result<Vec<SelectionPlan>, OrchestratorError> {
    cfg.validate()?;
    let mut state = RoundState::default();
    for round in 1..=cfg.rounds {
        let data = provider.round_data(round, &state.plan_history)?;
        if let Some(missing) = state
            .exclusions
            .ids()
            .iter()
            .find(|id| data.source.position(id).is_none())
        {
            return Err(OrchestratorError::ProviderFailure {
                round,
                message: format!("source pool lost previously selected id {missing:?}"),
            });
        }
        let (plan, next) = run_round(cfg, &data.source, data.targets.as_ref(), state)?;
        provider.plan_emitted(&plan)?;
        state = next;
    }
    Ok(state.plan_history)
}

/// Serves the same pools every round.
pub struct StaticProvider {
    pub source: Dataset,
    pub targets: Option<Dataset>,
}

impl ModelProvider for StaticProvider {
    fn round_data(
        &mut self,
        _: usize,
        _: &[SelectionPlan],
    ) -> Result<RoundData, OrchestratorError> {
        Ok(RoundData {
            source: self.source.clone(),
            targets: self.targets.clone(),
        })
    }
}

pub const READY_FILE: &str = "READY";
pub const DONE_FILE: &str = "DONE";
pub const PLAN_FILE: &str = "plan.json";

/// File-system handshake with an external trainer.
///
/// For round `r` the trainer fills `round_r/source/` (and `round_r/target/`
/// when the strategy needs it), then creates `round_r/READY`. The engine
/// writes `round_r/plan.json` followed by `round_r/DONE`.
pub struct DirectoryProvider {
    root: PathBuf,
    poll_interval: Duration,
    timeout: Duration,
}

impl DirectoryProvider {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirectoryProvider {
            root: root.into(),
            poll_interval: Duration::from_millis(200),
            timeout: Duration::ZERO,
        }
    }

    /// How long to wait for `READY`; zero means it must already exist.
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_poll_interval(mut self, interval: Duration) -> Self {
        self.poll_interval = interval;
        self
    }

    pub fn round_dir(&self, round: usize) -> PathBuf {
        round_dir(&self.root, round)
    }
}

pub fn round_dir(root: &Path, round: usize) -> PathBuf {
    root.join(format!("round_{round}"))
}

impl ModelProvider for DirectoryProvider {
    fn round_data(
        &mut self,
        round: usize,
        _: &[SelectionPlan],
    ) -> Result<RoundData, OrchestratorError> {
        let dir = self.round_dir(round);
        let ready = dir.join(READY_FILE);
        let started = Instant::now();
        while !ready.exists() {
            if started.elapsed() >= self.timeout {
                return Err(OrchestratorError::ProviderFailure {
                    round,
                    message: format!("{} not found", ready.display()),
                });
            }
            thread::sleep(self.poll_interval);
        }
        let failure = |e: DatasetIoError| OrchestratorError::ProviderFailure {
            round,
            message: e.to_string(),
        };
        let source = read_dataset_as(&dir.join("source"), Role::Source).map_err(failure)?;
        let target_dir = dir.join("target");
        let targets = if target_dir.exists() {
            Some(read_dataset_as(&target_dir, Role::Target).map_err(failure)?)
        } else {
            None
        };
        Ok(RoundData { source, targets })
    }

    fn plan_emitted(&mut self, plan: &SelectionPlan) -> Result<(), OrchestratorError> {
        let dir = self.round_dir(plan.round as usize);
        write_plan(plan, &dir.join(PLAN_FILE))?;
        fs::write(dir.join(DONE_FILE), b"").map_err(|e| {
            OrchestratorError::Io(DatasetIoError::Io {
                path: dir.join(DONE_FILE),
                source: e,
            })
        })
    }
}
