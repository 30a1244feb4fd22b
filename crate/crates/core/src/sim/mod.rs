//! Desk-scale end-to-end verification: synthetic worlds, a trainable probe,
//! strategy-vs-baseline experiments and neighborhood correlation analysis.

pub mod analysis;
pub mod experiment;
pub mod probe;
pub mod stats;
pub mod world;

use thiserror::Error;

use crate::knn::KnnError;
use crate::model::ModelError;
use crate::orchestrator::OrchestratorError;
use crate::uncertainty::ScoreError;

pub use analysis::{language_distribution, neighborhood_uncertainty_correlation};
pub use experiment::{run_experiment, ExperimentConfig, ResultRow, ResultTable, Summary};
pub use probe::{train_probe, ProbeModel, TrainConfig};
pub use world::{make_synthetic_task, LabeledPool, SimExample, SimTask, SimWorld};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("degenerate covariance: noise std {0} must be positive and finite")]
    DegenerateCovariance(f64),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("need at least 2 points, found {0}")]
    TooFewPoints(usize),
    #[error("correlation undefined: vector is constant")]
    ConstantVector,
    #[error("plan is empty")]
    EmptyPlan,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error("{0}")]
    Output(String),
}
