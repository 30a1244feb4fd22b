//! Budget-constrained active-learning data selection for zero-shot
//! cross-lingual transfer.
//!
//! Given pooled model representations and output distributions for an
//! unlabeled multilingual source pool and a small unlabeled target pool, the
//! engine decides which source examples to send for annotation. Three
//! strategies are provided:
//!
//! - **average-dist**: source points closest on average to the target pool.
//! - **uncertainty**: globally most uncertain source points (margin, min-margin,
//!   or span log-probability scores depending on the task).
//! - **knn-uncertainty**: the most uncertain points inside the union of each
//!   target point's k nearest source neighbors.
//!
//! Baselines (random, egalitarian, gold, same-ratio), a multi-round
//! orchestrator, an on-disk dataset and plan format, and a synthetic
//! simulator for end-to-end checks are included.

pub mod io;
pub mod knn;
pub mod model;
pub mod orchestrator;
pub mod rng;
pub mod selection;
pub mod sim;
pub mod uncertainty;

pub use knn::{Index, Neighbor, NeighborList, NeighborUnion};
pub use model::{
    dedup, fnv1a64, pool_representation, target_distance, Dataset, Example, Matrix, Role, TaskKind,
    UncertaintyPayload, WordAlignment,
};
pub use orchestrator::{run_loop, run_round, ALConfig, ModelProvider, RoundState};
pub use selection::{Exclusions, SelectionPlan, Strategy};
pub use uncertainty::{score_dataset, Scorer, UncertaintyScore};
