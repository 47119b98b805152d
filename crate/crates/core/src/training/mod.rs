//! Losses, Adam, the wound-to-ground-truth autoencoder, its training loop,
//! checkpoints and evaluation statistics.

mod adam;
mod checkpoint;
mod data;
mod eval;
mod loss;
mod model;
mod train;

use thiserror::Error;

use crate::hierarchy::HierarchyError;
use crate::mesh::MeshError;
use crate::ops::OpsError;
use crate::scargen::{ScarError, Split};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use data::{load_split, Pair};
pub use eval::{evaluate, EvalReport, IdentityReconstructor, MeshRecord, Reconstructor, StatRow};
pub use loss::{loss, loss_positions, vertex_distance, LossMetric, LossSpec, LossTarget};
pub use model::{Architecture, Block, Model, Normalizer, Parameters};
pub use train::{append_metrics_csv, train, MetricRow, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("vertex count mismatch: {left} vs {right}")]
    CountMismatch { left: usize, right: usize },
    #[error("the {0} split is empty")]
    EmptySplit(Split),
    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),
    #[error("divergence at step {step}: {what}")]
    Divergence { step: u64, what: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Ops(#[from] OpsError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Dataset(#[from] ScarError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl TrainingError {
    /// True for failures caused by non-finite numbers rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            TrainingError::Divergence { .. }
                | TrainingError::Ops(OpsError::NonFinite(_))
                | TrainingError::Ops(OpsError::ZeroDensity(_))
        )
    }
}
