//! Federated Averaging combined with Learning-without-Forgetting for
//! sequential multi-event classification over fixed-dimension sentence
//! embeddings.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense `f64` matrix.
//! - [`nn`]: ReLU MLP, cross-entropy, analytic gradients, Adam.
//! - [`continual`]: teacher snapshots, soft targets, distillation, the
//!   per-task training loop.
//! - [`federated`]: partitioning, local updates, aggregation, the event
//!   sequence driver.
//! - [`data`]: embedding CSV files, synthetic Gaussian events, splits, batching.
//! - [`metrics`]: evaluation, accuracy matrices, forgetting, export.
//! - [`experiment`]: config files and the `run` / `sweep` / `baselines` /
//!   `gen-synth` runners behind the `fedlwf` binary.
//!
//! Everything is deterministic in its seeds; see [`rng`].

pub mod cli;
pub mod continual;
pub mod data;
pub mod error;
pub mod experiment;
pub mod federated;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod tensor;

pub use continual::{
    distillation_loss, record_soft_labels, snapshot_teacher, train_on_task, EpochMetrics, LwfConfig,
    SoftLabels, TeacherSnapshot, TrainConfig,
};
pub use data::{
    batch_iter, load_embedding_csv, split_dataset, synth_gaussian, write_embedding_csv, Dataset,
    EventSplits, SplitFractions, SyntheticSuite,
};
pub use error::{Error, Result};
pub use federated::{
    aggregate, local_update, partition, run_event, run_event_central, run_event_sequence, ClientShard,
    ClientUpdate, FedConfig, Mode, ModelSpec, PartitionStrategy, SequenceOutcome, Summary,
};
pub use metrics::{cumulative_mean, evaluate, export, forgetting, AccuracyMatrix, EvalRecord, ExportFormat, MetricsLog, Split};
pub use nn::{adam_step, forward, init_model, loss_and_grads, softmax_xent, AdamState, Hyper, ModelParams};
pub use tensor::Matrix;
