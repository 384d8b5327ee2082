//! End-to-end CTR model: forward pass, loss and metrics, training and
//! checkpoints.

mod checkpoint;
mod config;
mod forward;
mod metrics;
mod optim;
mod params;
mod train;

pub use checkpoint::{from_bytes, load_checkpoint, save_checkpoint, to_bytes, MAGIC, VERSION};
pub use config::{ModelConfig, OptimizerKind, TrainConfig};
pub use forward::{
    attention_trace, encode, forward_graph, item_outputs, predict, predict_prepared, prepare,
    PreparedSequence, Sample,
};
pub use metrics::{auc, bce_loss, EvalMetrics};
pub use optim::{Adam, Optimizer};
pub use params::{ModelParams, Weights};
pub use train::{
    batch_gradients, evaluate, predictions, prepare_samples, train, train_step, PreparedSample,
    StepRecord,
};
