//! A small multi-task network with hand-written backpropagation.
//!
//! Input descriptors pass through two leaky-ReLU layers, the pose vector is
//! concatenated, and a ReID layer produces the retrieval feature `r`. The
//! identity, color and type classifiers all branch from `r`; the triplet loss
//! also acts on `r`.

mod data;
mod net;
mod optim;
mod params;
mod train;

pub use data::{build_inputs, Standardizer, ToyInputs};
pub use net::{backward, backward_from, batch_loss, forward, Activations, BatchLabels, LossSettings, OutputGrads};
pub use optim::{
    lr_schedule, optimizer_step, LrSchedule, OptimizerKind, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON,
};
pub use params::{Gradients, NetDims, ToyNetParams, DEFAULT_LEAKY_SLOPE, TENSOR_NAMES};
pub use train::{evaluate_model, extract_features, train, HistoryEntry, ToyNetModel, TrainConfig, TrainOutcome};
