//! Entity-embedding networks: layers, backpropagation, optimizers and training.

mod arch;
mod gradcheck;
mod graph;
mod layers;
mod optim;
mod train;

pub use crate::artifact::{load_model, save_model};
pub use crate::tensor::Matrix;
pub use arch::{
    build_model, build_stage_model, check_architecture, default_embedding_dim, ArchOverrides,
    Architecture, ConvBlock, Family, InputEncoding, CONV_BLOCKS, CONV_HIDDEN, DEFAULT_DROPOUT,
    MLP_HIDDEN,
};
pub use gradcheck::{
    grad_check, relative_error, resolvable, GradCheckReport, DEFAULT_STEP, RESOLVABLE_GRADIENT,
};
pub use graph::{Batch, Gradients, Mode, ModelGraph, ParamKind, Tensor};
pub use layers::{Activation, EmbeddingSpec, InputSpec, LayerSpec, Shape};
pub use optim::{optimizer_step, OptimizerKind, OptimizerState};
pub use train::{predict, train, Dataset, EpochRecord, Features, TrainConfig};
