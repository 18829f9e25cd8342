//! Minimal dense-network engine: forward passes, analytic backward passes
//! with parameter and input gradients, optimizers, and target blending.

mod checkpoint;
mod network;
mod norm;
mod optim;

pub use checkpoint::{load_network, read_network, save_network, write_network, MAGIC};
pub use network::{
    mlp_init, Activation, ForwardCache, GradBundle, Layer, LayerGrad, NetworkParams, ParamGrads,
};
pub use norm::RunningNorm;
pub use optim::{polyak_update, Direction, Optimizer, OptimizerKind};
