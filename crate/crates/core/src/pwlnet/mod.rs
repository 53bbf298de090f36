//! Minimal differentiable numeric core: dense tensors, affine layers with
//! ReLU/BReLU activations, backpropagation and first-order optimizers.

mod grid;
mod mlp;
mod optim;
pub mod pwl;
mod tensor;

pub use grid::{brelu_bias_grid, brelu_forward, BiasGrid, DEFAULT_OFFSETS};
pub use mlp::{Activation, Backward, EvalContext, Init, Layer, LayerSpec, Mlp};
pub use optim::{Method, Optimizer, OptimizerConfig};
pub use tensor::{Gradients, Parameterized, Tensor};
