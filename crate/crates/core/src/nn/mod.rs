//! Dense neural-network engine: forward and backward passes over a small
//! set of layer types, cross-entropy loss, and momentum SGD.

mod init;
mod network;
mod optim;
mod params;
mod spec;
mod tensor;

pub use init::init_params;
pub use network::{forward, loss_and_grad, predict, softmax};
pub use optim::{sgd_step, MomentumBuffer, Sgd};
pub use params::{flatten_params, unflatten_params, Gradient, LayerWeights, ParamVector};
pub use spec::{Layer, NetworkSpec};
pub use tensor::Tensor;
