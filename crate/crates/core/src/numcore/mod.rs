//! Minimal differentiable-function core: dense networks with analytic
//! backpropagation, Adam, soft target tracking and the squashed-Gaussian
//! action head.

pub mod adam;
pub mod checkpoint;
pub mod dense;
pub mod gaussian;
pub mod matrix;

pub use adam::{soft_update, AdamHyper, AdamState};
pub use dense::{Activation, DenseNet, ForwardCache, Gradients};
pub use gaussian::GaussianHead;
pub use matrix::Matrix;
