//! Minimal f64 neural-network toolkit: dense tensors, a reverse-mode
//! autodiff tape, parameter storage, Adam, and gradient checking.

pub mod graph;
pub mod params;
pub mod tensor;

pub use graph::{Graph, NodeId, LN_EPS};
pub use params::{
    check_gradients, collect_grads, relative_error, Adam, GradCheckReport, Grads, ParamId,
    ParamSet,
};
pub use tensor::Tensor;
