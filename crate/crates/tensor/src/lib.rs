//! Dense tensors and a tape-based reverse-mode autodiff graph.
//!
//! The engine is intentionally small: it provides exactly the operators the
//! saliency network needs (3×3 and 1×1 convolution, batch normalisation,
//! pooling, bilinear resampling, channel gating and the elementwise algebra
//! used by the losses), all generic over `f32` and `f64`.

pub mod graph;
mod kernels;
pub mod nn;
pub mod params;
pub mod scalar;
pub mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use params::{ParamId, ParamKind, ParamStore};
pub use scalar::Scalar;
pub use tensor::{Tensor, TensorError};
