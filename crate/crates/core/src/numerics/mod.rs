//! Dense numeric kernels: convolution, softmax, affine maps, normalization,
//! attention and small linear algebra.

pub mod conv;
pub mod linalg;
pub mod nn;
pub mod tensor;

pub use conv::{conv2d, conv3d, Conv2dKernel, Conv3dKernel};
pub use linalg::{invert, mat_add, mat_mul, transpose, Mat};
pub use nn::{layer_norm, linear, multi_head_self_attention, softmax, LayerNorm, Linear, MultiHeadAttention};
pub use tensor::{Tensor, TokenSeq};
