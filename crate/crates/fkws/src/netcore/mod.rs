//! Minimal tensor type and the differentiable kernels built on it.

pub mod lstm;
pub mod ops;
pub mod tensor;

pub use lstm::{lstm_backward, lstm_forward, LstmTrace};
pub use ops::{
    concat, concat_backward, conv2d, conv2d_backward, linear, linear_backward, maxpool2,
    maxpool2_backward, mean_pool_time, mean_pool_time_backward, relu, relu_backward, softmax_ce,
    softmax_ce_backward, MaxPool2,
};
pub use tensor::{Parameter, Tensor};
