//! Dense linear algebra, activations, normalisation and seeded randomness.

mod activation;
mod kernels;
mod matrix;
mod rng;
mod scalar;
mod softmax;

pub use activation::{sigmoid, sigmoid_grad, sigmoid_in_place, tanh_act, tanh_grad, tanh_in_place};
pub use kernels::{add_into, all_finite, argmax, axpy, dot, scale, sum_squares};
pub use matrix::Matrix;
pub use rng::{init_matrix, SeededRng, INIT_RANGE};
pub use scalar::Scalar;
pub use softmax::{log_softmax, log_sum_exp, softmax, softmax_in_place};
