//! Minimal dense compute kernels with analytic backpropagation.
//!
//! Everything here is a pure function of its inputs, runs in double
//! precision, and has its backward pass verified against central finite
//! differences (see [`gradcheck`]).

pub mod activation;
pub mod adam;
pub mod batch_norm;
pub mod conv;
pub mod gradcheck;
pub mod loss;

pub use activation::{leaky_relu_backward, leaky_relu_forward, relu_backward, relu_forward};
pub use adam::{adam_step, AdamState};
pub use batch_norm::{
    batch_norm_backward, batch_norm_forward, BatchNormState, BnGrads, BnMode, BnOutput,
    BN_EPS_DEFAULT, BN_MOMENTUM_DEFAULT,
};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvKernel};
pub use gradcheck::{finite_diff_gradient, max_rel_error, run_gradcheck_suite, GradCheckReport};
pub use loss::{l2_loss, l2_loss_grad};
