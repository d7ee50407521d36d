//! Elementwise activations.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu_forward(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if !x.same_shape(grad_out) {
        return Err(Error::ShapeMismatch("relu_backward shapes differ".into()));
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    let (n, h, w, c) = x.shape();
    Tensor::from_vec(n, h, w, c, data)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidParam(format!("alpha {alpha} outside [0, 1)")));
    }
    Ok(())
}

pub fn leaky_relu_forward(x: &Tensor, alpha: f64) -> Result<Tensor> {
    check_alpha(alpha)?;
    Ok(x.map(|v| if v > 0.0 { v } else { alpha * v }))
}

pub fn leaky_relu_backward(x: &Tensor, alpha: f64, grad_out: &Tensor) -> Result<Tensor> {
    check_alpha(alpha)?;
    if !x.same_shape(grad_out) {
        return Err(Error::ShapeMismatch(
            "leaky_relu_backward shapes differ".into(),
        ));
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { alpha * g })
        .collect();
    let (n, h, w, c) = x.shape();
    Tensor::from_vec(n, h, w, c, data)
}
