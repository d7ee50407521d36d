//! Summed squared-error loss on residuals.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sum over all elements of the squared difference.
pub fn l2_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if !pred.same_shape(target) {
        return Err(Error::ShapeMismatch(format!(
            "l2_loss shapes {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum())
}

/// Gradient of [`l2_loss`] with respect to the prediction: 2 (pred - target).
pub fn l2_loss_grad(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    if !pred.same_shape(target) {
        return Err(Error::ShapeMismatch("l2_loss_grad shapes differ".into()));
    }
    let (n, h, w, c) = pred.shape();
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| 2.0 * (p - t))
        .collect();
    Tensor::from_vec(n, h, w, c, data)
}
