//! Per-channel batch normalization over NHWC tensors.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BN_EPS_DEFAULT: f64 = 1e-5;
pub const BN_MOMENTUM_DEFAULT: f64 = 0.9;

/// Scale/shift plus running statistics for one normalized layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNormState {
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: BN_EPS_DEFAULT,
            momentum: BN_MOMENTUM_DEFAULT,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.gamma.len();
        if self.beta.len() != c || self.running_mean.len() != c || self.running_var.len() != c {
            return Err(Error::ShapeMismatch("batch norm channel vectors".into()));
        }
        if self.eps <= 0.0 {
            return Err(Error::InvalidParam(format!("bn eps {} <= 0", self.eps)));
        }
        if self.running_var.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParam("negative running variance".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

/// Batch statistics retained for the backward pass.
#[derive(Clone, Debug)]
pub struct BnTrainCache {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

/// Forward result. The op itself is pure: updated running statistics are
/// returned for the caller to apply, not written in place.
#[derive(Clone, Debug)]
pub struct BnOutput {
    pub output: Tensor,
    pub cache: Option<BnTrainCache>,
    pub new_running: Option<(Vec<f64>, Vec<f64>)>,
}

pub fn batch_norm_forward(x: &Tensor, params: &BatchNormState, mode: BnMode) -> Result<BnOutput> {
    params.validate()?;
    let (n, h, w, c) = x.shape();
    if c != params.channels() {
        return Err(Error::ShapeMismatch(format!(
            "input has {c} channels, bn has {}",
            params.channels()
        )));
    }
    match mode {
        BnMode::Infer => {
            let mut out = Tensor::zeros(n, h, w, c);
            let scale: Vec<f64> = (0..c)
                .map(|ch| params.gamma[ch] / (params.running_var[ch] + params.eps).sqrt())
                .collect();
            for (i, (&v, o)) in x.data().iter().zip(out.data_mut()).enumerate() {
                let ch = i % c;
                *o = (v - params.running_mean[ch]) * scale[ch] + params.beta[ch];
            }
            Ok(BnOutput {
                output: out,
                cache: None,
                new_running: None,
            })
        }
        BnMode::Train => {
            if n < 2 {
                return Err(Error::InvalidParam(
                    "batch norm train mode requires batch size >= 2".into(),
                ));
            }
            let m = (n * h * w) as f64;
            let mut mean = vec![0.0; c];
            for (i, &v) in x.data().iter().enumerate() {
                mean[i % c] += v;
            }
            for mu in &mut mean {
                *mu /= m;
            }
            let mut var = vec![0.0; c];
            for (i, &v) in x.data().iter().enumerate() {
                let d = v - mean[i % c];
                var[i % c] += d * d;
            }
            for va in &mut var {
                *va /= m;
            }
            let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + params.eps).sqrt()).collect();

            let mut out = Tensor::zeros(n, h, w, c);
            for (i, (&v, o)) in x.data().iter().zip(out.data_mut()).enumerate() {
                let ch = i % c;
                *o = params.gamma[ch] * (v - mean[ch]) * inv_std[ch] + params.beta[ch];
            }
            let mom = params.momentum;
            let new_mean: Vec<f64> = params
                .running_mean
                .iter()
                .zip(&mean)
                .map(|(&r, &b)| mom * r + (1.0 - mom) * b)
                .collect();
            let new_var: Vec<f64> = params
                .running_var
                .iter()
                .zip(&var)
                .map(|(&r, &b)| mom * r + (1.0 - mom) * b)
                .collect();
            Ok(BnOutput {
                output: out,
                cache: Some(BnTrainCache { mean, inv_std }),
                new_running: Some((new_mean, new_var)),
            })
        }
    }
}

#[derive(Clone, Debug)]
pub struct BnGrads {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Backward through train-mode normalization; batch statistics are treated
/// as functions of the input.
pub fn batch_norm_backward(
    x: &Tensor,
    params: &BatchNormState,
    cache: &BnTrainCache,
    grad_out: &Tensor,
) -> Result<(Tensor, BnGrads)> {
    let (n, h, w, c) = x.shape();
    if !x.same_shape(grad_out) {
        return Err(Error::ShapeMismatch("bn backward shapes differ".into()));
    }
    if c != params.channels() {
        return Err(Error::ShapeMismatch("bn backward channel count".into()));
    }
    let m = (n * h * w) as f64;
    let mut sum_g = vec![0.0; c];
    let mut sum_gx = vec![0.0; c]; // sum of g * xhat
    for (i, (&v, &g)) in x.data().iter().zip(grad_out.data()).enumerate() {
        let ch = i % c;
        let xhat = (v - cache.mean[ch]) * cache.inv_std[ch];
        sum_g[ch] += g;
        sum_gx[ch] += g * xhat;
    }
    let mut grad_in = Tensor::zeros(n, h, w, c);
    for (i, ((&v, &g), o)) in x
        .data()
        .iter()
        .zip(grad_out.data())
        .zip(grad_in.data_mut())
        .enumerate()
    {
        let ch = i % c;
        let xhat = (v - cache.mean[ch]) * cache.inv_std[ch];
        *o = params.gamma[ch]
            * cache.inv_std[ch]
            * (g - sum_g[ch] / m - xhat * sum_gx[ch] / m);
    }
    Ok((
        grad_in,
        BnGrads {
            gamma: sum_gx,
            beta: sum_g,
        },
    ))
}
