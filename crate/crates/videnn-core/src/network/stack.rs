//! Runtime form of a network: double-precision layer parameters with
//! forward, cached training forward and backward passes.
//!
//! Parameter values always sit on the f32 grid (they are promoted from the
//! stored single-precision weights, and training rounds them back after every
//! optimizer step), so converting to [`NetworkWeights`] is lossless.

use crate::error::{Error, Result};
use crate::network::{
    Activation, BatchNormParams, ConvLayerParams, LayerWeights, NetworkSpec, NetworkWeights,
    KERNEL_SIZE,
};
use crate::ops::activation::{
    leaky_relu_backward, leaky_relu_forward, relu_backward, relu_forward,
};
use crate::ops::batch_norm::{
    batch_norm_backward, batch_norm_forward, BatchNormState, BnMode, BnTrainCache,
};
use crate::ops::conv::{conv2d_backward, conv2d_forward, ConvKernel};
use crate::tensor::Tensor;

pub struct LayerStack {
    spec: NetworkSpec,
    convs: Vec<ConvKernel>,
    bns: Vec<Option<BatchNormState>>,
}

/// Activations retained by a training forward pass.
pub struct TrainPass {
    layers: Vec<LayerCache>,
    pub output: Tensor,
    /// Updated running statistics per layer, to be applied by the caller.
    pub new_running: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

struct LayerCache {
    conv_input: Tensor,
    bn_input: Option<Tensor>,
    bn_cache: Option<BnTrainCache>,
    act_input: Option<Tensor>,
}

/// Flat gradient vector in parameter order (see [`LayerStack::params_flat`]).
pub struct ParamGrads(pub Vec<f64>);

impl LayerStack {
    pub fn from_weights(spec: &NetworkSpec, weights: &NetworkWeights) -> Result<Self> {
        weights.check_against(spec)?;
        let dims = spec.layer_dims();
        let mut convs = Vec::with_capacity(dims.len());
        let mut bns = Vec::with_capacity(dims.len());
        for (layer, (c_in, c_out, _)) in weights.layers.iter().zip(dims) {
            convs.push(ConvKernel::new(
                KERNEL_SIZE,
                c_in,
                c_out,
                layer.conv.kernels.iter().map(|&v| v as f64).collect(),
                layer.conv.biases.iter().map(|&v| v as f64).collect(),
            )?);
            bns.push(layer.bn.as_ref().map(|bn| BatchNormState {
                gamma: bn.gamma.iter().map(|&v| v as f64).collect(),
                beta: bn.beta.iter().map(|&v| v as f64).collect(),
                running_mean: bn.running_mean.iter().map(|&v| v as f64).collect(),
                running_var: bn.running_var.iter().map(|&v| v as f64).collect(),
                ..BatchNormState::identity(bn.gamma.len())
            }));
        }
        Ok(Self {
            spec: *spec,
            convs,
            bns,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn to_weights(&self) -> NetworkWeights {
        let layers = self
            .convs
            .iter()
            .zip(&self.bns)
            .map(|(conv, bn)| LayerWeights {
                conv: ConvLayerParams {
                    kernels: conv.weights.iter().map(|&v| v as f32).collect(),
                    biases: conv.biases.iter().map(|&v| v as f32).collect(),
                },
                bn: bn.as_ref().map(|b| BatchNormParams {
                    gamma: b.gamma.iter().map(|&v| v as f32).collect(),
                    beta: b.beta.iter().map(|&v| v as f32).collect(),
                    running_mean: b.running_mean.iter().map(|&v| v as f32).collect(),
                    running_var: b.running_var.iter().map(|&v| v as f32).collect(),
                }),
            })
            .collect();
        NetworkWeights { layers }
    }

    fn activate(&self, x: &Tensor) -> Result<Tensor> {
        match self.spec.activation {
            Activation::Relu => Ok(relu_forward(x)),
            Activation::LeakyRelu { alpha } => leaky_relu_forward(x, alpha as f64),
        }
    }

    fn activate_backward(&self, input: &Tensor, grad: &Tensor) -> Result<Tensor> {
        match self.spec.activation {
            Activation::Relu => relu_backward(input, grad),
            Activation::LeakyRelu { alpha } => leaky_relu_backward(input, alpha as f64, grad),
        }
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.channels() != self.spec.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "input has {} channels, network expects {}",
                input.channels(),
                self.spec.in_channels
            )));
        }
        Ok(())
    }

    /// Inference pass; batch norm uses running statistics. Returns the
    /// estimated residual.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let last = self.convs.len() - 1;
        let mut x = input.clone();
        for (i, conv) in self.convs.iter().enumerate() {
            x = conv2d_forward(&x, conv)?;
            if let Some(bn) = &self.bns[i] {
                x = batch_norm_forward(&x, bn, BnMode::Infer)?.output;
            }
            if i != last {
                x = self.activate(&x)?;
            }
        }
        Ok(x)
    }

    /// First-layer post-activation feature maps (filter visualization).
    pub fn first_layer_activations(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let x = conv2d_forward(input, &self.convs[0])?;
        self.activate(&x)
    }

    /// Training pass with per-layer caches; batch norm uses batch statistics.
    pub fn forward_train(&self, input: &Tensor) -> Result<TrainPass> {
        self.check_input(input)?;
        let last = self.convs.len() - 1;
        let mut layers = Vec::with_capacity(self.convs.len());
        let mut new_running = Vec::with_capacity(self.convs.len());
        let mut x = input.clone();
        for (i, conv) in self.convs.iter().enumerate() {
            let conv_input = x;
            let conv_out = conv2d_forward(&conv_input, conv)?;
            let (bn_input, bn_cache, after_bn, running) = match &self.bns[i] {
                Some(bn) => {
                    let out = batch_norm_forward(&conv_out, bn, BnMode::Train)?;
                    (
                        Some(conv_out),
                        out.cache,
                        out.output,
                        out.new_running,
                    )
                }
                None => (None, None, conv_out, None),
            };
            new_running.push(running);
            let (act_input, next) = if i != last {
                let activated = self.activate(&after_bn)?;
                (Some(after_bn), activated)
            } else {
                (None, after_bn)
            };
            layers.push(LayerCache {
                conv_input,
                bn_input,
                bn_cache,
                act_input,
            });
            x = next;
        }
        Ok(TrainPass {
            layers,
            output: x,
            new_running,
        })
    }

    /// Backpropagates a gradient w.r.t. the output through the cached pass,
    /// returning flat parameter gradients.
    pub fn backward(&self, pass: &TrainPass, grad_output: &Tensor) -> Result<ParamGrads> {
        let last = self.convs.len() - 1;
        let mut layer_grads: Vec<Vec<f64>> = Vec::with_capacity(self.convs.len());
        let mut g = grad_output.clone();
        for i in (0..self.convs.len()).rev() {
            let cache = &pass.layers[i];
            if i != last {
                g = self.activate_backward(cache.act_input.as_ref().unwrap(), &g)?;
            }
            let mut chunk = Vec::new();
            if let Some(bn) = &self.bns[i] {
                let (gi, bn_grads) = batch_norm_backward(
                    cache.bn_input.as_ref().unwrap(),
                    bn,
                    cache.bn_cache.as_ref().unwrap(),
                    &g,
                )?;
                g = gi;
                chunk = [bn_grads.gamma, bn_grads.beta].concat();
            }
            let (gi, conv_grads) = conv2d_backward(&cache.conv_input, &self.convs[i], &g)?;
            g = gi;
            let mut flat = conv_grads.weights;
            flat.extend(conv_grads.biases);
            flat.extend(chunk);
            layer_grads.push(flat);
        }
        layer_grads.reverse();
        Ok(ParamGrads(layer_grads.concat()))
    }

    /// Number of trainable parameters (conv weights/biases, bn gamma/beta).
    pub fn param_count(&self) -> usize {
        self.convs
            .iter()
            .zip(&self.bns)
            .map(|(c, bn)| c.param_count() + bn.as_ref().map_or(0, |b| 2 * b.channels()))
            .sum()
    }

    /// Flattens trainable parameters: per layer conv weights, conv biases,
    /// then gamma and beta when normalized.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (conv, bn) in self.convs.iter().zip(&self.bns) {
            out.extend_from_slice(&conv.weights);
            out.extend_from_slice(&conv.biases);
            if let Some(b) = bn {
                out.extend_from_slice(&b.gamma);
                out.extend_from_slice(&b.beta);
            }
        }
        out
    }

    /// Writes back a flat parameter vector, rounding every value through f32
    /// so stored weights remain the single source of truth.
    pub fn set_params_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "flat params {} != {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        let write = |dst: &mut [f64], off: &mut usize| {
            let n = dst.len();
            for (d, &src) in dst.iter_mut().zip(&flat[*off..*off + n]) {
                *d = src as f32 as f64;
            }
            *off += n;
        };
        for (conv, bn) in self.convs.iter_mut().zip(&mut self.bns) {
            write(&mut conv.weights, &mut off);
            write(&mut conv.biases, &mut off);
            if let Some(b) = bn {
                write(&mut b.gamma, &mut off);
                write(&mut b.beta, &mut off);
            }
        }
        Ok(())
    }

    /// Applies batch-norm running-statistic updates from a training pass,
    /// rounded through f32 like every other stored value.
    pub fn apply_running_stats(&mut self, pass: &TrainPass) {
        for (bn, running) in self.bns.iter_mut().zip(&pass.new_running) {
            if let (Some(bn), Some((mean, var))) = (bn, running) {
                for (dst, &src) in bn.running_mean.iter_mut().zip(mean) {
                    *dst = src as f32 as f64;
                }
                for (dst, &src) in bn.running_var.iter_mut().zip(var) {
                    *dst = src as f32 as f64;
                }
            }
        }
    }
}

#[cfg(test)]
impl LayerStack {
    /// Test-only: write parameters without rounding through f32, for
    /// finite-difference probes.
    fn set_params_raw(&mut self, flat: &[f64]) {
        let mut off = 0;
        for i in 0..self.convs.len() {
            let wl = self.convs[i].weights.len();
            self.convs[i].weights.copy_from_slice(&flat[off..off + wl]);
            off += wl;
            let bl = self.convs[i].biases.len();
            self.convs[i].biases.copy_from_slice(&flat[off..off + bl]);
            off += bl;
            if let Some(b) = &mut self.bns[i] {
                let gl = b.gamma.len();
                b.gamma.copy_from_slice(&flat[off..off + gl]);
                off += gl;
                b.beta.copy_from_slice(&flat[off..off + gl]);
                off += gl;
            }
        }
        assert_eq!(off, flat.len());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_network;
    use crate::ops::gradcheck::{finite_diff_gradient_slice, max_rel_error};
    use crate::ops::loss::{l2_loss, l2_loss_grad};
    use crate::rng::normal_at;

    fn random_tensor(n: usize, h: usize, w: usize, c: usize, seed: u64) -> Tensor {
        let data = (0..n * h * w * c)
            .map(|i| 0.5 + 0.2 * normal_at(seed, i as u64))
            .collect();
        Tensor::from_vec(n, h, w, c, data).unwrap()
    }

    #[test]
    fn params_round_trip_through_flat_vector() {
        let spec = NetworkSpec::toy_spatial(4, 6);
        let weights = build_network(&spec, 3).unwrap();
        let mut stack = LayerStack::from_weights(&spec, &weights).unwrap();
        let flat = stack.params_flat();
        assert_eq!(flat.len(), stack.param_count());
        stack.set_params_from_flat(&flat).unwrap();
        assert_eq!(stack.params_flat(), flat);
        assert_eq!(stack.to_weights(), weights);
    }

    #[test]
    fn whole_net_gradient_matches_finite_differences() {
        // End-to-end check through conv + bn + relu layers against the
        // finite-difference oracle on the summed residual loss.
        let spec = NetworkSpec::toy_spatial(3, 4);
        let weights = build_network(&spec, 17).unwrap();
        let stack = LayerStack::from_weights(&spec, &weights).unwrap();
        let input = random_tensor(2, 5, 5, 3, 31);
        let target = random_tensor(2, 5, 5, 3, 32);

        let pass = stack.forward_train(&input).unwrap();
        let grad_out = l2_loss_grad(&pass.output, &target).unwrap();
        let analytic = stack.backward(&pass, &grad_out).unwrap();

        let params = stack.params_flat();
        let fd = finite_diff_gradient_slice(
            |p| {
                let mut probe = LayerStack::from_weights(&spec, &weights).unwrap();
                // Probe values are off the f32 grid; write them directly.
                probe.set_params_raw(p);
                let out = probe.forward_train(&input).unwrap().output;
                l2_loss(&out, &target).unwrap()
            },
            &params,
            1e-5,
        );
        let err = max_rel_error(&analytic.0, &fd);
        assert!(err < 1e-4, "max rel err {err:e}");
    }

    #[test]
    fn leaky_net_gradient_matches_finite_differences() {
        let spec = NetworkSpec::toy_temporal(3, 3, 4);
        let weights = build_network(&spec, 18).unwrap();
        let stack = LayerStack::from_weights(&spec, &weights).unwrap();
        let input = random_tensor(1, 4, 4, 9, 33);
        let target = random_tensor(1, 4, 4, 3, 34);

        let pass = stack.forward_train(&input).unwrap();
        let grad_out = l2_loss_grad(&pass.output, &target).unwrap();
        let analytic = stack.backward(&pass, &grad_out).unwrap();

        let params = stack.params_flat();
        let fd = finite_diff_gradient_slice(
            |p| {
                let mut probe = LayerStack::from_weights(&spec, &weights).unwrap();
                probe.set_params_raw(p);
                let out = probe.forward_train(&input).unwrap().output;
                l2_loss(&out, &target).unwrap()
            },
            &params,
            1e-5,
        );
        let err = max_rel_error(&analytic.0, &fd);
        assert!(err < 1e-4, "max rel err {err:e}");
    }

    #[test]
    fn infer_and_train_agree_without_bn_single_example() {
        let spec = NetworkSpec::toy_temporal(1, 3, 5);
        let weights = build_network(&spec, 21).unwrap();
        let stack = LayerStack::from_weights(&spec, &weights).unwrap();
        let input = random_tensor(1, 6, 6, 3, 41);
        let a = stack.forward(&input).unwrap();
        let b = stack.forward_train(&input).unwrap().output;
        assert_eq!(a, b);
    }
}
