//! Residual denoising network definitions: layer-structured specs, stored
//! weights and construction/initialization.
//!
//! Both stages share one topology: a first wide convolution, a stack of
//! hidden convolutions (optionally batch-normalized), and a final projection
//! to 3 channels that emits the estimated noise residual. The denoised image
//! is the input minus that residual.

mod stack;

pub use stack::{LayerStack, ParamGrads, TrainPass};

use crate::error::{Error, Result};
use crate::frame::{clip01, Frame, CHANNELS};
use crate::rng::{derive_seed, normal_at};
use crate::tensor::Tensor;

/// Kernel side of every convolution.
pub const KERNEL_SIZE: usize = 3;
/// Default negative slope of the leaky activation.
pub const LEAKY_ALPHA_DEFAULT: f32 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu { alpha: f32 },
}

impl Activation {
    pub fn leaky_default() -> Self {
        Activation::LeakyRelu {
            alpha: LEAKY_ALPHA_DEFAULT,
        }
    }
}

/// Structural description of one residual denoising CNN.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetworkSpec {
    pub in_channels: usize,
    pub depth: usize,
    pub first_width: usize,
    pub mid_width: usize,
    pub out_channels: usize,
    pub use_bn: bool,
    pub activation: Activation,
}

impl NetworkSpec {
    /// Spatial stage: 3-channel input, depth 20, first layer 128 wide,
    /// 64-wide hidden layers, batch norm, ReLU.
    pub fn spatial() -> Self {
        Self {
            in_channels: CHANNELS,
            depth: 20,
            first_width: 128,
            mid_width: 64,
            out_channels: CHANNELS,
            use_bn: true,
            activation: Activation::Relu,
        }
    }

    /// Temporal stage over a `window`-frame stack: same layer/feature-map
    /// counts as the spatial stage, no batch norm, leaky activation.
    pub fn temporal(window: usize) -> Self {
        Self {
            in_channels: CHANNELS * window,
            depth: 20,
            first_width: 128,
            mid_width: 64,
            out_channels: CHANNELS,
            use_bn: false,
            activation: Activation::leaky_default(),
        }
    }

    /// Small spatial-style network for desk-scale runs.
    pub fn toy_spatial(depth: usize, width: usize) -> Self {
        Self {
            in_channels: CHANNELS,
            depth,
            first_width: width,
            mid_width: width,
            out_channels: CHANNELS,
            use_bn: true,
            activation: Activation::Relu,
        }
    }

    /// Small temporal-style network for desk-scale runs.
    pub fn toy_temporal(window: usize, depth: usize, width: usize) -> Self {
        Self {
            in_channels: CHANNELS * window,
            depth,
            first_width: width,
            mid_width: width,
            out_channels: CHANNELS,
            use_bn: false,
            activation: Activation::leaky_default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::InvalidParam(format!(
                "depth {} must be >= 2",
                self.depth
            )));
        }
        if self.in_channels == 0 || self.first_width == 0 || self.mid_width == 0 {
            return Err(Error::InvalidParam("zero-width layer".into()));
        }
        if self.out_channels != CHANNELS {
            return Err(Error::InvalidParam(format!(
                "out_channels {} must be {CHANNELS}",
                self.out_channels
            )));
        }
        if let Activation::LeakyRelu { alpha } = self.activation {
            if !(0.0..1.0).contains(&alpha) {
                return Err(Error::InvalidParam(format!(
                    "leaky alpha {alpha} outside [0, 1)"
                )));
            }
        }
        Ok(())
    }

    /// Per-layer (c_in, c_out, batch-normalized) triplets. The first and last
    /// layers are never normalized; the last layer has no activation.
    pub fn layer_dims(&self) -> Vec<(usize, usize, bool)> {
        let mut dims = Vec::with_capacity(self.depth);
        dims.push((self.in_channels, self.first_width, false));
        let mut prev = self.first_width;
        for _ in 1..self.depth - 1 {
            dims.push((prev, self.mid_width, self.use_bn));
            prev = self.mid_width;
        }
        dims.push((prev, self.out_channels, false));
        dims
    }

    pub fn bn_layer_count(&self) -> usize {
        self.layer_dims().iter().filter(|(_, _, bn)| *bn).count()
    }
}

/// Stored parameters of one convolution, single precision (the on-disk and
/// in-memory master precision; compute promotes to f64).
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayerParams {
    pub kernels: Vec<f32>,
    pub biases: Vec<f32>,
}

/// Stored batch-norm parameters and running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights {
    pub conv: ConvLayerParams,
    pub bn: Option<BatchNormParams>,
}

/// Ordered per-layer parameter records for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkWeights {
    pub layers: Vec<LayerWeights>,
}

impl NetworkWeights {
    /// Validates that layer shapes chain-consistently match the spec.
    pub fn check_against(&self, spec: &NetworkSpec) -> Result<()> {
        spec.validate()?;
        let dims = spec.layer_dims();
        if self.layers.len() != dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} layers, spec wants {}",
                self.layers.len(),
                dims.len()
            )));
        }
        for (i, (layer, &(c_in, c_out, bn))) in self.layers.iter().zip(&dims).enumerate() {
            let want = KERNEL_SIZE * KERNEL_SIZE * c_in * c_out;
            if layer.conv.kernels.len() != want || layer.conv.biases.len() != c_out {
                return Err(Error::ShapeMismatch(format!("layer {i} conv arrays")));
            }
            match (&layer.bn, bn) {
                (Some(b), true) => {
                    if b.gamma.len() != c_out
                        || b.beta.len() != c_out
                        || b.running_mean.len() != c_out
                        || b.running_var.len() != c_out
                    {
                        return Err(Error::ShapeMismatch(format!("layer {i} bn arrays")));
                    }
                }
                (None, false) => {}
                _ => {
                    return Err(Error::ShapeMismatch(format!(
                        "layer {i} batch-norm presence disagrees with spec"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Zeroes the final convolution, making the network emit an exactly zero
    /// residual: a diagnostic identity denoiser.
    pub fn zero_final_layer(&mut self) {
        if let Some(last) = self.layers.last_mut() {
            last.conv.kernels.iter_mut().for_each(|v| *v = 0.0);
            last.conv.biases.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Builds seeded initial weights: kernels drawn zero-mean normal with
/// variance 2 / fan_in, biases zero, batch norm at identity.
pub fn build_network(spec: &NetworkSpec, init_seed: u64) -> Result<NetworkWeights> {
    spec.validate()?;
    let mut layers = Vec::new();
    for (li, (c_in, c_out, bn)) in spec.layer_dims().into_iter().enumerate() {
        let fan_in = (KERNEL_SIZE * KERNEL_SIZE * c_in) as f64;
        let std = (2.0 / fan_in).sqrt();
        let layer_seed = derive_seed(init_seed, li as u64);
        let kernels = (0..KERNEL_SIZE * KERNEL_SIZE * c_in * c_out)
            .map(|i| (normal_at(layer_seed, i as u64) * std) as f32)
            .collect();
        layers.push(LayerWeights {
            conv: ConvLayerParams {
                kernels,
                biases: vec![0.0; c_out],
            },
            bn: bn.then(|| BatchNormParams {
                gamma: vec![1.0; c_out],
                beta: vec![0.0; c_out],
                running_mean: vec![0.0; c_out],
                running_var: vec![1.0; c_out],
            }),
        });
    }
    Ok(NetworkWeights { layers })
}

/// Runs the network on one image-shaped tensor and returns the estimated
/// noise residual (same spatial dims, 3 channels).
pub fn forward_residual(spec: &NetworkSpec, weights: &NetworkWeights, input: &Tensor) -> Result<Tensor> {
    LayerStack::from_weights(spec, weights)?.forward(input)
}

/// Denoises one frame: clip(frame - residual).
pub fn denoise_frame(stack: &LayerStack, frame: &Frame) -> Result<Frame> {
    let input = Tensor::from_frame(frame);
    let residual = stack.forward(&input)?;
    subtract_residual(frame, &residual)
}

/// Denoises the center frame of an exact window of spatially aligned frames.
pub fn denoise_window(stack: &LayerStack, frames: &[&Frame]) -> Result<Frame> {
    let window = stack.spec().in_channels / CHANNELS;
    if frames.len() != window {
        return Err(Error::ShapeMismatch(format!(
            "window of {} frames, network expects {window}",
            frames.len()
        )));
    }
    let input = Tensor::stack_frames(frames)?;
    let residual = stack.forward(&input)?;
    subtract_residual(frames[window / 2], &residual)
}

pub(crate) fn subtract_residual(frame: &Frame, residual: &Tensor) -> Result<Frame> {
    let (n, h, w, c) = residual.shape();
    if n != 1 || h != frame.height() || w != frame.width() || c != CHANNELS {
        return Err(Error::ShapeMismatch(format!(
            "residual {:?} does not match frame {}x{}",
            residual.shape(),
            frame.height(),
            frame.width()
        )));
    }
    let data = frame
        .data()
        .iter()
        .zip(residual.data())
        .map(|(&v, &r)| clip01(v as f64 - r) as f32)
        .collect();
    Frame::new(frame.height(), frame.width(), data)
}

/// One first-layer post-activation map, min-max normalized to [0, 1]. A flat
/// map normalizes to all zeros.
#[derive(Clone, Debug)]
pub struct FilterMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

/// Per-filter first-layer activations for an input, one map per feature map
/// of layer 1; used to visualize what the temporal stage attends to.
pub fn dump_first_layer_activations(stack: &LayerStack, input: &Tensor) -> Result<Vec<FilterMap>> {
    let act = stack.first_layer_activations(input)?;
    let (_, h, w, c) = act.shape();
    let mut maps = Vec::with_capacity(c);
    for ch in 0..c {
        let mut data = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                data.push(act.at(0, y, x, ch));
            }
        }
        let min = data.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = max - min;
        if span > 0.0 {
            for v in &mut data {
                *v = (*v - min) / span;
            }
        } else {
            data.iter_mut().for_each(|v| *v = 0.0);
        }
        maps.push(FilterMap {
            height: h,
            width: w,
            data,
        });
    }
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_specs_have_documented_structure() {
        let s = NetworkSpec::spatial();
        assert_eq!(s.depth, 20);
        assert_eq!(s.first_width, 128);
        let dims = s.layer_dims();
        assert_eq!(dims.len(), 20);
        assert_eq!(s.bn_layer_count(), 18);
        assert_eq!(dims[0], (3, 128, false));
        assert_eq!(dims[1], (128, 64, true));
        assert_eq!(dims[19], (64, 3, false));

        let t3 = NetworkSpec::temporal(3);
        assert_eq!(t3.in_channels, 9);
        assert!(!t3.use_bn);
        let t5 = NetworkSpec::temporal(5);
        assert_eq!(t5.in_channels, 15);
    }

    #[test]
    fn build_is_seed_deterministic() {
        let spec = NetworkSpec::toy_spatial(4, 8);
        let a = build_network(&spec, 11).unwrap();
        let b = build_network(&spec, 11).unwrap();
        assert_eq!(a, b);
        let c = build_network(&spec, 12).unwrap();
        assert_ne!(a, c);
        a.check_against(&spec).unwrap();
    }

    #[test]
    fn init_variance_tracks_fan_in() {
        let spec = NetworkSpec::toy_spatial(3, 32);
        let w = build_network(&spec, 5).unwrap();
        let k = &w.layers[1].conv.kernels; // 3x3x32x32 = 9216 samples
        let n = k.len() as f64;
        let var = k.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / n;
        let expect = 2.0 / (9.0 * 32.0);
        assert!((var - expect).abs() / expect < 0.1, "var {var} vs {expect}");
        assert!(w.layers[1].conv.biases.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn temporal_spec_accepts_nine_channel_input() {
        let spec = NetworkSpec::toy_temporal(3, 3, 6);
        let weights = build_network(&spec, 1).unwrap();
        let input = Tensor::zeros(1, 4, 4, 9);
        let out = forward_residual(&spec, &weights, &input).unwrap();
        assert_eq!(out.shape(), (1, 4, 4, 3));
    }

    #[test]
    fn zero_final_layer_gives_identity_denoiser() {
        let spec = NetworkSpec::toy_spatial(3, 6);
        let mut weights = build_network(&spec, 2).unwrap();
        weights.zero_final_layer();
        let stack = LayerStack::from_weights(&spec, &weights).unwrap();
        let frame = Frame::constant(5, 7, 0.42).unwrap();
        let out = denoise_frame(&stack, &frame).unwrap();
        assert_eq!(out, frame);
    }

    #[test]
    fn constant_residual_shifts_frame() {
        // Zero kernels with a bias on the last layer produce a constant
        // residual equal to that bias.
        let spec = NetworkSpec::toy_spatial(2, 4);
        let mut weights = build_network(&spec, 3).unwrap();
        for l in &mut weights.layers {
            l.conv.kernels.iter_mut().for_each(|v| *v = 0.0);
            l.conv.biases.iter_mut().for_each(|v| *v = 0.0);
        }
        weights.layers.last_mut().unwrap().conv.biases = vec![0.1; 3];
        let stack = LayerStack::from_weights(&spec, &weights).unwrap();
        let frame = Frame::constant(4, 4, 0.5).unwrap();
        let out = denoise_frame(&stack, &frame).unwrap();
        for &v in out.data() {
            assert!((v - 0.4).abs() < 1e-6);
        }
    }

    #[test]
    fn window_denoise_ignores_neighbors_with_zero_residual() {
        let spec = NetworkSpec::toy_temporal(3, 3, 6);
        let mut weights = build_network(&spec, 4).unwrap();
        weights.zero_final_layer();
        let stack = LayerStack::from_weights(&spec, &weights).unwrap();
        let a = Frame::constant(4, 4, 0.1).unwrap();
        let b = Frame::constant(4, 4, 0.6).unwrap();
        let c = Frame::constant(4, 4, 0.9).unwrap();
        let out = denoise_window(&stack, &[&a, &b, &c]).unwrap();
        assert_eq!(out, b);
        // Perturbing neighbors never changes the output.
        let a2 = Frame::constant(4, 4, 0.99).unwrap();
        let out2 = denoise_window(&stack, &[&a2, &b, &c]).unwrap();
        assert_eq!(out2, b);
        // Wrong window length is rejected.
        assert!(denoise_window(&stack, &[&a, &b]).is_err());
    }

    #[test]
    fn full_scale_spatial_net_has_128_filter_maps() {
        let spec = NetworkSpec::spatial();
        let weights = build_network(&spec, 0).unwrap();
        let stack = LayerStack::from_weights(&spec, &weights).unwrap();
        let frame = Frame::constant(8, 8, 0.5).unwrap();
        let maps = dump_first_layer_activations(&stack, &Tensor::from_frame(&frame)).unwrap();
        assert_eq!(maps.len(), 128);
    }

    #[test]
    fn filter_maps_cover_first_width() {
        let spec = NetworkSpec::toy_spatial(3, 10);
        let weights = build_network(&spec, 9).unwrap();
        let stack = LayerStack::from_weights(&spec, &weights).unwrap();
        let frame = Frame::constant(6, 5, 0.5).unwrap();
        let maps = dump_first_layer_activations(&stack, &Tensor::from_frame(&frame)).unwrap();
        assert_eq!(maps.len(), 10);
        assert!(maps.iter().all(|m| m.height == 6 && m.width == 5));
        // Zero weights -> flat maps -> normalized to zeros.
        let mut zw = build_network(&spec, 9).unwrap();
        for l in &mut zw.layers {
            l.conv.kernels.iter_mut().for_each(|v| *v = 0.0);
        }
        let zstack = LayerStack::from_weights(&spec, &zw).unwrap();
        let zmaps = dump_first_layer_activations(&zstack, &Tensor::from_frame(&frame)).unwrap();
        assert!(zmaps[0].data.iter().all(|&v| v == 0.0));
    }
}
