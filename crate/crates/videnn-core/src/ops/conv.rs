//! Same-padded 2-D convolution over NHWC tensors.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Weights of one convolutional layer: kernels laid out (k, k, c_in, c_out)
/// row-major plus one bias per output channel. The kernel side must be odd so
/// zero same-padding preserves spatial dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel {
    pub k: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl ConvKernel {
    pub fn new(
        k: usize,
        c_in: usize,
        c_out: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
    ) -> Result<Self> {
        if k == 0 || k.is_multiple_of(2) {
            return Err(Error::InvalidParam(format!("kernel size {k} must be odd")));
        }
        if weights.len() != k * k * c_in * c_out {
            return Err(Error::ShapeMismatch(format!(
                "kernel weights length {} != {k}x{k}x{c_in}x{c_out}",
                weights.len()
            )));
        }
        if biases.len() != c_out {
            return Err(Error::ShapeMismatch(format!(
                "bias length {} != {c_out}",
                biases.len()
            )));
        }
        if weights.iter().chain(biases.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("conv parameters".into()));
        }
        Ok(Self {
            k,
            c_in,
            c_out,
            weights,
            biases,
        })
    }

    pub fn zeros(k: usize, c_in: usize, c_out: usize) -> Result<Self> {
        Self::new(k, c_in, c_out, vec![0.0; k * k * c_in * c_out], vec![0.0; c_out])
    }

    #[inline]
    pub fn w_index(&self, dy: usize, dx: usize, ci: usize, co: usize) -> usize {
        ((dy * self.k + dx) * self.c_in + ci) * self.c_out + co
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Gradients with respect to a layer's parameters, same layout as the layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

fn check_channels(input: &Tensor, kernel: &ConvKernel) -> Result<()> {
    if input.channels() != kernel.c_in {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, kernel expects {}",
            input.channels(),
            kernel.c_in
        )));
    }
    Ok(())
}

/// Zero same-padded convolution; output shape (n, h, w, c_out). Linear in the
/// input for zero-bias parameters.
pub fn conv2d_forward(input: &Tensor, kernel: &ConvKernel) -> Result<Tensor> {
    check_channels(input, kernel)?;
    let (n, h, w, c_in) = input.shape();
    let (k, c_out) = (kernel.k, kernel.c_out);
    let pad = k / 2;
    let mut out = Tensor::zeros(n, h, w, c_out);
    let x_in = input.data();
    let wt = &kernel.weights;
    let out_data = out.data_mut();
    let mut acc = vec![0.0f64; c_out];

    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                acc.copy_from_slice(&kernel.biases);
                for dy in 0..k {
                    let yy = y + dy;
                    if yy < pad || yy >= h + pad {
                        continue;
                    }
                    let yy = yy - pad;
                    for dx in 0..k {
                        let xx = x + dx;
                        if xx < pad || xx >= w + pad {
                            continue;
                        }
                        let xx = xx - pad;
                        let in_base = ((b * h + yy) * w + xx) * c_in;
                        let w_base = (dy * k + dx) * c_in * c_out;
                        for ci in 0..c_in {
                            let s = x_in[in_base + ci];
                            let row = &wt[w_base + ci * c_out..w_base + (ci + 1) * c_out];
                            for (a, &wv) in acc.iter_mut().zip(row) {
                                *a += s * wv;
                            }
                        }
                    }
                }
                let out_base = ((b * h + y) * w + x) * c_out;
                out_data[out_base..out_base + c_out].copy_from_slice(&acc);
            }
        }
    }
    Ok(out)
}

/// Gradients of sum(grad_out ⊙ forward(input)) with respect to the input and
/// the parameters.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &ConvKernel,
    grad_out: &Tensor,
) -> Result<(Tensor, ConvGrads)> {
    check_channels(input, kernel)?;
    let (n, h, w, c_in) = input.shape();
    let (k, c_out) = (kernel.k, kernel.c_out);
    if grad_out.shape() != (n, h, w, c_out) {
        return Err(Error::ShapeMismatch(format!(
            "grad_out shape {:?} != ({n}, {h}, {w}, {c_out})",
            grad_out.shape()
        )));
    }
    let pad = k / 2;
    let mut grad_in = Tensor::zeros(n, h, w, c_in);
    let mut gw = vec![0.0f64; kernel.weights.len()];
    let mut gb = vec![0.0f64; c_out];
    let x_in = input.data();
    let go = grad_out.data();
    let wt = &kernel.weights;
    let gi = grad_in.data_mut();

    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                let go_base = ((b * h + y) * w + x) * c_out;
                let g = &go[go_base..go_base + c_out];
                for (bias, &gv) in gb.iter_mut().zip(g) {
                    *bias += gv;
                }
                for dy in 0..k {
                    let yy = y + dy;
                    if yy < pad || yy >= h + pad {
                        continue;
                    }
                    let yy = yy - pad;
                    for dx in 0..k {
                        let xx = x + dx;
                        if xx < pad || xx >= w + pad {
                            continue;
                        }
                        let xx = xx - pad;
                        let in_base = ((b * h + yy) * w + xx) * c_in;
                        let w_base = (dy * k + dx) * c_in * c_out;
                        for ci in 0..c_in {
                            let row = w_base + ci * c_out;
                            let s = x_in[in_base + ci];
                            let mut dot = 0.0;
                            for co in 0..c_out {
                                dot += wt[row + co] * g[co];
                                gw[row + co] += s * g[co];
                            }
                            gi[in_base + ci] += dot;
                        }
                    }
                }
            }
        }
    }
    Ok((
        grad_in,
        ConvGrads {
            weights: gw,
            biases: gb,
        },
    ))
}
