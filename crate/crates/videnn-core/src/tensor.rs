//! Dense NHWC tensor in double precision, the working type of all compute
//! kernels. Single-image tensors use batch size 1.

use crate::error::{Error, Result};
use crate::frame::{clip01, Frame, CHANNELS};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, h: usize, w: usize, c: usize) -> Self {
        Self {
            n,
            h,
            w,
            c,
            data: vec![0.0; n * h * w * c],
        }
    }

    pub fn from_vec(n: usize, h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * h * w * c {
            return Err(Error::ShapeMismatch(format!(
                "tensor data length {} != {n}x{h}x{w}x{c}",
                data.len()
            )));
        }
        Ok(Self { n, h, w, c, data })
    }

    /// Batch-1 constructor.
    pub fn hwc(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_vec(1, h, w, c, data)
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n, self.h, self.w, self.c)
    }

    pub fn batch(&self) -> usize {
        self.n
    }
    pub fn height(&self) -> usize {
        self.h
    }
    pub fn width(&self) -> usize {
        self.w
    }
    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, n: usize, y: usize, x: usize, c: usize) -> usize {
        ((n * self.h + y) * self.w + x) * self.c + c
    }

    #[inline]
    pub fn at(&self, n: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(n, y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, y: usize, x: usize, c: usize, v: f64) {
        let i = self.index(n, y, x, c);
        self.data[i] = v;
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape() == other.shape()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            n: self.n,
            h: self.h,
            w: self.w,
            c: self.c,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn from_frame(frame: &Frame) -> Tensor {
        Tensor {
            n: 1,
            h: frame.height(),
            w: frame.width(),
            c: CHANNELS,
            data: frame.data().iter().map(|&v| v as f64).collect(),
        }
    }

    /// Channel-stacks frames in the given (temporal) order into a batch-1
    /// tensor of 3 * frames.len() channels.
    pub fn stack_frames(frames: &[&Frame]) -> Result<Tensor> {
        if frames.is_empty() {
            return Err(Error::EmptyInput("stack_frames".into()));
        }
        let (h, w) = (frames[0].height(), frames[0].width());
        for f in frames {
            if f.height() != h || f.width() != w {
                return Err(Error::ShapeMismatch(
                    "stacked frames must share dimensions".into(),
                ));
            }
        }
        let c = CHANNELS * frames.len();
        let mut data = vec![0.0; h * w * c];
        for y in 0..h {
            for x in 0..w {
                let base = (y * w + x) * c;
                for (fi, f) in frames.iter().enumerate() {
                    for ch in 0..CHANNELS {
                        data[base + fi * CHANNELS + ch] = f.get(y, x, ch) as f64;
                    }
                }
            }
        }
        Tensor::from_vec(1, h, w, c, data)
    }

    /// Converts a batch-1, 3-channel tensor to a frame, clipping to [0, 1].
    pub fn to_frame_clipped(&self) -> Result<Frame> {
        if self.n != 1 || self.c != CHANNELS {
            return Err(Error::ShapeMismatch(format!(
                "expected 1x{}x{}x3 tensor, got {:?}",
                self.h,
                self.w,
                self.shape()
            )));
        }
        let data = self.data.iter().map(|&v| clip01(v) as f32).collect();
        Frame::new(self.h, self.w, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stacking_preserves_temporal_channel_order() {
        let a = Frame::constant(2, 2, 0.1).unwrap();
        let b = Frame::constant(2, 2, 0.5).unwrap();
        let c = Frame::constant(2, 2, 0.9).unwrap();
        let t = Tensor::stack_frames(&[&a, &b, &c]).unwrap();
        assert_eq!(t.shape(), (1, 2, 2, 9));
        assert_eq!(t.at(0, 1, 1, 0), 0.1f32 as f64);
        assert_eq!(t.at(0, 1, 1, 4), 0.5f32 as f64);
        assert_eq!(t.at(0, 1, 1, 8), 0.9f32 as f64);
    }

    #[test]
    fn frame_round_trip_clips() {
        let t = Tensor::hwc(1, 2, 3, vec![-0.5, 0.25, 2.0, 0.0, 1.0, 0.75]).unwrap();
        let f = t.to_frame_clipped().unwrap();
        assert_eq!(f.data(), &[0.0, 0.25, 1.0, 0.0, 1.0, 0.75]);
    }
}
