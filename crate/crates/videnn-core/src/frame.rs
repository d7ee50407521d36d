//! RGB frame type: the unit of denoising.

use crate::error::{Error, Result};

/// Fixed channel count for all frames.
pub const CHANNELS: usize = 3;

/// An H x W x 3 image with interleaved channels, values normalized to [0, 1]
/// (8-bit peak 255 maps to 1.0).
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyInput(format!(
                "frame dimensions {height}x{width}"
            )));
        }
        if data.len() != height * width * CHANNELS {
            return Err(Error::ShapeMismatch(format!(
                "frame data length {} != {}x{}x{}",
                data.len(),
                height,
                width,
                CHANNELS
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidParam(format!(
                "frame value {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width * CHANNELS])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable pixel access; callers must keep values inside [0, 1].
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * CHANNELS + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[self.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        let i = self.index(y, x, c);
        self.data[i] = v;
    }

    pub fn same_dims(&self, other: &Frame) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Checks that every frame in the slice shares this frame's dimensions.
    pub fn check_uniform(frames: &[Frame]) -> Result<()> {
        if frames.is_empty() {
            return Err(Error::EmptyInput("frame list".into()));
        }
        let first = &frames[0];
        for (i, f) in frames.iter().enumerate().skip(1) {
            if !f.same_dims(first) {
                return Err(Error::ShapeMismatch(format!(
                    "frame {i} is {}x{}, expected {}x{}",
                    f.height, f.width, first.height, first.width
                )));
            }
        }
        Ok(())
    }
}

/// Clamp to the displayable range.
#[inline]
pub fn clip01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}
