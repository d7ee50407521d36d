//! Binary weight file format.
//!
//! Layout: magic bytes `VDNN`, then a payload of { format version (u16 LE),
//! spec block, per-layer little-endian f32 arrays in declaration order },
//! then a trailing CRC32 (LE) of the payload. The spec block is
//! { in_channels, depth, first_width, mid_width, out_channels (u16 each),
//! flags (u8, bit 0 = batch norm), activation code (u8), alpha (f32 LE) }.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result, WeightFileError};
use crate::network::{Activation, NetworkSpec, NetworkWeights};

pub const WEIGHT_MAGIC: &[u8; 4] = b"VDNN";
pub const WEIGHT_FORMAT_VERSION: u16 = 1;

const ACT_RELU: u8 = 0;
const ACT_LEAKY: u8 = 1;

fn push_f32s(buf: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes spec and weights to the on-disk byte layout.
pub fn encode_weights(spec: &NetworkSpec, weights: &NetworkWeights) -> Result<Vec<u8>> {
    weights.check_against(spec)?;
    let mut payload = Vec::new();
    payload.extend_from_slice(&WEIGHT_FORMAT_VERSION.to_le_bytes());
    for dim in [
        spec.in_channels,
        spec.depth,
        spec.first_width,
        spec.mid_width,
        spec.out_channels,
    ] {
        let v = u16::try_from(dim).map_err(|_| {
            Error::InvalidParam(format!("dimension {dim} exceeds the u16 format field"))
        })?;
        payload.extend_from_slice(&v.to_le_bytes());
    }
    payload.push(u8::from(spec.use_bn));
    let (code, alpha) = match spec.activation {
        Activation::Relu => (ACT_RELU, 0.0f32),
        Activation::LeakyRelu { alpha } => (ACT_LEAKY, alpha),
    };
    payload.push(code);
    payload.extend_from_slice(&alpha.to_le_bytes());

    for layer in &weights.layers {
        push_f32s(&mut payload, &layer.conv.kernels);
        push_f32s(&mut payload, &layer.conv.biases);
        if let Some(bn) = &layer.bn {
            push_f32s(&mut payload, &bn.gamma);
            push_f32s(&mut payload, &bn.beta);
            push_f32s(&mut payload, &bn.running_mean);
            push_f32s(&mut payload, &bn.running_var);
        }
    }

    let mut out = Vec::with_capacity(4 + payload.len() + 4);
    out.extend_from_slice(WEIGHT_MAGIC);
    let crc = crc32fast::hash(&payload);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], WeightFileError> {
        if self.pos + n > self.bytes.len() {
            return Err(WeightFileError::Truncated {
                expected: self.pos + n,
                got: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> std::result::Result<u16, WeightFileError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> std::result::Result<u8, WeightFileError> {
        Ok(self.take(1)?[0])
    }

    fn f32(&mut self) -> std::result::Result<f32, WeightFileError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32_vec(&mut self, n: usize) -> std::result::Result<Vec<f32>, WeightFileError> {
        let raw = self.take(4 * n)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Parses one weight record from the start of `bytes`, returning the number
/// of bytes consumed (checkpoints append an optimizer block after it).
pub fn decode_weights_prefix(bytes: &[u8]) -> Result<(NetworkSpec, NetworkWeights, usize)> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != WEIGHT_MAGIC {
        return Err(WeightFileError::BadMagic.into());
    }
    let version = r.u16()?;
    if version != WEIGHT_FORMAT_VERSION {
        return Err(WeightFileError::UnsupportedVersion(version).into());
    }
    let in_channels = r.u16()? as usize;
    let depth = r.u16()? as usize;
    let first_width = r.u16()? as usize;
    let mid_width = r.u16()? as usize;
    let out_channels = r.u16()? as usize;
    let flags = r.u8()?;
    if flags > 1 {
        return Err(WeightFileError::CorruptHeader(format!("flags {flags:#x}")).into());
    }
    let act_code = r.u8()?;
    let alpha = r.f32()?;
    let activation = match act_code {
        ACT_RELU => Activation::Relu,
        ACT_LEAKY => Activation::LeakyRelu { alpha },
        other => {
            return Err(
                WeightFileError::CorruptHeader(format!("activation code {other}")).into(),
            )
        }
    };
    let spec = NetworkSpec {
        in_channels,
        depth,
        first_width,
        mid_width,
        out_channels,
        use_bn: flags & 1 != 0,
        activation,
    };
    spec.validate()
        .map_err(|e| WeightFileError::CorruptHeader(e.to_string()))?;

    let mut layers = Vec::with_capacity(depth);
    for (c_in, c_out, bn) in spec.layer_dims() {
        let kernels = r.f32_vec(crate::network::KERNEL_SIZE * crate::network::KERNEL_SIZE * c_in * c_out)?;
        let biases = r.f32_vec(c_out)?;
        let bn = if bn {
            Some(crate::network::BatchNormParams {
                gamma: r.f32_vec(c_out)?,
                beta: r.f32_vec(c_out)?,
                running_mean: r.f32_vec(c_out)?,
                running_var: r.f32_vec(c_out)?,
            })
        } else {
            None
        };
        layers.push(crate::network::LayerWeights {
            conv: crate::network::ConvLayerParams { kernels, biases },
            bn,
        });
    }
    let payload = &bytes[4..r.pos];
    let stored = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(WeightFileError::ChecksumMismatch { stored, computed }.into());
    }
    let weights = NetworkWeights { layers };
    weights
        .check_against(&spec)
        .map_err(|e| WeightFileError::CorruptHeader(e.to_string()))?;
    Ok((spec, weights, r.pos))
}

/// Parses a standalone weight file; trailing bytes are rejected.
pub fn decode_weights(bytes: &[u8]) -> Result<(NetworkSpec, NetworkWeights)> {
    let (spec, weights, consumed) = decode_weights_prefix(bytes)?;
    if consumed != bytes.len() {
        return Err(WeightFileError::CorruptHeader(format!(
            "{} trailing bytes after weight record",
            bytes.len() - consumed
        ))
        .into());
    }
    Ok((spec, weights))
}

pub fn save_weights(path: &Path, spec: &NetworkSpec, weights: &NetworkWeights) -> Result<()> {
    fs::write(path, encode_weights(spec, weights)?)?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<(NetworkSpec, NetworkWeights)> {
    decode_weights(&fs::read(path)?)
}

/// Loads and rejects the file unless its embedded spec equals `expected`.
pub fn load_weights_expecting(path: &Path, expected: &NetworkSpec) -> Result<NetworkWeights> {
    let (spec, weights) = load_weights(path)?;
    if spec != *expected {
        return Err(WeightFileError::SpecMismatch(format!(
            "file holds {spec:?}, expected {expected:?}"
        ))
        .into());
    }
    Ok(weights)
}
