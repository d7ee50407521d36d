//! Dihedral-8 patch augmentation: the four quarter rotations of a square,
//! each optionally followed by a horizontal mirror.

use crate::error::{Error, Result};
use crate::frame::{Frame, CHANNELS};

/// One of the 8 square symmetries, encoded as `code = rot + 4 * flip` with
/// `rot` counter-clockwise quarter turns applied first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AugmentOp {
    rot: u8,
    flip: bool,
}

impl AugmentOp {
    pub const IDENTITY: AugmentOp = AugmentOp {
        rot: 0,
        flip: false,
    };

    pub fn from_code(code: u8) -> Result<Self> {
        if code > 7 {
            return Err(Error::InvalidParam(format!(
                "augment code {code} outside 0..=7"
            )));
        }
        Ok(Self {
            rot: code & 3,
            flip: code & 4 != 0,
        })
    }

    pub fn code(&self) -> u8 {
        self.rot + if self.flip { 4 } else { 0 }
    }

    pub fn all() -> [AugmentOp; 8] {
        core::array::from_fn(|i| AugmentOp::from_code(i as u8).unwrap())
    }

    /// Composition: the op equivalent to applying `self` first, then `next`.
    pub fn then(&self, next: AugmentOp) -> AugmentOp {
        if !self.flip {
            AugmentOp {
                rot: (self.rot + next.rot) & 3,
                flip: next.flip,
            }
        } else {
            // Mirror conjugates rotation: r^a m = m r^{-a}.
            AugmentOp {
                rot: (self.rot + 4 - next.rot) & 3,
                flip: !next.flip,
            }
        }
    }

    pub fn inverse(&self) -> AugmentOp {
        if self.flip {
            // Mirrored elements are reflections, hence involutions.
            *self
        } else {
            AugmentOp {
                rot: (4 - self.rot) & 3,
                flip: false,
            }
        }
    }

    /// Exact pixel permutation of a square patch.
    pub fn apply(&self, patch: &Frame) -> Result<Frame> {
        if patch.height() != patch.width() {
            return Err(Error::InvalidParam(format!(
                "augment needs a square patch, got {}x{}",
                patch.height(),
                patch.width()
            )));
        }
        let s = patch.height();
        let mut out = patch.clone();
        for _ in 0..self.rot {
            out = rotate90_ccw(&out, s);
        }
        if self.flip {
            out = mirror_horizontal(&out, s);
        }
        Ok(out)
    }
}

fn rotate90_ccw(f: &Frame, s: usize) -> Frame {
    let mut data = vec![0.0f32; s * s * CHANNELS];
    for y in 0..s {
        for x in 0..s {
            for c in 0..CHANNELS {
                data[(y * s + x) * CHANNELS + c] = f.get(x, s - 1 - y, c);
            }
        }
    }
    Frame::new(s, s, data).expect("rotation preserves shape")
}

fn mirror_horizontal(f: &Frame, s: usize) -> Frame {
    let mut data = vec![0.0f32; s * s * CHANNELS];
    for y in 0..s {
        for x in 0..s {
            for c in 0..CHANNELS {
                data[(y * s + x) * CHANNELS + c] = f.get(y, s - 1 - x, c);
            }
        }
    }
    Frame::new(s, s, data).expect("mirror preserves shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::normal_at;

    fn random_patch(s: usize, seed: u64) -> Frame {
        let data = (0..s * s * CHANNELS)
            .map(|i| (0.5 + 0.2 * normal_at(seed, i as u64)).clamp(0.0, 1.0) as f32)
            .collect();
        Frame::new(s, s, data).unwrap()
    }

    #[test]
    fn identity_leaves_patch_unchanged() {
        let p = random_patch(6, 1);
        assert_eq!(AugmentOp::IDENTITY.apply(&p).unwrap(), p);
    }

    #[test]
    fn four_rotations_are_the_identity() {
        let p = random_patch(5, 2);
        let rot = AugmentOp::from_code(1).unwrap();
        let mut q = p.clone();
        for _ in 0..4 {
            q = rot.apply(&q).unwrap();
        }
        assert_eq!(q, p);
    }

    #[test]
    fn eight_variants_pairwise_distinct_on_asymmetric_patch() {
        let p = random_patch(8, 3);
        let variants: Vec<Frame> = AugmentOp::all()
            .iter()
            .map(|op| op.apply(&p).unwrap())
            .collect();
        for i in 0..8 {
            for j in i + 1..8 {
                assert_ne!(variants[i], variants[j], "ops {i} and {j} collide");
            }
        }
    }

    #[test]
    fn composition_table_matches_pixel_application() {
        // The algebra must agree with actually permuting pixels, for all 64
        // pairs, and the group must close.
        let p = random_patch(7, 4);
        for a in AugmentOp::all() {
            for b in AugmentOp::all() {
                let combined = a.then(b);
                let via_pixels = b.apply(&a.apply(&p).unwrap()).unwrap();
                assert_eq!(combined.apply(&p).unwrap(), via_pixels);
            }
        }
    }

    #[test]
    fn inverse_undoes_every_op() {
        let p = random_patch(6, 5);
        for op in AugmentOp::all() {
            let there = op.apply(&p).unwrap();
            let back = op.inverse().apply(&there).unwrap();
            assert_eq!(back, p);
            assert_eq!(op.then(op.inverse()), AugmentOp::IDENTITY);
        }
    }

    #[test]
    fn rejects_non_square_patches_and_bad_codes() {
        let p = Frame::constant(4, 5, 0.5).unwrap();
        assert!(AugmentOp::IDENTITY.apply(&p).is_err());
        assert!(AugmentOp::from_code(8).is_err());
    }
}
