//! Crop extraction and ground-truth-by-averaging.

use rand::Rng;

use crate::error::{Error, Result};
use crate::frame::{Frame, CHANNELS};

/// Copies a size x size crop with top-left corner (y, x).
pub fn crop(frame: &Frame, y: u32, x: u32, size: usize) -> Result<Frame> {
    let (y, x) = (y as usize, x as usize);
    if y + size > frame.height() || x + size > frame.width() {
        return Err(Error::InvalidParam(format!(
            "crop ({y}, {x}) + {size} exceeds {}x{}",
            frame.height(),
            frame.width()
        )));
    }
    let mut data = Vec::with_capacity(size * size * CHANNELS);
    for dy in 0..size {
        let row = frame.index(y + dy, x, 0);
        data.extend_from_slice(&frame.data()[row..row + size * CHANNELS]);
    }
    Frame::new(size, size, data)
}

/// Uniformly random crops with recorded coordinates; deterministic per rng
/// state.
pub fn extract_patches<R: Rng + ?Sized>(
    image: &Frame,
    size: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<(Frame, (u32, u32))>> {
    if image.height() < size || image.width() < size {
        return Err(Error::InvalidParam(format!(
            "image {}x{} smaller than patch size {size}",
            image.height(),
            image.width()
        )));
    }
    let y_max = (image.height() - size) as u32;
    let x_max = (image.width() - size) as u32;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let y = if y_max == 0 { 0 } else { rng.random_range(0..=y_max) };
        let x = if x_max == 0 { 0 } else { rng.random_range(0..=x_max) };
        out.push((crop(image, y, x, size)?, (y, x)));
    }
    Ok(out)
}

/// Pixelwise mean of equally sized frames, accumulated in double precision.
pub fn average_ground_truth(frames: &[Frame]) -> Result<Frame> {
    Frame::check_uniform(frames)?;
    let (h, w) = (frames[0].height(), frames[0].width());
    let len = h * w * CHANNELS;
    let mut acc = vec![0.0f64; len];
    for f in frames {
        for (a, &v) in acc.iter_mut().zip(f.data()) {
            *a += v as f64;
        }
    }
    let inv = 1.0 / frames.len() as f64;
    Frame::new(h, w, acc.into_iter().map(|v| (v * inv) as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{apply_awgn, AwgnParams};
    use crate::rng::{derive_seed, normal_at};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn whole_image_patch_sits_at_origin() {
        let img = Frame::constant(50, 50, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let patches = extract_patches(&img, 50, 1, &mut rng).unwrap();
        assert_eq!(patches[0].1, (0, 0));
        assert_eq!(patches[0].0, img);
    }

    #[test]
    fn coordinates_stay_in_bounds_and_seed_fixes_them() {
        let img = Frame::constant(100, 100, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = extract_patches(&img, 50, 1000, &mut rng).unwrap();
        for (_, (y, x)) in &a {
            assert!(*y <= 50 && *x <= 50);
        }
        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        let b = extract_patches(&img, 50, 1000, &mut rng2).unwrap();
        let coords_a: Vec<_> = a.iter().map(|p| p.1).collect();
        let coords_b: Vec<_> = b.iter().map(|p| p.1).collect();
        assert_eq!(coords_a, coords_b);
    }

    #[test]
    fn undersized_images_are_rejected() {
        let img = Frame::constant(32, 64, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(extract_patches(&img, 50, 1, &mut rng).is_err());
    }

    #[test]
    fn crop_copies_the_right_window() {
        let mut img = Frame::constant(8, 8, 0.0).unwrap();
        img.set(3, 4, 1, 0.75);
        let c = crop(&img, 2, 3, 4).unwrap();
        assert_eq!(c.get(1, 1, 1), 0.75);
    }

    #[test]
    fn identical_frames_average_to_themselves() {
        let data: Vec<f32> = (0..4 * 4 * 3)
            .map(|i| ((0.5 + 0.1 * normal_at(1, i as u64)).clamp(0.0, 1.0)) as f32)
            .collect();
        let f = Frame::new(4, 4, data).unwrap();
        let avg = average_ground_truth(&[f.clone(), f.clone(), f.clone()]).unwrap();
        for (a, b) in avg.data().iter().zip(f.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn two_extreme_frames_average_to_half() {
        let lo = Frame::constant(4, 4, 0.0).unwrap();
        let hi = Frame::constant(4, 4, 1.0).unwrap();
        let avg = average_ground_truth(&[lo, hi]).unwrap();
        assert!(avg.data().iter().all(|&v| (v - 0.5).abs() < 1e-7));
    }

    #[test]
    fn averaging_200_noisy_copies_follows_inverse_sqrt_law() {
        let clean = Frame::constant(64, 64, 0.5).unwrap();
        let params = AwgnParams::new(25.0).unwrap();
        let noisy: Vec<Frame> = (0..200)
            .map(|i| apply_awgn(&clean, &params, derive_seed(42, i)).unwrap())
            .collect();
        let avg = average_ground_truth(&noisy).unwrap();
        let n = avg.data().len() as f64;
        let mean_res = avg
            .data()
            .iter()
            .map(|&v| v as f64 - 0.5)
            .sum::<f64>()
            / n;
        let var = avg
            .data()
            .iter()
            .map(|&v| (v as f64 - 0.5 - mean_res).powi(2))
            .sum::<f64>()
            / n;
        let expected = (25.0 / 255.0) / 200.0f64.sqrt();
        let std = var.sqrt();
        assert!(
            (std - expected).abs() / expected < 0.05,
            "residual std {std} vs {expected}"
        );
    }

    #[test]
    fn empty_and_mixed_inputs_fail() {
        assert!(average_ground_truth(&[]).is_err());
        let a = Frame::constant(4, 4, 0.5).unwrap();
        let b = Frame::constant(4, 5, 0.5).unwrap();
        assert!(average_ground_truth(&[a, b]).is_err());
    }
}
