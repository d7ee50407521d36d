//! Reference image/video quality metrics: PSNR and SSIM with per-video
//! aggregation.

use std::io::Write;

use crate::error::{Error, Result};
use crate::frame::{Frame, CHANNELS};

/// Sentinel for the PSNR of identical frames.
pub const PSNR_INF: f64 = f64::INFINITY;

/// 10 * log10(peak^2 / MSE) over all channels; identical frames return the
/// infinity sentinel.
pub fn psnr(a: &Frame, b: &Frame, peak: f64) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::ShapeMismatch(format!(
            "psnr frames {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let mut sum = 0.0f64;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = x as f64 - y as f64;
        sum += d * d;
    }
    let mse = sum / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_INF);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// SSIM configuration: 11-tap Gaussian window (sigma 1.5) and the standard
/// stability constants.
#[derive(Clone, Copy, Debug)]
pub struct SsimOptions {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub peak: f64,
}

impl Default for SsimOptions {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            peak: 1.0,
        }
    }
}

fn gaussian_kernel(window: usize, sigma: f64) -> Vec<f64> {
    let half = (window / 2) as f64;
    let mut k: Vec<f64> = (0..window)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian filter over one channel plane, valid region only.
fn filter_valid(plane: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let win = kernel.len();
    let out_w = w - win + 1;
    let out_h = h - win + 1;
    // Horizontal pass.
    let mut tmp = vec![0.0f64; h * out_w];
    for y in 0..h {
        for x in 0..out_w {
            let mut acc = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                acc += kv * plane[y * w + x + t];
            }
            tmp[y * out_w + x] = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![0.0f64; out_h * out_w];
    for y in 0..out_h {
        for x in 0..out_w {
            let mut acc = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                acc += kv * tmp[(y + t) * out_w + x];
            }
            out[y * out_w + x] = acc;
        }
    }
    out
}

/// Mean local SSIM with a Gaussian window, averaged over channels.
pub fn ssim(a: &Frame, b: &Frame, opts: &SsimOptions) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::ShapeMismatch("ssim frames differ in size".into()));
    }
    let (h, w) = (a.height(), a.width());
    if h < opts.window || w < opts.window {
        return Err(Error::InvalidParam(format!(
            "frame {h}x{w} smaller than ssim window {}",
            opts.window
        )));
    }
    let kernel = gaussian_kernel(opts.window, opts.sigma);
    let c1 = (opts.k1 * opts.peak).powi(2);
    let c2 = (opts.k2 * opts.peak).powi(2);

    let mut total = 0.0;
    for ch in 0..CHANNELS {
        let plane = |f: &Frame| -> Vec<f64> {
            (0..h * w)
                .map(|i| f.data()[i * CHANNELS + ch] as f64)
                .collect()
        };
        let pa = plane(a);
        let pb = plane(b);
        let paa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let pbb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let pab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();

        let mu_a = filter_valid(&pa, h, w, &kernel);
        let mu_b = filter_valid(&pb, h, w, &kernel);
        let m_aa = filter_valid(&paa, h, w, &kernel);
        let m_bb = filter_valid(&pbb, h, w, &kernel);
        let m_ab = filter_valid(&pab, h, w, &kernel);

        let mut acc = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = m_aa[i] - ma * ma;
            let vb = m_bb[i] - mb * mb;
            let cov = m_ab[i] - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            acc += num / den;
        }
        total += acc / mu_a.len() as f64;
    }
    Ok(total / CHANNELS as f64)
}

/// Per-frame metrics for one aligned video pair.
#[derive(Clone, Debug)]
pub struct FrameMetrics {
    pub frame_index: usize,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Per-video aggregation. Infinite PSNR frames are excluded from the mean and
/// counted separately; when every frame is infinite the mean is the sentinel.
#[derive(Clone, Debug)]
pub struct MetricReport {
    pub frames: Vec<FrameMetrics>,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub frame_count: usize,
    pub psnr_inf_count: usize,
}

impl MetricReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "frame_index,psnr_db,ssim")?;
        for f in &self.frames {
            if f.psnr_db.is_infinite() {
                writeln!(w, "{},inf,{}", f.frame_index, f.ssim)?;
            } else {
                writeln!(w, "{},{},{}", f.frame_index, f.psnr_db, f.ssim)?;
            }
        }
        if self.mean_psnr_db.is_infinite() {
            writeln!(w, "mean,inf,{}", self.mean_ssim)?;
        } else {
            writeln!(w, "mean,{},{}", self.mean_psnr_db, self.mean_ssim)?;
        }
        Ok(())
    }
}

/// Frame-by-frame PSNR/SSIM of a test sequence against its reference.
pub fn evaluate_video(reference: &[Frame], test: &[Frame]) -> Result<MetricReport> {
    if reference.len() != test.len() {
        return Err(Error::ShapeMismatch(format!(
            "sequence lengths {} vs {}",
            reference.len(),
            test.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::EmptyInput("evaluate_video".into()));
    }
    let opts = SsimOptions::default();
    let mut frames = Vec::with_capacity(reference.len());
    for (i, (r, t)) in reference.iter().zip(test).enumerate() {
        frames.push(FrameMetrics {
            frame_index: i,
            psnr_db: psnr(r, t, opts.peak)?,
            ssim: ssim(r, t, &opts)?,
        });
    }
    let finite: Vec<f64> = frames
        .iter()
        .map(|f| f.psnr_db)
        .filter(|p| p.is_finite())
        .collect();
    let psnr_inf_count = frames.len() - finite.len();
    let mean_psnr_db = if finite.is_empty() {
        PSNR_INF
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    let mean_ssim = frames.iter().map(|f| f.ssim).sum::<f64>() / frames.len() as f64;
    Ok(MetricReport {
        frame_count: frames.len(),
        frames,
        mean_psnr_db,
        mean_ssim,
        psnr_inf_count,
    })
}


#[cfg(test)]
mod tests {
    use super::oracle::*;
    use super::*;
    use crate::rng::normal_at;

    fn random_frame(h: usize, w: usize, seed: u64) -> Frame {
        let data = (0..h * w * CHANNELS)
            .map(|i| (0.5 + 0.22 * normal_at(seed, i as u64)).clamp(0.0, 1.0) as f32)
            .collect();
        Frame::new(h, w, data).unwrap()
    }

    #[test]
    fn identical_frames_hit_the_sentinels() {
        let f = random_frame(16, 16, 1);
        assert_eq!(psnr(&f, &f, 1.0).unwrap(), PSNR_INF);
        assert!((ssim(&f, &f, &SsimOptions::default()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_offset_matches_closed_form() {
        let a = Frame::constant(8, 8, 0.5).unwrap();
        let b = Frame::constant(8, 8, 0.5 + 16.0 / 255.0).unwrap();
        let p = psnr(&a, &b, 1.0).unwrap();
        let closed_form = 10.0 * (65025.0f64 / 256.0).log10();
        assert!((p - closed_form).abs() < 0.01, "{p} vs {closed_form}");
        assert!((p - 24.05).abs() < 0.01);
    }

    #[test]
    fn unit_mse_gives_zero_db() {
        // Frames at the range extremes: MSE = peak^2 -> 0 dB.
        let a = Frame::constant(4, 4, 0.0).unwrap();
        let b = Frame::constant(4, 4, 1.0).unwrap();
        assert!((psnr(&a, &b, 1.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn matches_oracles_on_seeded_pairs() {
        for seed in 0..20u64 {
            let a = random_frame(32, 32, seed * 2 + 1);
            let b = random_frame(32, 32, seed * 2 + 2);
            let p = psnr(&a, &b, 1.0).unwrap();
            assert!((p - psnr_oracle(&a, &b, 1.0)).abs() < 1e-9);
            let opts = SsimOptions::default();
            let s = ssim(&a, &b, &opts).unwrap();
            let so = ssim_oracle(&a, &b, &opts);
            assert!((s - so).abs() < 1e-9, "seed {seed}: {s} vs {so}");
            assert!((-1.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn metrics_are_symmetric() {
        let a = random_frame(16, 16, 5);
        let b = random_frame(16, 16, 6);
        assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
        let opts = SsimOptions::default();
        let fwd = ssim(&a, &b, &opts).unwrap();
        let rev = ssim(&b, &a, &opts).unwrap();
        assert!((fwd - rev).abs() < 1e-12);
    }

    #[test]
    fn inverted_pattern_scores_low_and_near_constant_scores_high() {
        let a = random_frame(24, 24, 9);
        let inverted =
            Frame::new(24, 24, a.data().iter().map(|&v| 1.0 - v).collect()).unwrap();
        let opts = SsimOptions::default();
        let s = ssim(&a, &inverted, &opts).unwrap();
        assert!(s < 0.5, "inverted ssim {s}");
        assert!((s - ssim_oracle(&a, &inverted, &opts)).abs() < 1e-9);

        let c = Frame::constant(16, 16, 0.5).unwrap();
        let c_eps = Frame::constant(16, 16, 0.5 + 1e-4).unwrap();
        assert!(ssim(&c, &c_eps, &opts).unwrap() > 0.99);
    }

    #[test]
    fn psnr_decreases_with_noise_level() {
        use crate::noise::{apply_awgn, AwgnParams};
        let clean = random_frame(32, 32, 11);
        let mut prev = f64::INFINITY;
        for (i, sigma) in [5.0, 15.0, 30.0, 50.0].into_iter().enumerate() {
            let noisy = apply_awgn(&clean, &AwgnParams::new(sigma).unwrap(), 100 + i as u64)
                .unwrap();
            let p = psnr(&clean, &noisy, 1.0).unwrap();
            assert!(p < prev, "psnr {p} did not drop at sigma {sigma}");
            prev = p;
        }
    }

    #[test]
    fn video_report_aggregates_and_rejects_mismatches() {
        let a: Vec<Frame> = (0..3).map(|i| random_frame(16, 16, 40 + i)).collect();
        let same = evaluate_video(&a, &a).unwrap();
        assert_eq!(same.frame_count, 3);
        assert_eq!(same.psnr_inf_count, 3);
        assert_eq!(same.mean_psnr_db, PSNR_INF);
        assert!((same.mean_ssim - 1.0).abs() < 1e-12);

        let b: Vec<Frame> = (0..3).map(|i| random_frame(16, 16, 50 + i)).collect();
        let rep = evaluate_video(&a, &b).unwrap();
        let manual_mean =
            rep.frames.iter().map(|f| f.psnr_db).sum::<f64>() / rep.frames.len() as f64;
        assert!((rep.mean_psnr_db - manual_mean).abs() < 1e-12);

        assert!(evaluate_video(&a, &b[..2]).is_err());

        let mut csv = Vec::new();
        rep.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("frame_index,psnr_db,ssim"));
        assert!(text.lines().count() == 5);
    }

    #[test]
    fn small_frames_reject_ssim() {
        let a = Frame::constant(8, 8, 0.5).unwrap();
        assert!(ssim(&a, &a, &SsimOptions::default()).is_err());
    }
}
