//! Dataset builders and manifest-driven regeneration.
//!
//! Construction is deterministic and unit-parallelizable: every source image
//! (spatial) or 3-frame sequence (temporal) gets an RNG stream derived from
//! (global seed, unit index), and every patch slot gets one derived from
//! (global seed, unit, slot). One noise spec is drawn per unit so noise
//! statistics stay coherent within a frame; a triplet's frames share the spec
//! but use independent realizations.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::augment::AugmentOp;
use crate::data::manifest::{DatasetKind, DatasetManifest, ManifestHeader, ManifestRecord};
use crate::data::patch::crop;
use crate::data::{PatchPair, TripletPatchPair};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::network::{denoise_frame, LayerStack};
use crate::noise::{degrade, sample_noise_spec, NoiseMix, NoiseSpec};
use crate::rng::{derive_seed, derive_seed2};

const TAG_SPEC: u64 = 1;
const TAG_PATCH: u64 = 2;
const TAG_SPLIT: u64 = 3;

/// Seeded shuffle of 0..count split into (train, test) index sets.
pub fn split_corpus(count: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::InvalidParam(format!(
            "train fraction {train_fraction} outside [0, 1]"
        )));
    }
    let mut indices: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_SPLIT));
    indices.shuffle(&mut rng);
    let cut = (count as f64 * train_fraction).round() as usize;
    let test = indices.split_off(cut.min(count));
    Ok((indices, test))
}

#[derive(Clone, Copy, Debug)]
pub struct SpatialBuildConfig {
    pub patch_size: usize,
    pub patch_count: usize,
    pub mix: NoiseMix,
    pub seed: u64,
}

fn unit_noise_spec(seed: u64, unit: u64, mix: &NoiseMix) -> Result<NoiseSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed2(seed, TAG_SPEC, unit));
    sample_noise_spec(&mut rng, mix)
}

struct PatchDraw {
    y: u32,
    x: u32,
    augment: AugmentOp,
}

fn draw_patch(seed: u64, unit: u64, slot: u64, h: usize, w: usize, size: usize) -> PatchDraw {
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed2(derive_seed(seed, TAG_PATCH), unit, slot));
    let y_max = (h - size) as u32;
    let x_max = (w - size) as u32;
    use rand::Rng;
    let y = if y_max == 0 { 0 } else { rng.random_range(0..=y_max) };
    let x = if x_max == 0 { 0 } else { rng.random_range(0..=x_max) };
    let augment = AugmentOp::from_code(rng.random_range(0..8u8)).unwrap();
    PatchDraw { y, x, augment }
}

/// Builds (noisy, clean) pairs: per image one drawn noise spec, the whole
/// image degraded and clipped, then co-located, co-augmented crops of the
/// noisy and clean images. Patches are assigned to images round-robin.
pub fn build_spatial_dataset(
    images: &[(String, Frame)],
    cfg: &SpatialBuildConfig,
) -> Result<(DatasetManifest, Vec<PatchPair>)> {
    if images.is_empty() {
        return Err(Error::EmptyInput("spatial dataset corpus".into()));
    }
    cfg.mix.validate()?;
    for (name, img) in images {
        if img.height() < cfg.patch_size || img.width() < cfg.patch_size {
            return Err(Error::InvalidParam(format!(
                "image {name} is {}x{}, smaller than patch size {}",
                img.height(),
                img.width(),
                cfg.patch_size
            )));
        }
    }

    let specs: Vec<NoiseSpec> = (0..images.len())
        .map(|u| unit_noise_spec(cfg.seed, u as u64, &cfg.mix))
        .collect::<Result<_>>()?;

    // Degraded images are synthesized lazily: only units that receive patches
    // pay for it.
    let mut noisy: HashMap<usize, Frame> = HashMap::new();
    let mut records = Vec::with_capacity(cfg.patch_count);
    let mut pairs = Vec::with_capacity(cfg.patch_count);
    for p in 0..cfg.patch_count {
        let unit = p % images.len();
        let slot = (p / images.len()) as u64;
        let (name, clean_img) = &images[unit];
        let noisy_img = match noisy.entry(unit) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(degrade(clean_img, &specs[unit])?)
            }
        };
        let draw = draw_patch(
            cfg.seed,
            unit as u64,
            slot,
            clean_img.height(),
            clean_img.width(),
            cfg.patch_size,
        );
        let noisy_patch = draw
            .augment
            .apply(&crop(noisy_img, draw.y, draw.x, cfg.patch_size)?)?;
        let clean_patch = draw
            .augment
            .apply(&crop(clean_img, draw.y, draw.x, cfg.patch_size)?)?;
        records.push(ManifestRecord {
            source: name.clone(),
            y: draw.y,
            x: draw.x,
            augment: draw.augment,
            noise: specs[unit],
        });
        pairs.push(PatchPair {
            noisy: noisy_patch,
            clean: clean_patch,
            noise: specs[unit],
        });
    }

    Ok((
        DatasetManifest {
            header: ManifestHeader {
                kind: DatasetKind::Spatial,
                patch_size: cfg.patch_size,
                seed: cfg.seed,
                spatial_weights_crc: None,
            },
            records,
        },
        pairs,
    ))
}

/// Rebuilds the exact pairs a spatial manifest describes. `load` maps a
/// source string to its clean image.
pub fn regenerate_spatial_pairs(
    manifest: &DatasetManifest,
    mut load: impl FnMut(&str) -> Result<Frame>,
) -> Result<Vec<PatchPair>> {
    if manifest.header.kind != DatasetKind::Spatial {
        return Err(Error::InvalidParam(
            "manifest does not describe a spatial dataset".into(),
        ));
    }
    let size = manifest.header.patch_size;
    let mut clean_cache: HashMap<String, Frame> = HashMap::new();
    let mut noisy_cache: HashMap<String, Frame> = HashMap::new();
    let mut pairs = Vec::with_capacity(manifest.records.len());
    for r in &manifest.records {
        if !clean_cache.contains_key(&r.source) {
            clean_cache.insert(r.source.clone(), load(&r.source)?);
        }
        let clean_img = &clean_cache[&r.source];
        let noisy_key = format!("{}|{}|{}", r.source, r.noise.encode_kind(), r.noise.seed);
        if !noisy_cache.contains_key(&noisy_key) {
            noisy_cache.insert(noisy_key.clone(), degrade(clean_img, &r.noise)?);
        }
        let noisy_img = &noisy_cache[&noisy_key];
        pairs.push(PatchPair {
            noisy: r.augment.apply(&crop(noisy_img, r.y, r.x, size)?)?,
            clean: r.augment.apply(&crop(clean_img, r.y, r.x, size)?)?,
            noise: r.noise,
        });
    }
    Ok(pairs)
}

#[derive(Clone, Copy, Debug)]
pub struct TemporalBuildConfig {
    pub patch_size: usize,
    pub patch_count: usize,
    pub mix: NoiseMix,
    pub seed: u64,
    /// CRC32 of the spatial weight file, recorded in the manifest so a
    /// regeneration can verify it uses the same spatial stage.
    pub spatial_weights_crc: Option<u32>,
}

pub struct TemporalBuild {
    pub manifest: DatasetManifest,
    pub pairs: Vec<TripletPatchPair>,
    /// Videos too short for one 3-frame sequence, skipped with a note.
    pub skipped: Vec<String>,
}

fn temporal_source(name: &str, start: usize) -> String {
    format!("{name}#{start}")
}

fn parse_temporal_source(source: &str) -> Result<(&str, usize)> {
    let (name, start) = source.rsplit_once('#').ok_or_else(|| {
        Error::InvalidParam(format!("temporal source '{source}' missing '#start'"))
    })?;
    let start = start
        .parse()
        .map_err(|_| Error::InvalidParam(format!("bad sequence start in '{source}'")))?;
    Ok((name, start))
}

/// Builds one triplet: degrade the three clean frames under one spec with
/// independent per-frame realizations, spatially denoise them, and pair the
/// denoised stack with the clean center.
fn make_triplet(
    clean: &[Frame],
    spec: &NoiseSpec,
    spatial: &LayerStack,
) -> Result<[Frame; 3]> {
    let mut denoised = Vec::with_capacity(3);
    for (t, frame) in clean.iter().enumerate() {
        let frame_spec = NoiseSpec {
            kind: spec.kind,
            seed: derive_seed(spec.seed, t as u64),
        };
        let noisy = degrade(frame, &frame_spec)?;
        denoised.push(denoise_frame(spatial, &noisy)?);
    }
    Ok([
        denoised[0].clone(),
        denoised[1].clone(),
        denoised[2].clone(),
    ])
}

/// The five-step temporal dataset procedure: split each video into
/// non-overlapping 3-frame sequences, degrade each sequence under one drawn
/// spec, apply the spatial stage, then crop aligned patch stacks.
pub fn build_temporal_dataset(
    videos: &[(String, Vec<Frame>)],
    spatial: &LayerStack,
    cfg: &TemporalBuildConfig,
) -> Result<TemporalBuild> {
    if videos.is_empty() {
        return Err(Error::EmptyInput("temporal dataset corpus".into()));
    }
    cfg.mix.validate()?;

    let mut skipped = Vec::new();
    let mut sequences: Vec<(usize, usize)> = Vec::new(); // (video index, start frame)
    for (vi, (name, frames)) in videos.iter().enumerate() {
        if frames.len() < 3 {
            skipped.push(format!("{name}: {} frame(s), need 3", frames.len()));
            continue;
        }
        Frame::check_uniform(frames)?;
        if frames[0].height() < cfg.patch_size || frames[0].width() < cfg.patch_size {
            return Err(Error::InvalidParam(format!(
                "video {name} frames smaller than patch size {}",
                cfg.patch_size
            )));
        }
        for s in 0..frames.len() / 3 {
            sequences.push((vi, 3 * s));
        }
    }
    if sequences.is_empty() {
        return Err(Error::EmptyInput(
            "no usable 3-frame sequences in corpus".into(),
        ));
    }

    let specs: Vec<NoiseSpec> = (0..sequences.len())
        .map(|u| unit_noise_spec(cfg.seed, u as u64, &cfg.mix))
        .collect::<Result<_>>()?;

    // Denoised triplets are built lazily: only for sequences that receive
    // patches.
    let mut triplets: HashMap<usize, [Frame; 3]> = HashMap::new();
    let mut records = Vec::with_capacity(cfg.patch_count);
    let mut pairs = Vec::with_capacity(cfg.patch_count);
    for p in 0..cfg.patch_count {
        let unit = p % sequences.len();
        let slot = (p / sequences.len()) as u64;
        let (vi, start) = sequences[unit];
        let (name, frames) = &videos[vi];
        let denoised = match triplets.entry(unit) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(make_triplet(&frames[start..start + 3], &specs[unit], spatial)?)
            }
        };
        let (h, w) = (frames[0].height(), frames[0].width());
        let draw = draw_patch(cfg.seed, unit as u64, slot, h, w, cfg.patch_size);
        let mut inputs = Vec::with_capacity(3);
        for d in denoised.iter() {
            inputs.push(draw.augment.apply(&crop(d, draw.y, draw.x, cfg.patch_size)?)?);
        }
        let clean_center = draw
            .augment
            .apply(&crop(&frames[start + 1], draw.y, draw.x, cfg.patch_size)?)?;
        records.push(ManifestRecord {
            source: temporal_source(name, start),
            y: draw.y,
            x: draw.x,
            augment: draw.augment,
            noise: specs[unit],
        });
        pairs.push(TripletPatchPair {
            inputs: [inputs[0].clone(), inputs[1].clone(), inputs[2].clone()],
            clean_center,
            noise: specs[unit],
        });
    }

    Ok(TemporalBuild {
        manifest: DatasetManifest {
            header: ManifestHeader {
                kind: DatasetKind::Temporal,
                patch_size: cfg.patch_size,
                seed: cfg.seed,
                spatial_weights_crc: cfg.spatial_weights_crc,
            },
            records,
        },
        pairs,
        skipped,
    })
}

/// Rebuilds temporal pairs from a manifest; `load_video` maps a video name to
/// its clean frames. The caller is responsible for passing the same spatial
/// stage the dataset was built with (checked via the manifest CRC when the
/// weight file is on hand).
pub fn regenerate_temporal_pairs(
    manifest: &DatasetManifest,
    spatial: &LayerStack,
    mut load_video: impl FnMut(&str) -> Result<Vec<Frame>>,
) -> Result<Vec<TripletPatchPair>> {
    if manifest.header.kind != DatasetKind::Temporal {
        return Err(Error::InvalidParam(
            "manifest does not describe a temporal dataset".into(),
        ));
    }
    let size = manifest.header.patch_size;
    let mut videos: HashMap<String, Vec<Frame>> = HashMap::new();
    let mut triplets: HashMap<String, [Frame; 3]> = HashMap::new();
    let mut pairs = Vec::with_capacity(manifest.records.len());
    for r in &manifest.records {
        let (name, start) = parse_temporal_source(&r.source)?;
        if !videos.contains_key(name) {
            videos.insert(name.to_string(), load_video(name)?);
        }
        let frames = &videos[name];
        if start + 3 > frames.len() {
            return Err(Error::InvalidParam(format!(
                "sequence start {start} out of range for video {name}"
            )));
        }
        let key = format!("{}|{}|{}", r.source, r.noise.encode_kind(), r.noise.seed);
        if !triplets.contains_key(&key) {
            triplets.insert(
                key.clone(),
                make_triplet(&frames[start..start + 3], &r.noise, spatial)?,
            );
        }
        let denoised = &triplets[&key];
        let mut inputs = Vec::with_capacity(3);
        for d in denoised.iter() {
            inputs.push(r.augment.apply(&crop(d, r.y, r.x, size)?)?);
        }
        pairs.push(TripletPatchPair {
            inputs: [inputs[0].clone(), inputs[1].clone(), inputs[2].clone()],
            clean_center: r
                .augment
                .apply(&crop(&frames[start + 1], r.y, r.x, size)?)?,
            noise: r.noise,
        });
    }
    Ok(pairs)
}
