//! Training driver: seeded epoch shuffling, mini-batch residual regression
//! with Adam, loss tracing, checkpointing and bit-exact resume.
//!
//! Determinism contract: (seed, dataset, schedule) fully determine the final
//! weights. Stored weights are single precision and every optimizer step
//! rounds parameters back to the f32 grid, so a checkpoint restores training
//! exactly; Adam moments are persisted in double precision.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{PatchPair, TripletPatchPair};
use crate::error::{Error, Result, WeightFileError};
use crate::frame::CHANNELS;
use crate::metrics::{psnr, ssim, SsimOptions, PSNR_INF};
use crate::network::{denoise_frame, LayerStack, NetworkSpec, NetworkWeights};
use crate::ops::adam::{adam_step, AdamState};
use crate::ops::loss::{l2_loss, l2_loss_grad};
use crate::rng::{derive_seed, mix64};
use crate::tensor::Tensor;
use crate::weights_io::{decode_weights_prefix, encode_weights};

/// A run of epochs sharing one learning rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSegment {
    pub epochs: usize,
    pub lr: f64,
}

/// Whether the batch loss is the plain sum of squared residual errors or the
/// per-element mean. Adam is scale-invariant so both train equivalently; the
/// trace values differ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossMode {
    Sum,
    Mean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_segments: Vec<LrSegment>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub shuffle_seed: u64,
    pub checkpoint_every_steps: Option<u64>,
    pub loss_mode: LossMode,
    pub grad_clip: Option<f64>,
}

impl TrainSchedule {
    /// Full-scale spatial phase: 100 epochs, batch 128, lr 1e-3 for the
    /// first 20 epochs then 1e-4 for the remaining 80.
    pub fn spatial_default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            lr_segments: vec![
                LrSegment {
                    epochs: 20,
                    lr: 1e-3,
                },
                LrSegment {
                    epochs: 80,
                    lr: 1e-4,
                },
            ],
            ..Self::base()
        }
    }

    /// Full-scale temporal phase: 60 epochs, batch 128, lr 1e-4.
    pub fn temporal_default() -> Self {
        Self {
            epochs: 60,
            batch_size: 128,
            lr_segments: vec![LrSegment {
                epochs: 60,
                lr: 1e-4,
            }],
            ..Self::base()
        }
    }

    /// Single-segment schedule, mostly for toy runs.
    pub fn flat(epochs: usize, batch_size: usize, lr: f64, shuffle_seed: u64) -> Self {
        Self {
            epochs,
            batch_size,
            lr_segments: vec![LrSegment { epochs, lr }],
            shuffle_seed,
            ..Self::base()
        }
    }

    fn base() -> Self {
        Self {
            epochs: 0,
            batch_size: 1,
            lr_segments: Vec::new(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            shuffle_seed: 0,
            checkpoint_every_steps: None,
            loss_mode: LossMode::Sum,
            grad_clip: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParam("batch_size must be >= 1".into()));
        }
        let covered: usize = self.lr_segments.iter().map(|s| s.epochs).sum();
        if covered != self.epochs {
            return Err(Error::InvalidParam(format!(
                "lr segments cover {covered} epochs, schedule has {}",
                self.epochs
            )));
        }
        for s in &self.lr_segments {
            if !(s.lr.is_finite() && s.lr > 0.0) {
                return Err(Error::InvalidParam(format!("bad lr {}", s.lr)));
            }
        }
        if let Some(c) = self.grad_clip {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::InvalidParam(format!("bad grad clip {c}")));
            }
        }
        Ok(())
    }

    pub fn lr_for_epoch(&self, epoch: usize) -> f64 {
        let mut start = 0;
        for s in &self.lr_segments {
            if epoch < start + s.epochs {
                return s.lr;
            }
            start += s.epochs;
        }
        self.lr_segments.last().map(|s| s.lr).unwrap_or(0.0)
    }

    /// Batches per epoch. With batch norm a trailing single-example batch
    /// cannot be normalized and is dropped.
    pub fn steps_per_epoch(&self, examples: usize, use_bn: bool) -> usize {
        let full = examples / self.batch_size;
        let rem = examples % self.batch_size;
        if rem == 0 || (rem == 1 && use_bn) {
            full
        } else {
            full + 1
        }
    }

    pub fn total_steps(&self, examples: usize, use_bn: bool) -> u64 {
        (self.epochs * self.steps_per_epoch(examples, use_bn)) as u64
    }

    /// Stable content hash; checkpoints refuse to resume under a different
    /// schedule.
    pub fn hash(&self) -> u64 {
        let mut h = 0xD1F7_u64;
        let mut feed = |v: u64| h = mix64(h ^ mix64(v));
        feed(self.epochs as u64);
        feed(self.batch_size as u64);
        for s in &self.lr_segments {
            feed(s.epochs as u64);
            feed(s.lr.to_bits());
        }
        feed(self.beta1.to_bits());
        feed(self.beta2.to_bits());
        feed(self.eps.to_bits());
        feed(self.shuffle_seed);
        feed(match self.loss_mode {
            LossMode::Sum => 0,
            LossMode::Mean => 1,
        });
        feed(self.grad_clip.map_or(0, |c| c.to_bits()));
        h
    }
}

/// One optimizer step in the trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTrace {
    pub steps: Vec<StepRecord>,
}

impl LossTrace {
    pub fn epoch_means(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64, usize)> = Vec::new();
        for s in &self.steps {
            match out.last_mut() {
                Some((e, sum, n)) if *e == s.epoch => {
                    *sum += s.loss;
                    *n += 1;
                }
                _ => out.push((s.epoch, s.loss, 1)),
            }
        }
        out.into_iter()
            .map(|(e, sum, n)| (e, sum / n as f64))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,epoch,lr,loss")?;
        for s in &self.steps {
            writeln!(w, "{},{},{},{}", s.step, s.epoch, s.lr, s.loss)?;
        }
        Ok(())
    }
}

/// Uniformly sized supervised examples: an input tensor and the residual the
/// network should regress (input minus clean at the output channels).
pub trait TrainingSet {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn input_channels(&self) -> usize;
    fn patch_dims(&self) -> (usize, usize);
    /// Writes example `idx` into per-example slices of a batch tensor.
    fn fill_example(&self, idx: usize, input: &mut [f64], residual: &mut [f64]);
    /// Uniformity validation, run once before training.
    fn check(&self) -> Result<()>;
}

impl TrainingSet for [PatchPair] {
    fn len(&self) -> usize {
        <[PatchPair]>::len(self)
    }

    fn input_channels(&self) -> usize {
        CHANNELS
    }

    fn patch_dims(&self) -> (usize, usize) {
        (self[0].noisy.height(), self[0].noisy.width())
    }

    fn fill_example(&self, idx: usize, input: &mut [f64], residual: &mut [f64]) {
        let pair = &self[idx];
        for (dst, &v) in input.iter_mut().zip(pair.noisy.data()) {
            *dst = v as f64;
        }
        for ((dst, &noisy), &clean) in residual
            .iter_mut()
            .zip(pair.noisy.data())
            .zip(pair.clean.data())
        {
            *dst = noisy as f64 - clean as f64;
        }
    }

    fn check(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyInput("training set".into()));
        }
        let dims = self.patch_dims();
        for (i, p) in self.iter().enumerate() {
            if (p.noisy.height(), p.noisy.width()) != dims || !p.noisy.same_dims(&p.clean) {
                return Err(Error::ShapeMismatch(format!("pair {i} dimensions")));
            }
        }
        Ok(())
    }
}

impl TrainingSet for [TripletPatchPair] {
    fn len(&self) -> usize {
        <[TripletPatchPair]>::len(self)
    }

    fn input_channels(&self) -> usize {
        3 * CHANNELS
    }

    fn patch_dims(&self) -> (usize, usize) {
        (self[0].clean_center.height(), self[0].clean_center.width())
    }

    fn fill_example(&self, idx: usize, input: &mut [f64], residual: &mut [f64]) {
        let t = &self[idx];
        let (h, w) = self.patch_dims();
        for y in 0..h {
            for x in 0..w {
                let base = (y * w + x) * 9;
                for (fi, f) in t.inputs.iter().enumerate() {
                    for c in 0..CHANNELS {
                        input[base + fi * CHANNELS + c] = f.get(y, x, c) as f64;
                    }
                }
                let rbase = (y * w + x) * CHANNELS;
                for c in 0..CHANNELS {
                    // Residual of the spatially denoised center vs clean.
                    residual[rbase + c] =
                        t.inputs[1].get(y, x, c) as f64 - t.clean_center.get(y, x, c) as f64;
                }
            }
        }
    }

    fn check(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyInput("training set".into()));
        }
        let dims = self.patch_dims();
        for (i, t) in self.iter().enumerate() {
            for f in &t.inputs {
                if (f.height(), f.width()) != dims {
                    return Err(Error::ShapeMismatch(format!("triplet {i} dimensions")));
                }
            }
            if (t.clean_center.height(), t.clean_center.width()) != dims {
                return Err(Error::ShapeMismatch(format!("triplet {i} center")));
            }
        }
        Ok(())
    }
}

fn epoch_permutation(shuffle_seed: u64, epoch: usize, len: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(shuffle_seed, epoch as u64));
    perm.shuffle(&mut rng);
    perm
}

/// Trains from freshly built weights; returns the final weights and the full
/// loss trace. Checkpoints are written under `checkpoint_dir` at the
/// schedule's cadence.
pub fn train<D: TrainingSet + ?Sized>(
    spec: &NetworkSpec,
    init: &NetworkWeights,
    data: &D,
    schedule: &TrainSchedule,
    checkpoint_dir: Option<&Path>,
) -> Result<(NetworkWeights, LossTrace)> {
    let stack = LayerStack::from_weights(spec, init)?;
    let adam = AdamState::new(stack.param_count(), schedule.lr_for_epoch(0));
    run_schedule(stack, adam, 0, data, schedule, checkpoint_dir)
}

/// Continues from a checkpoint. In deterministic mode the continuation is
/// bit-identical to the uninterrupted run; resuming a finished schedule is a
/// no-op with an empty trace.
pub fn resume<D: TrainingSet + ?Sized>(
    checkpoint: &Path,
    data: &D,
    schedule: &TrainSchedule,
    checkpoint_dir: Option<&Path>,
) -> Result<(NetworkWeights, LossTrace)> {
    let ck = read_checkpoint(checkpoint)?;
    if ck.schedule_hash != schedule.hash() {
        return Err(Error::Checkpoint(format!(
            "schedule hash {:#018x} does not match checkpoint {:#018x}",
            schedule.hash(),
            ck.schedule_hash
        )));
    }
    let stack = LayerStack::from_weights(&ck.spec, &ck.weights)?;
    if ck.m.len() != stack.param_count() {
        return Err(Error::Checkpoint(format!(
            "optimizer state holds {} parameters, network has {}",
            ck.m.len(),
            stack.param_count()
        )));
    }
    let mut adam = AdamState::new(stack.param_count(), schedule.lr_for_epoch(0));
    adam.m = ck.m;
    adam.v = ck.v;
    adam.t = ck.step;
    adam.beta1 = schedule.beta1;
    adam.beta2 = schedule.beta2;
    adam.eps = schedule.eps;
    run_schedule(stack, adam, ck.step, data, schedule, checkpoint_dir)
}

fn run_schedule<D: TrainingSet + ?Sized>(
    mut stack: LayerStack,
    mut adam: AdamState,
    start_step: u64,
    data: &D,
    schedule: &TrainSchedule,
    checkpoint_dir: Option<&Path>,
) -> Result<(NetworkWeights, LossTrace)> {
    schedule.validate()?;
    data.check()?;
    let spec = *stack.spec();
    if data.input_channels() != spec.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "dataset provides {} input channels, network expects {}",
            data.input_channels(),
            spec.in_channels
        )));
    }
    let steps_per_epoch = schedule.steps_per_epoch(data.len(), spec.use_bn);
    if steps_per_epoch == 0 && schedule.epochs > 0 {
        return Err(Error::InvalidParam(
            "dataset too small for one batch (batch-normalized nets need >= 2 examples)".into(),
        ));
    }
    let total_steps = schedule.total_steps(data.len(), spec.use_bn);
    let mut trace = LossTrace::default();
    if start_step >= total_steps {
        // Past the end of the schedule: nothing to do.
        return Ok((stack.to_weights(), trace));
    }

    let (ph, pw) = data.patch_dims();
    let c_in = data.input_channels();
    let in_elems = ph * pw * c_in;
    let out_elems = ph * pw * CHANNELS;

    adam.beta1 = schedule.beta1;
    adam.beta2 = schedule.beta2;
    adam.eps = schedule.eps;

    let mut perm_epoch = usize::MAX;
    let mut perm: Vec<usize> = Vec::new();
    for step_idx in start_step..total_steps {
        let epoch = (step_idx / steps_per_epoch as u64) as usize;
        let batch_i = (step_idx % steps_per_epoch as u64) as usize;
        if epoch != perm_epoch {
            perm = epoch_permutation(schedule.shuffle_seed, epoch, data.len());
            perm_epoch = epoch;
        }
        let lo = batch_i * schedule.batch_size;
        let hi = (lo + schedule.batch_size).min(data.len());
        let batch: &[usize] = &perm[lo..hi];
        let b = batch.len();

        let mut input = Tensor::zeros(b, ph, pw, c_in);
        let mut target = Tensor::zeros(b, ph, pw, CHANNELS);
        for (bi, &idx) in batch.iter().enumerate() {
            data.fill_example(
                idx,
                &mut input.data_mut()[bi * in_elems..(bi + 1) * in_elems],
                &mut target.data_mut()[bi * out_elems..(bi + 1) * out_elems],
            );
        }

        let lr = schedule.lr_for_epoch(epoch);
        adam.lr = lr;

        let pass = stack.forward_train(&input)?;
        let (loss, grad_out) = match schedule.loss_mode {
            LossMode::Sum => (
                l2_loss(&pass.output, &target)?,
                l2_loss_grad(&pass.output, &target)?,
            ),
            LossMode::Mean => {
                let n = pass.output.len() as f64;
                let raw = l2_loss(&pass.output, &target)?;
                let g = l2_loss_grad(&pass.output, &target)?.map(|v| v / n);
                (raw / n, g)
            }
        };
        let step = step_idx + 1;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                lr,
                examples: batch.to_vec(),
            });
        }

        let mut grads = stack.backward(&pass, &grad_out)?.0;
        if let Some(clip) = schedule.grad_clip {
            let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > clip {
                let scale = clip / norm;
                grads.iter_mut().for_each(|g| *g *= scale);
            }
        }

        let mut params = stack.params_flat();
        adam_step(&mut params, &grads, &mut adam)?;
        stack.set_params_from_flat(&params)?;
        stack.apply_running_stats(&pass);

        trace.steps.push(StepRecord {
            step,
            epoch,
            lr,
            loss,
        });

        if let (Some(dir), Some(every)) = (checkpoint_dir, schedule.checkpoint_every_steps) {
            if every > 0 && step % every == 0 && step < total_steps {
                let path = checkpoint_path(dir, step);
                write_checkpoint(&path, &spec, &stack, &adam, step, schedule.hash())?;
            }
        }
    }

    Ok((stack.to_weights(), trace))
}

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("checkpoint_{step:08}.ckpt"))
}

const OPT_MAGIC: &[u8; 4] = b"VOPT";
const OPT_VERSION: u16 = 1;

/// Weight record plus optimizer state, step counter and schedule hash.
pub fn write_checkpoint(
    path: &Path,
    spec: &NetworkSpec,
    stack: &LayerStack,
    adam: &AdamState,
    step: u64,
    schedule_hash: u64,
) -> Result<()> {
    let mut bytes = encode_weights(spec, &stack.to_weights())?;
    let mut payload = Vec::new();
    payload.extend_from_slice(&OPT_VERSION.to_le_bytes());
    payload.extend_from_slice(&step.to_le_bytes());
    payload.extend_from_slice(&schedule_hash.to_le_bytes());
    payload.extend_from_slice(&(adam.m.len() as u64).to_le_bytes());
    for v in adam.m.iter().chain(adam.v.iter()) {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    bytes.extend_from_slice(OPT_MAGIC);
    let crc = crc32fast::hash(&payload);
    bytes.extend_from_slice(&payload);
    bytes.extend_from_slice(&crc.to_le_bytes());
    fs::write(path, bytes)?;
    Ok(())
}

pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub weights: NetworkWeights,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub schedule_hash: u64,
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let (spec, weights, consumed) = decode_weights_prefix(&bytes)?;
    let rest = &bytes[consumed..];
    let need = |n: usize, got: usize| -> Error {
        WeightFileError::Truncated {
            expected: n,
            got,
        }
        .into()
    };
    if rest.len() < 4 || &rest[..4] != OPT_MAGIC {
        return Err(Error::Checkpoint(
            "missing optimizer block after weight record".into(),
        ));
    }
    let rest = &rest[4..];
    if rest.len() < 2 + 8 + 8 + 8 + 4 {
        return Err(need(consumed + 34, bytes.len()));
    }
    let version = u16::from_le_bytes(rest[0..2].try_into().unwrap());
    if version != OPT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported optimizer block version {version}"
        )));
    }
    let step = u64::from_le_bytes(rest[2..10].try_into().unwrap());
    let schedule_hash = u64::from_le_bytes(rest[10..18].try_into().unwrap());
    let count = u64::from_le_bytes(rest[18..26].try_into().unwrap()) as usize;
    let arrays = 26 + 16 * count;
    if rest.len() != arrays + 4 {
        return Err(need(consumed + 4 + arrays + 4, bytes.len()));
    }
    let payload = &rest[..arrays];
    let stored = u32::from_le_bytes(rest[arrays..arrays + 4].try_into().unwrap());
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(WeightFileError::ChecksumMismatch { stored, computed }.into());
    }
    let read_f64s = |off: usize| -> Vec<f64> {
        rest[off..off + 8 * count]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let m = read_f64s(26);
    let v = read_f64s(26 + 8 * count);
    Ok(Checkpoint {
        spec,
        weights,
        m,
        v,
        step,
        schedule_hash,
    })
}

/// Held-out metrics of a spatial net on (noisy, clean) pairs. Infinite PSNR
/// frames are excluded from the mean and counted; all-infinite reports the
/// sentinel.
#[derive(Clone, Copy, Debug)]
pub struct EvalSummary {
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub psnr_inf_count: usize,
    pub count: usize,
}

pub fn evaluate_pairs(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    pairs: &[PatchPair],
) -> Result<EvalSummary> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("evaluation pairs".into()));
    }
    let stack = LayerStack::from_weights(spec, weights)?;
    let opts = SsimOptions::default();
    let mut psnrs = Vec::with_capacity(pairs.len());
    let mut ssim_sum = 0.0;
    for p in pairs {
        let denoised = denoise_frame(&stack, &p.noisy)?;
        psnrs.push(psnr(&denoised, &p.clean, 1.0)?);
        ssim_sum += ssim(&denoised, &p.clean, &opts)?;
    }
    let finite: Vec<f64> = psnrs.iter().copied().filter(|p| p.is_finite()).collect();
    let inf = psnrs.len() - finite.len();
    Ok(EvalSummary {
        mean_psnr_db: if finite.is_empty() {
            PSNR_INF
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        },
        mean_ssim: ssim_sum / pairs.len() as f64,
        psnr_inf_count: inf,
        count: pairs.len(),
    })
}
