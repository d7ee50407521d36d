//! Blind video denoising toolkit: a two-stage residual CNN (per-frame
//! spatial denoiser followed by a 3-frame temporal denoiser), a realistic
//! signal-dependent sensor noise model, dataset construction, two-phase
//! training and a PSNR/SSIM evaluation harness.
//!
//! Everything runs on the CPU with deterministic seeded randomness; see the
//! `videnn` binary for the command-line surface.

pub mod data;
pub mod error;
pub mod frame;
pub mod image_io;
pub mod metrics;
pub mod network;
pub mod noise;
pub mod ops;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod tensor;
pub mod training;
pub mod weights_io;

pub use error::{Error, Result};
pub use frame::{Frame, CHANNELS};
pub use network::{
    build_network, denoise_frame, denoise_window, dump_first_layer_activations, Activation,
    LayerStack, NetworkSpec, NetworkWeights,
};
pub use noise::{
    apply_awgn, apply_sensor_noise, degrade, noise_scale, sample_noise_spec, AwgnParams,
    NoiseKind, NoiseMix, NoiseSpec, SensorNoiseParams,
};
pub use pipeline::{
    denoise_video_spatial, denoise_video_temporal, temporal_average_baseline, VidennPipeline,
};
pub use tensor::Tensor;
pub use training::{train, resume, LossMode, LossTrace, TrainSchedule, TrainingSet};
