//! Command implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use videnn_core::data::{
    build_spatial_dataset, build_temporal_dataset, regenerate_spatial_pairs,
    regenerate_temporal_pairs, DatasetKind, DatasetManifest, SpatialBuildConfig,
    TemporalBuildConfig,
};
use videnn_core::error::{Error, Result};
use videnn_core::image_io::{load_frame_png, save_filter_map_png, save_frame_png};
use videnn_core::metrics::evaluate_video;
use videnn_core::network::{
    build_network, denoise_window, dump_first_layer_activations, Activation, NetworkSpec,
};
use videnn_core::noise::{degrade, NoiseMix, NoiseSpec};
use videnn_core::ops::gradcheck::run_gradcheck_suite;
use videnn_core::pipeline::{
    denoise_video_spatial, denoise_video_temporal, temporal_average_baseline, VidennPipeline,
};
use videnn_core::report::{evaluate_sigma_grid, Denoiser};
use videnn_core::rng::derive_seed;
use videnn_core::tensor::Tensor;
use videnn_core::training::{resume, train, LossMode, TrainSchedule};
use videnn_core::weights_io::{load_weights, save_weights};
use videnn_core::{denoise_frame, Frame, LayerStack, CHANNELS};

use crate::args::*;
use crate::util::*;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthNoise(a) => synth_noise(a),
        Command::BuildDataset(a) => build_dataset(a),
        Command::TrainSpatial(a) => train_network(a, Phase::Spatial),
        Command::TrainTemporal(a) => train_network(a, Phase::Temporal),
        Command::Denoise(a) => denoise(a),
        Command::Evaluate(a) => evaluate(a),
        Command::EvaluateGrid(a) => evaluate_grid(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::DumpFilters(a) => dump_filters(a),
        Command::ProbeInconsistency(a) => probe_inconsistency(a),
    }
}

fn synth_noise(a: SynthNoiseArgs) -> Result<()> {
    if a.awgn_sigma.is_none() && !a.sensor {
        return Err(Error::InvalidParam(
            "select a degradation: --awgn-sigma <SIGMA> or --sensor".into(),
        ));
    }
    prepare_output_dir(&a.output, "synth-noise", &a)?;
    let frames = load_named_frames(&a.input)?;
    let mut manifest = String::new();
    for (i, (name, frame)) in frames.iter().enumerate() {
        let seed = derive_seed(a.seed, i as u64);
        let spec = if let Some(sigma) = a.awgn_sigma {
            NoiseSpec::awgn(sigma, seed)?
        } else {
            let mut p = videnn_core::SensorNoiseParams::new(a.ag, a.dg)?;
            if let Some(v) = a.ct1n {
                p.ct1n = v;
            }
            if let Some(v) = a.ct2n {
                p.ct2n = v;
            }
            if let Some(v) = a.nsat {
                p.nsat = v;
            }
            p.validate()?;
            NoiseSpec {
                kind: videnn_core::NoiseKind::Sensor(p),
                seed,
            }
        };
        let noisy = degrade(frame, &spec)?;
        save_frame_png(&noisy, &a.output.join(name))?;
        manifest.push_str(&format!("{name}\t{}\t{}\n", spec.encode_kind(), spec.seed));
    }
    fs::write(a.output.join("manifest.tsv"), manifest)?;
    println!("degraded {} frames into {}", frames.len(), a.output.display());
    Ok(())
}

fn mix_from_args(a: &BuildDatasetArgs) -> NoiseMix {
    NoiseMix {
        p_awgn: a.awgn_prob,
        sigma_range: (a.sigma_min, a.sigma_max),
        ag_range: (a.ag_min, a.ag_max),
        dg_range: (a.dg_min, a.dg_max),
    }
}

fn canonical_str(path: &Path) -> Result<String> {
    Ok(fs::canonicalize(path)?.to_string_lossy().into_owned())
}

fn build_dataset(a: BuildDatasetArgs) -> Result<()> {
    prepare_output_dir(&a.output, "build-dataset", &a)?;
    match a.kind {
        DatasetKindArg::Spatial => {
            let images_dir = a.images.as_ref().ok_or_else(|| {
                Error::InvalidParam("spatial datasets need --images <DIR>".into())
            })?;
            let named = load_named_frames(images_dir)?;
            let images: Vec<(String, Frame)> = named
                .into_iter()
                .map(|(name, frame)| Ok((canonical_str(&images_dir.join(name))?, frame)))
                .collect::<Result<_>>()?;
            let cfg = SpatialBuildConfig {
                patch_size: a.patch_size,
                patch_count: a.patch_count,
                mix: mix_from_args(&a),
                seed: a.seed,
            };
            let (manifest, pairs) = build_spatial_dataset(&images, &cfg)?;
            write_manifest(&a.output, &manifest)?;
            if !a.no_patch_pngs {
                let dir = a.output.join("pairs");
                fs::create_dir_all(&dir)?;
                for (i, p) in pairs.iter().enumerate() {
                    save_frame_png(&p.noisy, &dir.join(format!("noisy_{i:06}.png")))?;
                    save_frame_png(&p.clean, &dir.join(format!("clean_{i:06}.png")))?;
                }
            }
            println!(
                "spatial dataset: {} patches from {} images -> {}",
                pairs.len(),
                images.len(),
                a.output.display()
            );
        }
        DatasetKindArg::Temporal => {
            let videos_dir = a.videos.as_ref().ok_or_else(|| {
                Error::InvalidParam("temporal datasets need --videos <DIR>".into())
            })?;
            let weights_path = a.spatial_weights.as_ref().ok_or_else(|| {
                Error::InvalidParam(
                    "temporal datasets are built from spatially denoised frames: train the \
                     spatial network first and pass --spatial-weights"
                        .into(),
                )
            })?;
            let (s_spec, s_weights) = load_weights(weights_path)?;
            let stack = LayerStack::from_weights(&s_spec, &s_weights)?;
            let mut videos = Vec::new();
            for dir in list_video_dirs(videos_dir)? {
                let frames = load_named_frames(&dir)?
                    .into_iter()
                    .map(|(_, f)| f)
                    .collect();
                videos.push((canonical_str(&dir)?, frames));
            }
            let cfg = TemporalBuildConfig {
                patch_size: a.patch_size,
                patch_count: a.patch_count,
                mix: mix_from_args(&a),
                seed: a.seed,
                spatial_weights_crc: Some(file_crc32(weights_path)?),
            };
            let built = build_temporal_dataset(&videos, &stack, &cfg)?;
            for note in &built.skipped {
                eprintln!("warning: skipped {note}");
            }
            write_manifest(&a.output, &built.manifest)?;
            if !a.no_patch_pngs {
                let dir = a.output.join("pairs");
                fs::create_dir_all(&dir)?;
                for (i, t) in built.pairs.iter().enumerate() {
                    for (k, f) in t.inputs.iter().enumerate() {
                        save_frame_png(f, &dir.join(format!("input_{i:06}_{k}.png")))?;
                    }
                    save_frame_png(&t.clean_center, &dir.join(format!("clean_{i:06}.png")))?;
                }
            }
            println!(
                "temporal dataset: {} patch stacks from {} videos ({} skipped) -> {}",
                built.pairs.len(),
                videos.len(),
                built.skipped.len(),
                a.output.display()
            );
        }
    }
    Ok(())
}

fn write_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut buf = Vec::new();
    manifest.write(&mut buf)?;
    fs::write(dir.join("manifest.tsv"), buf)?;
    Ok(())
}

enum Phase {
    Spatial,
    Temporal,
}

fn train_network(a: TrainArgs, phase: Phase) -> Result<()> {
    let command = match phase {
        Phase::Spatial => "train-spatial",
        Phase::Temporal => "train-temporal",
    };
    prepare_output_dir(&a.output, command, &a)?;
    let manifest_path = a.dataset.join("manifest.tsv");
    let manifest = DatasetManifest::read(std::io::BufReader::new(fs::File::open(
        &manifest_path,
    )?))?;

    let mut spec = match phase {
        Phase::Spatial => {
            if manifest.header.kind != DatasetKind::Spatial {
                return Err(Error::InvalidParam(
                    "train-spatial needs a spatial dataset manifest".into(),
                ));
            }
            NetworkSpec::spatial()
        }
        Phase::Temporal => {
            if manifest.header.kind != DatasetKind::Temporal {
                return Err(Error::InvalidParam(
                    "train-temporal needs a temporal dataset manifest".into(),
                ));
            }
            NetworkSpec::temporal(a.window)
        }
    };
    if let Some(d) = a.depth {
        spec.depth = d;
    }
    if let Some(w) = a.first_width {
        spec.first_width = w;
    }
    if let Some(w) = a.mid_width {
        spec.mid_width = w;
    }
    if let Some(act) = a.activation {
        spec.activation = match act {
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::LeakyRelu => Activation::LeakyRelu {
                alpha: a.leaky_alpha,
            },
        };
    }
    if let Some(bn) = a.batch_norm {
        spec.use_bn = bn;
    }
    spec.validate()?;

    let mut schedule = apply_schedule_overrides(
        match phase {
            Phase::Spatial => TrainSchedule::spatial_default(),
            Phase::Temporal => TrainSchedule::temporal_default(),
        },
        a.epochs,
        a.batch_size,
        a.lr_segments.as_deref(),
    )?;
    schedule.shuffle_seed = derive_seed(a.seed, 1);
    schedule.checkpoint_every_steps = a.checkpoint_every;
    schedule.loss_mode = match a.loss {
        LossArg::Sum => LossMode::Sum,
        LossArg::Mean => LossMode::Mean,
    };
    schedule.grad_clip = a.grad_clip;

    let (weights, trace) = match phase {
        Phase::Spatial => {
            let pairs = regenerate_spatial_pairs(&manifest, |source| {
                load_frame_png(Path::new(source))
            })?;
            println!("regenerated {} training pairs from {}", pairs.len(), manifest_path.display());
            run_training(&a, &spec, &schedule, pairs.as_slice())?
        }
        Phase::Temporal => {
            let weights_path = a.spatial_weights.as_ref().ok_or_else(|| {
                Error::InvalidParam(
                    "temporal training runs on spatially denoised frames: train the spatial \
                     network first and pass --spatial-weights"
                        .into(),
                )
            })?;
            if let Some(expected) = manifest.header.spatial_weights_crc {
                let got = file_crc32(weights_path)?;
                if got != expected {
                    return Err(Error::InvalidParam(format!(
                        "--spatial-weights does not match the dataset (crc {got:#010x}, manifest {expected:#010x})"
                    )));
                }
            }
            let (s_spec, s_weights) = load_weights(weights_path)?;
            let stack = LayerStack::from_weights(&s_spec, &s_weights)?;
            let pairs = regenerate_temporal_pairs(&manifest, &stack, |source| {
                load_frames(Path::new(source))
            })?;
            println!("regenerated {} training stacks from {}", pairs.len(), manifest_path.display());
            run_training(&a, &spec, &schedule, pairs.as_slice())?
        }
    };

    let weights_path = a.output.join("weights.vdnn");
    save_weights(&weights_path, &spec, &weights)?;
    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    fs::write(a.output.join("loss.csv"), csv)?;
    if let Some(last) = trace.steps.last() {
        println!(
            "trained {} steps (final loss {:.6}) -> {}",
            last.step,
            last.loss,
            weights_path.display()
        );
    } else {
        println!("schedule already complete; wrote {}", weights_path.display());
    }
    Ok(())
}

fn run_training<D: videnn_core::TrainingSet + ?Sized>(
    a: &TrainArgs,
    spec: &NetworkSpec,
    schedule: &TrainSchedule,
    data: &D,
) -> Result<(videnn_core::NetworkWeights, videnn_core::LossTrace)> {
    let ckpt_dir = a.output.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;
    match &a.resume {
        Some(ck) => {
            let total = schedule.total_steps(data.len(), spec.use_bn);
            let out = resume(ck, data, schedule, Some(&ckpt_dir))?;
            if out.1.steps.is_empty() {
                eprintln!(
                    "warning: checkpoint is at or past the schedule end ({total} steps); nothing to do"
                );
            }
            Ok(out)
        }
        None => {
            let init = build_network(spec, derive_seed(a.seed, 0))?;
            train(spec, &init, data, schedule, Some(&ckpt_dir))
        }
    }
}

fn load_stack(path: &Path) -> Result<LayerStack> {
    let (spec, weights) = load_weights(path)?;
    LayerStack::from_weights(&spec, &weights)
}

fn denoise(a: DenoiseArgs) -> Result<()> {
    prepare_output_dir(&a.output, "denoise", &a)?;
    let named = load_named_frames(&a.input)?;
    let frames: Vec<Frame> = named.iter().map(|(_, f)| f.clone()).collect();
    let parallel = !a.deterministic;

    let need = |opt: &Option<std::path::PathBuf>, which: &str| -> Result<std::path::PathBuf> {
        opt.clone().ok_or_else(|| {
            Error::InvalidParam(format!("mode {:?} needs --{which}", a.mode))
        })
    };

    let out_frames = match a.mode {
        DenoiseMode::Spatial => {
            let stack = load_stack(&need(&a.spatial_weights, "spatial-weights")?)?;
            denoise_video_spatial(&stack, &frames, parallel)?
        }
        DenoiseMode::Temporal => {
            let stack = load_stack(&need(&a.temporal_weights, "temporal-weights")?)?;
            let window = stack.spec().in_channels / CHANNELS;
            denoise_video_temporal(&stack, window, &frames, parallel)?
        }
        DenoiseMode::Full => {
            let (s_spec, s_weights) = load_weights(&need(&a.spatial_weights, "spatial-weights")?)?;
            let (t_spec, t_weights) =
                load_weights(&need(&a.temporal_weights, "temporal-weights")?)?;
            let pipe = VidennPipeline::new(&s_spec, &s_weights, &t_spec, &t_weights)?;
            pipe.denoise_video(&frames, parallel)?
        }
        DenoiseMode::TemporalAverage => temporal_average_baseline(&frames, a.window)?,
    };

    for ((name, _), frame) in named.iter().zip(&out_frames) {
        save_frame_png(frame, &a.output.join(name))?;
    }
    println!(
        "denoised {} frames ({:?}) -> {}",
        out_frames.len(),
        a.mode,
        a.output.display()
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    write_config_snapshot(&sidecar_config_path(&a.output), "evaluate", &a)?;
    let reference: BTreeMap<String, Frame> = load_named_frames(&a.reference)?.into_iter().collect();
    let test: BTreeMap<String, Frame> = load_named_frames(&a.test)?.into_iter().collect();

    let missing_in_test: Vec<&String> =
        reference.keys().filter(|k| !test.contains_key(*k)).collect();
    let missing_in_ref: Vec<&String> =
        test.keys().filter(|k| !reference.contains_key(*k)).collect();
    if !missing_in_test.is_empty() || !missing_in_ref.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "unmatched frames; missing in test: {missing_in_test:?}, missing in reference: {missing_in_ref:?}"
        )));
    }

    let refs: Vec<Frame> = reference.values().cloned().collect();
    let tests: Vec<Frame> = test.values().cloned().collect();
    let report = evaluate_video(&refs, &tests)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    fs::write(&a.output, csv)?;
    println!(
        "{} frames: mean PSNR {} dB ({} inf), mean SSIM {:.4} -> {}",
        report.frame_count,
        if report.mean_psnr_db.is_infinite() {
            "inf".to_string()
        } else {
            format!("{:.2}", report.mean_psnr_db)
        },
        report.psnr_inf_count,
        report.mean_ssim,
        a.output.display()
    );
    Ok(())
}

fn evaluate_grid(a: EvaluateGridArgs) -> Result<()> {
    write_config_snapshot(&sidecar_config_path(&a.output), "evaluate-grid", &a)?;
    let clean = load_frames(&a.clean)?;
    let sigmas = parse_f64_list(&a.sigmas)?;
    let parallel = !a.deterministic;

    let spatial_stack = a.spatial_weights.as_deref().map(load_stack).transpose()?;
    let full_pipe = match (&a.spatial_weights, &a.temporal_weights) {
        (Some(s), Some(t)) => {
            let (s_spec, s_weights) = load_weights(s)?;
            let (t_spec, t_weights) = load_weights(t)?;
            Some(VidennPipeline::new(&s_spec, &s_weights, &t_spec, &t_weights)?)
        }
        _ => None,
    };

    let mut denoisers: Vec<Denoiser> = Vec::new();
    if let Some(stack) = &spatial_stack {
        denoisers.push((
            "spatial-cnn".into(),
            Box::new(move |frames: &[Frame]| denoise_video_spatial(stack, frames, parallel)),
        ));
    }
    if let Some(pipe) = &full_pipe {
        denoisers.push((
            "videnn".into(),
            Box::new(move |frames: &[Frame]| pipe.denoise_video(frames, parallel)),
        ));
    }
    if a.baseline {
        denoisers.push((
            "temporal-average".into(),
            Box::new(|frames: &[Frame]| temporal_average_baseline(frames, 3)),
        ));
    }

    let report = evaluate_sigma_grid(&clean, &sigmas, a.seed, &denoisers)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    fs::write(&a.output, csv)?;
    println!(
        "sigma grid over {} frames x {} levels -> {}",
        clean.len(),
        sigmas.len(),
        a.output.display()
    );
    println!(
        "note: published full-scale table values need the full corpora and 100-epoch training"
    );
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let reports = run_gradcheck_suite(a.seed);
    let mut lines = Vec::new();
    let mut all_pass = true;
    for r in &reports {
        let status = if r.passed() { "ok" } else { "FAIL" };
        let line = format!(
            "{:<12} max rel err {:.3e} (tolerance {:.0e}) {status}",
            r.op, r.max_rel_err, r.tolerance
        );
        println!("{line}");
        lines.push(line);
        all_pass &= r.passed();
    }
    if let Some(dir) = &a.output {
        prepare_output_dir(dir, "gradcheck", &a)?;
        fs::write(dir.join("gradcheck.txt"), lines.join("\n") + "\n")?;
    }
    if !all_pass {
        return Err(Error::NonFinite("gradient check failed".into()));
    }
    Ok(())
}

fn dump_filters(a: DumpFiltersArgs) -> Result<()> {
    prepare_output_dir(&a.output, "dump-filters", &a)?;
    let stack = load_stack(&a.weights)?;
    let frame = load_frame_png(&a.input)?;
    let window = stack.spec().in_channels / CHANNELS;
    let input = if window == 1 {
        Tensor::from_frame(&frame)
    } else {
        // Stacked-input networks see the static frame replicated.
        Tensor::stack_frames(&vec![&frame; window])?
    };
    let maps = dump_first_layer_activations(&stack, &input)?;
    let selected: Vec<usize> = match &a.filters {
        Some(list) => parse_usize_list(list)?,
        None => (0..maps.len()).collect(),
    };
    for &idx in &selected {
        let map = maps.get(idx).ok_or_else(|| {
            Error::InvalidParam(format!("filter {idx} out of range (layer has {})", maps.len()))
        })?;
        save_filter_map_png(map, &a.output.join(format!("filter_{idx:03}.png")))?;
    }
    println!(
        "wrote {} of {} first-layer filter maps -> {}",
        selected.len(),
        maps.len(),
        a.output.display()
    );
    Ok(())
}

fn probe_inconsistency(a: ProbeArgs) -> Result<()> {
    let (s_spec, s_weights) = load_weights(&a.spatial_weights)?;
    let s_stack = LayerStack::from_weights(&s_spec, &s_weights)?;
    let (t_spec, t_weights) = load_weights(&a.temporal_weights)?;
    let t_stack = LayerStack::from_weights(&t_spec, &t_weights)?;

    let clean = load_frame_png(&a.clean)?;
    let load_denoised = |p: &Path| -> Result<Frame> { denoise_frame(&s_stack, &load_frame_png(p)?) };
    let prev = load_denoised(&a.prev)?;
    let center = load_denoised(&a.center)?;
    let next = load_denoised(&a.next)?;
    let edited_prev = match &a.edited_prev {
        Some(p) => load_denoised(p)?,
        None => prev.clone(),
    };
    let edited_next = match &a.edited_next {
        Some(p) => load_denoised(p)?,
        None => next.clone(),
    };

    let original = denoise_window(&t_stack, &[&prev, &center, &next])?;
    let edited = denoise_window(&t_stack, &[&edited_prev, &center, &edited_next])?;
    let p_original = videnn_core::metrics::psnr(&original, &clean, 1.0)?;
    let p_edited = videnn_core::metrics::psnr(&edited, &clean, 1.0)?;
    // Identical outputs mean the edit changed nothing, whatever the PSNRs.
    let delta = if edited == original {
        0.0
    } else {
        p_edited - p_original
    };

    let lines = format!(
        "psnr_original_neighbors_db,{p_original:.4}\npsnr_edited_neighbors_db,{p_edited:.4}\ndelta_db,{delta:.4}\n"
    );
    print!("{lines}");
    if let Some(dir) = &a.output {
        prepare_output_dir(dir, "probe-inconsistency", &a)?;
        fs::write(dir.join("report.csv"), lines)?;
        save_frame_png(&original, &dir.join("center_original_neighbors.png"))?;
        save_frame_png(&edited, &dir.join("center_edited_neighbors.png"))?;
    }
    Ok(())
}
