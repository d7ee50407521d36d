//! End-to-end tests of the `videnn` binary: pipeline order, determinism,
//! exit codes and file outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use videnn_core::image_io::{load_frame_png, save_frame_png};
use videnn_core::network::{build_network, NetworkSpec};
use videnn_core::rng::{derive_seed, normal_at};
use videnn_core::weights_io::save_weights;
use videnn_core::Frame;

fn videnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_videnn"))
        .args(args)
        .output()
        .expect("spawn videnn")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

/// Smooth texture on the exact 8-bit grid so PNG round trips are lossless.
fn texture(h: usize, w: usize, seed: u64) -> Frame {
    let data: Vec<f32> = (0..h * w * 3)
        .map(|i| {
            let v = 0.5 + 0.3 * (normal_at(seed, i as u64 / 7)).tanh();
            (v * 255.0).round() as f32 / 255.0
        })
        .collect();
    Frame::new(h, w, data).unwrap()
}

fn write_frames(dir: &Path, count: usize, seed: u64) -> Vec<PathBuf> {
    fs::create_dir_all(dir).unwrap();
    (0..count)
        .map(|i| {
            let path = dir.join(format!("frame_{:06}.png", i + 1));
            save_frame_png(&texture(40, 44, derive_seed(seed, i as u64)), &path).unwrap();
            path
        })
        .collect()
}

fn zero_residual_weights(path: &Path, spec: &NetworkSpec, seed: u64) {
    let mut w = build_network(spec, seed).unwrap();
    w.zero_final_layer();
    save_weights(path, spec, &w).unwrap();
}

#[test]
fn synth_noise_sigma_zero_is_lossless_and_seeded_runs_repeat() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("input");
    write_frames(&input, 2, 1);

    let out0 = tmp.path().join("zero");
    assert_success(&videnn(&[
        "synth-noise",
        "--input",
        input.to_str().unwrap(),
        "--output",
        out0.to_str().unwrap(),
        "--awgn-sigma",
        "0",
        "--seed",
        "7",
    ]));
    for name in ["frame_000001.png", "frame_000002.png"] {
        let a = load_frame_png(&input.join(name)).unwrap();
        let b = load_frame_png(&out0.join(name)).unwrap();
        assert_eq!(a, b, "sigma 0 must keep pixel content");
    }
    assert!(out0.join("config.json").exists());
    assert!(out0.join("manifest.tsv").exists());

    let run = |dir: &Path| {
        assert_success(&videnn(&[
            "synth-noise",
            "--input",
            input.to_str().unwrap(),
            "--output",
            dir.to_str().unwrap(),
            "--awgn-sigma",
            "25",
            "--seed",
            "9",
        ]));
    };
    let a_dir = tmp.path().join("a");
    let b_dir = tmp.path().join("b");
    run(&a_dir);
    run(&b_dir);
    for name in ["frame_000001.png", "frame_000002.png"] {
        assert_eq!(
            fs::read(a_dir.join(name)).unwrap(),
            fs::read(b_dir.join(name)).unwrap(),
            "same seed must produce identical bytes"
        );
    }

    // The reference sensor corruption setting runs cleanly.
    let sensor = tmp.path().join("sensor");
    assert_success(&videnn(&[
        "synth-noise",
        "--input",
        input.to_str().unwrap(),
        "--output",
        sensor.to_str().unwrap(),
        "--sensor",
        "--ag",
        "64",
        "--dg",
        "4",
        "--seed",
        "3",
    ]));

    // No degradation selected is a usage error.
    let none = videnn(&[
        "synth-noise",
        "--input",
        input.to_str().unwrap(),
        "--output",
        tmp.path().join("none").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&none), 1);
}

#[test]
fn gradcheck_passes_and_prints_per_op_lines() {
    let out = videnn(&["gradcheck", "--seed", "5"]);
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    for op in ["conv2d", "relu", "leaky_relu", "batch_norm", "l2_loss"] {
        assert!(stdout.contains(op), "missing {op} in: {stdout}");
    }
    assert_eq!(stdout.matches(" ok").count(), 5);
}

#[test]
fn full_pipeline_build_train_denoise_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let images = tmp.path().join("images");
    write_frames(&images, 3, 11);

    // Spatial dataset at fixed sigma.
    let ds = tmp.path().join("dataset");
    assert_success(&videnn(&[
        "build-dataset",
        "--kind",
        "spatial",
        "--images",
        images.to_str().unwrap(),
        "--output",
        ds.to_str().unwrap(),
        "--patch-size",
        "20",
        "--patch-count",
        "12",
        "--awgn-prob",
        "1",
        "--sigma-min",
        "25",
        "--sigma-max",
        "25",
        "--seed",
        "3",
    ]));
    assert!(ds.join("manifest.tsv").exists());
    assert!(ds.join("pairs/noisy_000000.png").exists());
    assert!(ds.join("pairs/clean_000011.png").exists());

    // Tiny spatial training, twice, must be byte-identical.
    let train_args = |out: &Path| {
        vec![
            "train-spatial".to_string(),
            "--dataset".into(),
            ds.to_str().unwrap().into(),
            "--output".into(),
            out.to_str().unwrap().into(),
            "--depth".into(),
            "3".into(),
            "--first-width".into(),
            "6".into(),
            "--mid-width".into(),
            "6".into(),
            "--epochs".into(),
            "4".into(),
            "--batch-size".into(),
            "4".into(),
            "--lr-segments".into(),
            "4:1e-3".into(),
            "--seed".into(),
            "5".into(),
        ]
    };
    let t1 = tmp.path().join("train1");
    let t2 = tmp.path().join("train2");
    for out in [&t1, &t2] {
        let args = train_args(out);
        let args: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
        assert_success(&videnn(&args));
    }
    let w1 = fs::read(t1.join("weights.vdnn")).unwrap();
    assert_eq!(w1, fs::read(t2.join("weights.vdnn")).unwrap());
    assert!(t1.join("loss.csv").exists());
    assert!(t1.join("config.json").exists());

    // Temporal dataset requires the spatial pipeline stage.
    let videos = tmp.path().join("videos");
    write_frames(&videos.join("clip0"), 6, 21);
    let tds = tmp.path().join("tdataset");
    let missing = videnn(&[
        "build-dataset",
        "--kind",
        "temporal",
        "--videos",
        videos.to_str().unwrap(),
        "--output",
        tds.to_str().unwrap(),
        "--patch-count",
        "6",
    ]);
    assert_eq!(exit_code(&missing), 1);
    assert!(
        String::from_utf8_lossy(&missing.stderr).contains("spatial"),
        "error must cite the pipeline order"
    );

    let spatial_weights = t1.join("weights.vdnn");
    assert_success(&videnn(&[
        "build-dataset",
        "--kind",
        "temporal",
        "--videos",
        videos.to_str().unwrap(),
        "--spatial-weights",
        spatial_weights.to_str().unwrap(),
        "--output",
        tds.to_str().unwrap(),
        "--patch-size",
        "20",
        "--patch-count",
        "6",
        "--awgn-prob",
        "1",
        "--sigma-min",
        "25",
        "--sigma-max",
        "25",
        "--seed",
        "4",
    ]));

    // Temporal training without --spatial-weights names the pipeline order.
    let tt = tmp.path().join("ttrain");
    let missing_train = videnn(&[
        "train-temporal",
        "--dataset",
        tds.to_str().unwrap(),
        "--output",
        tt.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&missing_train), 1);
    assert!(String::from_utf8_lossy(&missing_train.stderr).contains("train the spatial"));

    assert_success(&videnn(&[
        "train-temporal",
        "--dataset",
        tds.to_str().unwrap(),
        "--spatial-weights",
        spatial_weights.to_str().unwrap(),
        "--output",
        tt.to_str().unwrap(),
        "--depth",
        "3",
        "--first-width",
        "6",
        "--mid-width",
        "6",
        "--epochs",
        "4",
        "--batch-size",
        "3",
        "--lr-segments",
        "4:1e-4",
        "--seed",
        "6",
    ]));
    let temporal_weights = tt.join("weights.vdnn");
    assert!(temporal_weights.exists());

    // Full pipeline denoise: N frames in, N out, same names.
    let noisy = tmp.path().join("noisy");
    assert_success(&videnn(&[
        "synth-noise",
        "--input",
        videos.join("clip0").to_str().unwrap(),
        "--output",
        noisy.to_str().unwrap(),
        "--awgn-sigma",
        "25",
        "--seed",
        "8",
    ]));
    let denoised = tmp.path().join("denoised");
    assert_success(&videnn(&[
        "denoise",
        "--input",
        noisy.to_str().unwrap(),
        "--output",
        denoised.to_str().unwrap(),
        "--mode",
        "full",
        "--spatial-weights",
        spatial_weights.to_str().unwrap(),
        "--temporal-weights",
        temporal_weights.to_str().unwrap(),
        "--deterministic",
    ]));
    let outputs: Vec<_> = fs::read_dir(&denoised)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "png"))
        .collect();
    assert_eq!(outputs.len(), 6);

    // Evaluate the denoised clip against the clean one.
    let csv = tmp.path().join("metrics.csv");
    assert_success(&videnn(&[
        "evaluate",
        "--reference",
        videos.join("clip0").to_str().unwrap(),
        "--test",
        denoised.to_str().unwrap(),
        "--output",
        csv.to_str().unwrap(),
    ]));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("frame_index,psnr_db,ssim"));
    assert_eq!(text.lines().count(), 8); // header + 6 frames + mean

    // Identical directories score the SSIM ceiling with infinite PSNR.
    let self_csv = tmp.path().join("self.csv");
    assert_success(&videnn(&[
        "evaluate",
        "--reference",
        videos.join("clip0").to_str().unwrap(),
        "--test",
        videos.join("clip0").to_str().unwrap(),
        "--output",
        self_csv.to_str().unwrap(),
    ]));
    let self_text = fs::read_to_string(&self_csv).unwrap();
    for line in self_text.lines().skip(1) {
        assert!(line.ends_with(",1"), "expected SSIM 1.0 rows: {line}");
        assert!(line.contains(",inf,"), "expected inf PSNR: {line}");
    }

    // A missing frame is a data error naming the file.
    let broken = tmp.path().join("broken");
    fs::create_dir_all(&broken).unwrap();
    for i in 1..6 {
        fs::copy(
            denoised.join(format!("frame_{i:06}.png")),
            broken.join(format!("frame_{i:06}.png")),
        )
        .unwrap();
    }
    let mismatch = videnn(&[
        "evaluate",
        "--reference",
        videos.join("clip0").to_str().unwrap(),
        "--test",
        broken.to_str().unwrap(),
        "--output",
        tmp.path().join("broken.csv").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&mismatch), 2);
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("frame_000006.png"));
}

#[test]
fn denoise_modes_identity_and_replication() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("frames");
    write_frames(&input, 1, 31); // single frame: window replication path

    let s_path = tmp.path().join("s.vdnn");
    zero_residual_weights(&s_path, &NetworkSpec::toy_spatial(3, 4), 1);
    let t_path = tmp.path().join("t.vdnn");
    zero_residual_weights(&t_path, &NetworkSpec::toy_temporal(3, 3, 4), 2);

    for mode in ["spatial", "temporal", "full"] {
        let out = tmp.path().join(mode);
        assert_success(&videnn(&[
            "denoise",
            "--input",
            input.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
            "--mode",
            mode,
            "--spatial-weights",
            s_path.to_str().unwrap(),
            "--temporal-weights",
            t_path.to_str().unwrap(),
        ]));
        let a = load_frame_png(&input.join("frame_000001.png")).unwrap();
        let b = load_frame_png(&out.join("frame_000001.png")).unwrap();
        assert_eq!(a, b, "zero-residual {mode} must be the identity");
    }

    let avg = tmp.path().join("avg");
    assert_success(&videnn(&[
        "denoise",
        "--input",
        input.to_str().unwrap(),
        "--output",
        avg.to_str().unwrap(),
        "--mode",
        "temporal-average",
        "--window",
        "3",
    ]));
    assert!(avg.join("frame_000001.png").exists());

    // Mode/weights mismatch is a config error.
    let missing = videnn(&[
        "denoise",
        "--input",
        input.to_str().unwrap(),
        "--output",
        tmp.path().join("x").to_str().unwrap(),
        "--mode",
        "spatial",
    ]);
    assert_eq!(exit_code(&missing), 1);
}

#[test]
fn dump_filters_writes_selected_maps() {
    let tmp = tempfile::tempdir().unwrap();
    let img = tmp.path().join("input.png");
    save_frame_png(&texture(24, 24, 41), &img).unwrap();
    let w_path = tmp.path().join("w.vdnn");
    let spec = NetworkSpec::toy_spatial(3, 6);
    save_weights(&w_path, &spec, &build_network(&spec, 3).unwrap()).unwrap();

    let all = tmp.path().join("all");
    assert_success(&videnn(&[
        "dump-filters",
        "--weights",
        w_path.to_str().unwrap(),
        "--input",
        img.to_str().unwrap(),
        "--output",
        all.to_str().unwrap(),
    ]));
    let count = fs::read_dir(&all)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .starts_with("filter_")
        })
        .count();
    assert_eq!(count, 6);

    let some = tmp.path().join("some");
    assert_success(&videnn(&[
        "dump-filters",
        "--weights",
        w_path.to_str().unwrap(),
        "--input",
        img.to_str().unwrap(),
        "--output",
        some.to_str().unwrap(),
        "--filters",
        "1,3",
    ]));
    assert!(some.join("filter_001.png").exists());
    assert!(some.join("filter_003.png").exists());
    let count = fs::read_dir(&some)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .starts_with("filter_")
        })
        .count();
    assert_eq!(count, 2);
}

#[test]
fn probe_inconsistency_reports_zero_delta_without_edits() {
    let tmp = tempfile::tempdir().unwrap();
    let frames = write_frames(&tmp.path().join("frames"), 3, 51);
    let s_path = tmp.path().join("s.vdnn");
    zero_residual_weights(&s_path, &NetworkSpec::toy_spatial(3, 4), 1);
    let t_path = tmp.path().join("t.vdnn");
    zero_residual_weights(&t_path, &NetworkSpec::toy_temporal(3, 3, 4), 2);

    let report_dir = tmp.path().join("probe");
    let out = videnn(&[
        "probe-inconsistency",
        "--prev",
        frames[0].to_str().unwrap(),
        "--center",
        frames[1].to_str().unwrap(),
        "--next",
        frames[2].to_str().unwrap(),
        "--clean",
        frames[1].to_str().unwrap(),
        "--edited-prev",
        frames[2].to_str().unwrap(), // a genuinely different neighbor
        "--spatial-weights",
        s_path.to_str().unwrap(),
        "--temporal-weights",
        t_path.to_str().unwrap(),
        "--output",
        report_dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    // Zero-residual temporal net: edits to neighbors cannot change anything.
    assert!(stdout.contains("delta_db,0.0000"), "{stdout}");
    assert!(report_dir.join("report.csv").exists());
    assert!(report_dir.join("center_original_neighbors.png").exists());
}

#[test]
fn evaluate_grid_emits_table_shaped_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let clean = tmp.path().join("clean");
    write_frames(&clean, 2, 61);
    let csv = tmp.path().join("grid.csv");
    assert_success(&videnn(&[
        "evaluate-grid",
        "--clean",
        clean.to_str().unwrap(),
        "--output",
        csv.to_str().unwrap(),
        "--sigmas",
        "5,25",
        "--baseline",
        "--seed",
        "2",
    ]));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("method,sigma_5,sigma_25"));
    assert_eq!(text.lines().count(), 3); // noisy + temporal-average
}
