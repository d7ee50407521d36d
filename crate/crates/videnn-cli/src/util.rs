//! Shared helpers for command implementations.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use videnn_core::error::{Error, Result};
use videnn_core::training::{LrSegment, TrainSchedule};
use videnn_core::Frame;

/// Creates the output directory and records the resolved command config as
/// `config.json`, so every run can be replayed.
pub fn prepare_output_dir<T: Serialize>(dir: &Path, command: &str, config: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_config_snapshot(&dir.join("config.json"), command, config)
}

pub fn write_config_snapshot<T: Serialize>(path: &Path, command: &str, config: &T) -> Result<()> {
    let snapshot = serde_json::json!({ "command": command, "args": config });
    let text = serde_json::to_string_pretty(&snapshot)
        .map_err(|e| Error::InvalidParam(format!("config snapshot: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

/// Snapshot path for commands whose output is a single file: a
/// `.config.json` sidecar next to it.
pub fn sidecar_config_path(output: &Path) -> std::path::PathBuf {
    let mut name = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into());
    name.push_str(".config.json");
    output.with_file_name(name)
}

/// Loads a frame directory as (file name, frame) pairs in name order.
pub fn load_named_frames(dir: &Path) -> Result<Vec<(String, Frame)>> {
    videnn_core::image_io::load_frame_dir(dir)
}

pub fn load_frames(dir: &Path) -> Result<Vec<Frame>> {
    Ok(load_named_frames(dir)?.into_iter().map(|(_, f)| f).collect())
}

/// Lists the immediate subdirectories of a corpus root, sorted by name; each
/// one is treated as a video of numbered PNG frames.
pub fn list_video_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no video subdirectories in {}",
            root.display()
        )));
    }
    Ok(dirs)
}

/// Parses `epochs:lr` comma-separated learning-rate segments.
pub fn parse_lr_segments(text: &str) -> Result<Vec<LrSegment>> {
    let mut segments = Vec::new();
    for part in text.split(',') {
        let (epochs, lr) = part.split_once(':').ok_or_else(|| {
            Error::InvalidParam(format!("lr segment '{part}' is not 'epochs:lr'"))
        })?;
        segments.push(LrSegment {
            epochs: epochs
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParam(format!("bad epoch count in '{part}'")))?,
            lr: lr
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParam(format!("bad learning rate in '{part}'")))?,
        });
    }
    if segments.is_empty() {
        return Err(Error::InvalidParam("empty lr segment list".into()));
    }
    Ok(segments)
}

pub fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidParam(format!("bad number '{s}'")))
        })
        .collect()
}

pub fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidParam(format!("bad index '{s}'")))
        })
        .collect()
}

/// Applies a lr-segment override to a schedule, recomputing the epoch total
/// when only segments were given.
pub fn apply_schedule_overrides(
    mut schedule: TrainSchedule,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr_segments: Option<&str>,
) -> Result<TrainSchedule> {
    if let Some(text) = lr_segments {
        schedule.lr_segments = parse_lr_segments(text)?;
        schedule.epochs = schedule.lr_segments.iter().map(|s| s.epochs).sum();
    }
    if let Some(e) = epochs {
        schedule.epochs = e;
        if lr_segments.is_none() {
            // Stretch or trim the default segments to the requested length.
            let lr_head = schedule.lr_segments.first().map(|s| s.lr).unwrap_or(1e-3);
            let lr_tail = schedule.lr_segments.last().map(|s| s.lr).unwrap_or(1e-4);
            if e >= 5 && lr_head != lr_tail {
                let head = e / 5;
                schedule.lr_segments = vec![
                    LrSegment {
                        epochs: head,
                        lr: lr_head,
                    },
                    LrSegment {
                        epochs: e - head,
                        lr: lr_tail,
                    },
                ];
            } else {
                schedule.lr_segments = vec![LrSegment {
                    epochs: e,
                    lr: lr_head,
                }];
            }
        }
    }
    if let Some(b) = batch_size {
        schedule.batch_size = b;
    }
    schedule.validate()?;
    Ok(schedule)
}

pub fn file_crc32(path: &Path) -> Result<u32> {
    Ok(crc32fast::hash(&fs::read(path)?))
}
