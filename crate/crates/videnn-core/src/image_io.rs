//! PNG frame I/O: single frames, sorted frame directories and grayscale
//! filter-map export.

use std::path::{Path, PathBuf};

use image::{GrayImage, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::network::FilterMap;

/// Loads an 8-bit RGB PNG as a normalized frame. Other color types are
/// converted to RGB first.
pub fn load_frame_png(path: &Path) -> Result<Frame> {
    let img = ImageReader::open(path)?.decode()?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
    Frame::new(h as usize, w as usize, data)
}

/// Saves a frame as an 8-bit RGB PNG (values scaled by 255 and rounded).
pub fn save_frame_png(frame: &Frame, path: &Path) -> Result<()> {
    let data: Vec<u8> = frame
        .data()
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let img = RgbImage::from_raw(frame.width() as u32, frame.height() as u32, data)
        .ok_or_else(|| Error::ShapeMismatch("frame buffer for png".into()))?;
    img.save(path)?;
    Ok(())
}

/// Lists `*.png` files in a directory in lexicographic order; zero-padded
/// frame numbering keeps that order temporal.
pub fn list_png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .map(|e| e.eq_ignore_ascii_case("png"))
                    .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no .png files in {}",
            dir.display()
        )));
    }
    Ok(files)
}

/// Loads every PNG of a directory as (file name, frame), sorted by name.
pub fn load_frame_dir(dir: &Path) -> Result<Vec<(String, Frame)>> {
    list_png_files(dir)?
        .into_iter()
        .map(|p| {
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((name, load_frame_png(&p)?))
        })
        .collect()
}

/// Saves a normalized single-channel map as a grayscale PNG.
pub fn save_filter_map_png(map: &FilterMap, path: &Path) -> Result<()> {
    let data: Vec<u8> = map
        .data
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let img = GrayImage::from_raw(map.width as u32, map.height as u32, data)
        .ok_or_else(|| Error::ShapeMismatch("filter map buffer".into()))?;
    img.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::CHANNELS;
    use crate::rng::normal_at;

    #[test]
    fn png_round_trip_preserves_8bit_content() {
        let dir = tempfile::tempdir().unwrap();
        // A frame on the exact 8-bit grid survives the round trip bit-exactly.
        let data: Vec<f32> = (0..6 * 4 * CHANNELS)
            .map(|i| {
                let level = ((normal_at(3, i as u64).abs() * 90.0) as u32).min(255);
                level as f32 / 255.0
            })
            .collect();
        let frame = Frame::new(6, 4, data).unwrap();
        let path = dir.path().join("f.png");
        save_frame_png(&frame, &path).unwrap();
        let back = load_frame_png(&path).unwrap();
        assert_eq!(back, frame);
    }

    #[test]
    fn directories_list_sorted_and_reject_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(list_png_files(dir.path()).is_err());
        let f = Frame::constant(2, 2, 0.5).unwrap();
        for name in ["frame_000002.png", "frame_000001.png", "frame_000010.png"] {
            save_frame_png(&f, &dir.path().join(name)).unwrap();
        }
        let listed = list_png_files(dir.path()).unwrap();
        let names: Vec<String> = listed
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(
            names,
            vec![
                "frame_000001.png",
                "frame_000002.png",
                "frame_000010.png"
            ]
        );
        assert_eq!(load_frame_dir(dir.path()).unwrap().len(), 3);
    }
}
