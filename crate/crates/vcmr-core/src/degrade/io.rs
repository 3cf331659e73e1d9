//! Frame sequence ingestion. Frames are 8-bit binary PGM (P5) or PNG files
//! named `frame_%04d.pgm` / `frame_%04d.png`; an optional `manifest.json`
//! sidecar carries per-frame coding-type tags for externally decoded video.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{Image, ImageError};

#[derive(Debug, Error)]
pub enum SequenceError {
    #[error("no frames matching frame_NNNN.(pgm|png) found in {0}")]
    NoFrames(PathBuf),
    #[error("frame index {0} is missing but higher-numbered frames exist")]
    MissingFrames(usize),
    #[error("frame {index} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        index: usize,
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("cannot read {path}: {reason}")]
    UnreadableFile { path: PathBuf, reason: String },
    #[error("bad manifest {path}: {reason}")]
    BadManifest { path: PathBuf, reason: String },
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Per-frame coding type from the manifest of an externally decoded
/// sequence; the surrogate has no frame types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CodingType {
    I,
    P,
    B,
}

#[derive(Debug, Deserialize)]
struct Manifest {
    frames: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    index: usize,
    #[serde(rename = "type")]
    coding_type: CodingType,
}

pub struct LoadedSequence {
    pub frames: Vec<Image>,
    /// One entry per frame; `None` where the manifest has no tag.
    pub coding_types: Vec<Option<CodingType>>,
}

fn frame_path(dir: &Path, index: usize) -> Option<PathBuf> {
    for ext in ["pgm", "png"] {
        let candidate = dir.join(format!("frame_{index:04}.{ext}"));
        if candidate.is_file() {
            return Some(candidate);
        }
    }
    None
}

/// BT.601 luma for color inputs; grayscale inputs pass through, which keeps
/// 8-bit PGM round-trips exact.
pub fn read_frame(path: &Path) -> Result<Image, SequenceError> {
    let unreadable = |reason: String| SequenceError::UnreadableFile {
        path: path.to_path_buf(),
        reason,
    };
    let dynamic = image::open(path).map_err(|e| unreadable(e.to_string()))?;
    let (width, height) = (dynamic.width() as usize, dynamic.height() as usize);
    let samples: Vec<f32> = match dynamic {
        image::DynamicImage::ImageLuma8(luma) => {
            luma.into_raw().into_iter().map(|v| v as f32).collect()
        }
        other => other
            .into_rgb8()
            .pixels()
            .map(|p| {
                0.299 * p.0[0] as f32 + 0.587 * p.0[1] as f32 + 0.114 * p.0[2] as f32
            })
            .collect(),
    };
    Ok(Image::new(width, height, samples)?)
}

/// 8-bit binary PGM; samples round to the nearest integer on write.
pub fn write_pgm(path: &Path, image: &Image) -> Result<(), SequenceError> {
    let io_error = |e: std::io::Error| SequenceError::UnreadableFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut data = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    data.extend(
        image
            .samples()
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8),
    );
    let mut file = fs::File::create(path).map_err(io_error)?;
    file.write_all(&data).map_err(io_error)
}

/// Load `frame_0000..frame_{n-1}` from a directory, in index order, with
/// dimension consistency enforced and gaps in the numbering rejected.
pub fn load_external_sequence(dir: &Path) -> Result<LoadedSequence, SequenceError> {
    let mut frames = Vec::new();
    let mut index = 0usize;
    while let Some(path) = frame_path(dir, index) {
        frames.push(read_frame(&path)?);
        index += 1;
    }
    if frames.is_empty() {
        return Err(SequenceError::NoFrames(dir.to_path_buf()));
    }

    // Anything matching the pattern beyond the contiguous range is a gap.
    if let Ok(entries) = fs::read_dir(dir) {
        for entry in entries.flatten() {
            if let Some(parsed) = parse_frame_index(&entry.file_name().to_string_lossy()) {
                if parsed >= frames.len() {
                    return Err(SequenceError::MissingFrames(frames.len()));
                }
            }
        }
    }

    let (want_w, want_h) = (frames[0].width(), frames[0].height());
    for (i, frame) in frames.iter().enumerate() {
        if frame.width() != want_w || frame.height() != want_h {
            return Err(SequenceError::DimensionMismatch {
                index: i,
                want_w,
                want_h,
                got_w: frame.width(),
                got_h: frame.height(),
            });
        }
    }

    let mut coding_types = vec![None; frames.len()];
    let manifest_path = dir.join("manifest.json");
    if manifest_path.is_file() {
        let text = fs::read_to_string(&manifest_path).map_err(|e| SequenceError::BadManifest {
            path: manifest_path.clone(),
            reason: e.to_string(),
        })?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| SequenceError::BadManifest {
                path: manifest_path.clone(),
                reason: e.to_string(),
            })?;
        for entry in manifest.frames {
            if entry.index >= coding_types.len() {
                return Err(SequenceError::BadManifest {
                    path: manifest_path.clone(),
                    reason: format!("tag for frame {} beyond sequence", entry.index),
                });
            }
            coding_types[entry.index] = Some(entry.coding_type);
        }
    }

    Ok(LoadedSequence {
        frames,
        coding_types,
    })
}

fn parse_frame_index(name: &str) -> Option<usize> {
    let rest = name.strip_prefix("frame_")?;
    let (digits, ext) = rest.split_once('.')?;
    if digits.len() != 4 || !matches!(ext, "pgm" | "png") {
        return None;
    }
    digits.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::textured_frame;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("vcmr-io-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn integral_frame(seed: u64) -> Image {
        let img = textured_frame(32, 24, &mut ChaCha8Rng::seed_from_u64(seed));
        let rounded = img.samples().iter().map(|v| v.round()).collect();
        Image::new(32, 24, rounded).unwrap()
    }

    #[test]
    fn pgm_write_read_round_trips_integral_frames() {
        let dir = temp_dir("roundtrip");
        let img = integral_frame(1);
        let path = dir.join("frame_0000.pgm");
        write_pgm(&path, &img).unwrap();
        let back = read_frame(&path).unwrap();
        assert_eq!(back, img);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn sequence_loads_in_index_order() {
        let dir = temp_dir("order");
        for i in 0..10 {
            write_pgm(&dir.join(format!("frame_{i:04}.pgm")), &integral_frame(i as u64)).unwrap();
        }
        let seq = load_external_sequence(&dir).unwrap();
        assert_eq!(seq.frames.len(), 10);
        for (i, frame) in seq.frames.iter().enumerate() {
            assert_eq!(frame, &integral_frame(i as u64));
        }
        assert!(seq.coding_types.iter().all(Option::is_none));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn numbering_gap_is_missing_frames() {
        let dir = temp_dir("gap");
        write_pgm(&dir.join("frame_0000.pgm"), &integral_frame(0)).unwrap();
        write_pgm(&dir.join("frame_0002.pgm"), &integral_frame(2)).unwrap();
        assert!(matches!(
            load_external_sequence(&dir),
            Err(SequenceError::MissingFrames(1))
        ));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn mixed_dimensions_are_rejected() {
        let dir = temp_dir("dims");
        write_pgm(&dir.join("frame_0000.pgm"), &integral_frame(0)).unwrap();
        let other = Image::constant(16, 16, 7.0).unwrap();
        write_pgm(&dir.join("frame_0001.pgm"), &other).unwrap();
        assert!(matches!(
            load_external_sequence(&dir),
            Err(SequenceError::DimensionMismatch { .. })
        ));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn manifest_tags_attach_to_frames() {
        let dir = temp_dir("manifest");
        for i in 0..3 {
            write_pgm(&dir.join(format!("frame_{i:04}.pgm")), &integral_frame(i as u64)).unwrap();
        }
        fs::write(
            dir.join("manifest.json"),
            r#"{"frames": [{"index": 0, "type": "I"}, {"index": 2, "type": "P"}]}"#,
        )
        .unwrap();
        let seq = load_external_sequence(&dir).unwrap();
        assert_eq!(
            seq.coding_types,
            vec![Some(CodingType::I), None, Some(CodingType::P)]
        );
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn empty_directory_reports_no_frames() {
        let dir = temp_dir("empty");
        assert!(matches!(
            load_external_sequence(&dir),
            Err(SequenceError::NoFrames(_))
        ));
        fs::remove_dir_all(&dir).unwrap();
    }
}
