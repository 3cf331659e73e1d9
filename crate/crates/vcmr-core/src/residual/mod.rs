//! The side-information codec: everything a decoder needs to restore the
//! original keypoint set from keypoints it re-extracts out of decoded video.
//!
//! A residual frame carries three things: keypoints the decoded video lost
//! entirely, per-parameter corrections for keypoints that survived with
//! out-of-tolerance values, and deletion indices for spurious detections.
//! Indices refer to the canonical ordering of the decoder-side set, which
//! both ends reproduce deterministically, so identities are never sent.

pub mod wire;

use serde::Serialize;
use thiserror::Error;

use crate::correspondence::{exact_param_mask, match_sets, MatchConfig, ParamMask};
use crate::keypoint::{Keypoint, KeypointSet};

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("frame id mismatch: original {orig}, decoded {dec}")]
    FrameIdMismatch { orig: u64, dec: u64 },
    #[error("residual references decoded keypoint {index} but the set has {len}")]
    IndexOutOfRange { index: u32, len: usize },
    #[error("side-information ratio is undefined for an empty original set")]
    EmptyOriginalSet,
    #[error("malformed residual frame: {0}")]
    MalformedResidual(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ToleranceMode {
    /// Correct every parameter that differs at all; exact reconstruction.
    Lossless,
    /// Correct parameters outside the configured tolerance bands.
    #[default]
    Tolerant,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CodecConfig {
    pub mode: ToleranceMode,
    pub match_config: MatchConfig,
}

impl CodecConfig {
    pub fn lossless() -> Self {
        Self {
            mode: ToleranceMode::Lossless,
            match_config: MatchConfig {
                tolerance: 0.0,
                orientation_tolerance: 0.0,
                ..MatchConfig::default()
            },
        }
    }

    pub fn tolerant(match_config: MatchConfig) -> Self {
        Self {
            mode: ToleranceMode::Tolerant,
            match_config,
        }
    }

    /// Tolerances as recorded in a stream header; lossless always writes
    /// zeros, regardless of the matching tolerances it was built from.
    pub fn effective_tolerances(&self) -> (f32, f32) {
        match self.mode {
            ToleranceMode::Lossless => (0.0, 0.0),
            ToleranceMode::Tolerant => (
                self.match_config.tolerance as f32,
                self.match_config.orientation_tolerance as f32,
            ),
        }
    }
}

/// Replacement values for one surviving decoded keypoint. `values` holds the
/// exact original value of every set mask bit, in field order
/// (x, y, size, orientation, response).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correction {
    pub dec_index: u32,
    pub mask: ParamMask,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualFrame {
    pub frame_id: u64,
    /// Keypoints absent from the decoded frame, with all five parameters.
    pub missed: Vec<Keypoint>,
    /// Parameter overrides for matched decoded keypoints, strictly
    /// increasing by decoded index.
    pub corrections: Vec<Correction>,
    /// Spurious decoded keypoints to drop, strictly increasing.
    pub deletions: Vec<u32>,
}

impl ResidualFrame {
    pub fn empty(frame_id: u64) -> Self {
        Self {
            frame_id,
            missed: Vec::new(),
            corrections: Vec::new(),
            deletions: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.missed.is_empty() && self.corrections.is_empty() && self.deletions.is_empty()
    }

    /// Original parameters carried by this frame: five per missed keypoint
    /// plus one per correction mask bit. Deletions carry none.
    pub fn transmitted_params(&self) -> u64 {
        5 * self.missed.len() as u64
            + self
                .corrections
                .iter()
                .map(|c| c.mask.count() as u64)
                .sum::<u64>()
    }

    fn validate(&self, dec_len: usize) -> Result<(), CodecError> {
        let mut prev: Option<u32> = None;
        for c in &self.corrections {
            if c.dec_index as usize >= dec_len {
                return Err(CodecError::IndexOutOfRange {
                    index: c.dec_index,
                    len: dec_len,
                });
            }
            if prev.is_some_and(|p| p >= c.dec_index) {
                return Err(CodecError::MalformedResidual(
                    "correction indices not strictly increasing",
                ));
            }
            prev = Some(c.dec_index);
            if c.mask.is_empty() {
                return Err(CodecError::MalformedResidual("empty correction mask"));
            }
            if c.values.len() != c.mask.count() as usize {
                return Err(CodecError::MalformedResidual(
                    "correction value count does not match mask",
                ));
            }
        }
        let mut prev: Option<u32> = None;
        for &d in &self.deletions {
            if d as usize >= dec_len {
                return Err(CodecError::IndexOutOfRange {
                    index: d,
                    len: dec_len,
                });
            }
            if prev.is_some_and(|p| p >= d) {
                return Err(CodecError::MalformedResidual(
                    "deletion indices not strictly increasing",
                ));
            }
            prev = Some(d);
            if self.corrections.iter().any(|c| c.dec_index == d) {
                return Err(CodecError::MalformedResidual(
                    "index appears in both corrections and deletions",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamHeader {
    pub version: u8,
    pub tolerance: f32,
    pub orientation_tolerance: f32,
}

/// An ordered sequence of residual frames plus the tolerance parameters
/// they were produced with.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualStream {
    pub header: StreamHeader,
    pub frames: Vec<ResidualFrame>,
}

impl ResidualStream {
    pub fn new(cfg: &CodecConfig, frames: Vec<ResidualFrame>) -> Self {
        let (tolerance, orientation_tolerance) = cfg.effective_tolerances();
        Self {
            header: StreamHeader {
                version: wire::VERSION,
                tolerance,
                orientation_tolerance,
            },
            frames,
        }
    }
}

fn masked_values(kp: &Keypoint, mask: ParamMask) -> Vec<f32> {
    let mut values = Vec::with_capacity(mask.count() as usize);
    for (bit, value) in [
        (ParamMask::X, kp.x),
        (ParamMask::Y, kp.y),
        (ParamMask::SIZE, kp.size),
        (ParamMask::ORIENTATION, kp.orientation),
        (ParamMask::RESPONSE, kp.response),
    ] {
        if mask.contains(bit) {
            values.push(value);
        }
    }
    values
}

fn apply_correction(kp: &mut Keypoint, mask: ParamMask, values: &[f32]) {
    let mut it = values.iter();
    if mask.contains(ParamMask::X) {
        kp.x = *it.next().unwrap();
    }
    if mask.contains(ParamMask::Y) {
        kp.y = *it.next().unwrap();
    }
    if mask.contains(ParamMask::SIZE) {
        kp.size = *it.next().unwrap();
    }
    if mask.contains(ParamMask::ORIENTATION) {
        kp.orientation = *it.next().unwrap();
    }
    if mask.contains(ParamMask::RESPONSE) {
        kp.response = *it.next().unwrap();
    }
}

/// Diff two canonical sets of the same frame into the side information that
/// reconstructs `orig` from `dec`.
pub fn encode_residual(
    orig: &KeypointSet,
    dec: &KeypointSet,
    cfg: &CodecConfig,
) -> Result<ResidualFrame, CodecError> {
    if orig.frame_id != dec.frame_id {
        return Err(CodecError::FrameIdMismatch {
            orig: orig.frame_id,
            dec: dec.frame_id,
        });
    }
    let report = match_sets(orig, dec, &cfg.match_config);

    let mut corrections = Vec::new();
    for pair in &report.pairs {
        let okp = &orig.keypoints[pair.orig_index];
        let dkp = &dec.keypoints[pair.dec_index];
        let mask = match cfg.mode {
            ToleranceMode::Lossless => exact_param_mask(okp, dkp),
            ToleranceMode::Tolerant => pair.param_mask,
        };
        if !mask.is_empty() {
            corrections.push(Correction {
                dec_index: pair.dec_index as u32,
                mask,
                values: masked_values(okp, mask),
            });
        }
    }
    corrections.sort_by_key(|c| c.dec_index);

    Ok(ResidualFrame {
        frame_id: orig.frame_id,
        missed: report.missed.iter().map(|&i| orig.keypoints[i]).collect(),
        corrections,
        deletions: report.new.iter().map(|&j| j as u32).collect(),
    })
}

/// Reconstruct the original-frame keypoint set: drop deletions, overwrite
/// corrected parameters, append missed keypoints, re-canonicalize.
pub fn decode_merge(dec: &KeypointSet, residual: &ResidualFrame) -> Result<KeypointSet, CodecError> {
    residual.validate(dec.len())?;

    let mut deleted = vec![false; dec.len()];
    for &d in &residual.deletions {
        deleted[d as usize] = true;
    }
    let mut merged: Vec<Keypoint> = Vec::with_capacity(
        dec.len() + residual.missed.len() - residual.deletions.len(),
    );
    let mut corrections = residual.corrections.iter().peekable();
    for (j, kp) in dec.keypoints.iter().enumerate() {
        let mut kp = *kp;
        if let Some(c) = corrections.peek() {
            if c.dec_index as usize == j {
                apply_correction(&mut kp, c.mask, &c.values);
                corrections.next();
            }
        }
        if !deleted[j] {
            merged.push(kp);
        }
    }
    merged.extend_from_slice(&residual.missed);
    Ok(KeypointSet::from_keypoints(residual.frame_id, merged))
}

/// Percentage of the original parameters that have to be transmitted as
/// side information. Deletions are excluded: they are not original
/// parameters, though they do occupy stream bytes.
pub fn side_info_ratio(residual: &ResidualFrame, orig: &KeypointSet) -> Result<f64, CodecError> {
    if orig.is_empty() {
        return Err(CodecError::EmptyOriginalSet);
    }
    Ok(100.0 * residual.transmitted_params() as f64 / (5.0 * orig.len() as f64))
}
