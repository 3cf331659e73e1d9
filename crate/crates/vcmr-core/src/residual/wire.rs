//! Binary residual stream format, little-endian throughout:
//!
//! ```text
//! "VCMR" | version u8 | tolerance f32 | orientation_tolerance f32 | frame count varint
//! per frame: frame_id varint | n_missed varint | n_corrections varint | n_deletions varint
//!            missed keypoints        5 x f32 each (x, y, size, orientation, response)
//!            corrections             dec_index varint, mask u8, one f32 per set bit
//!            deletions               dec_index varint each
//! ```
//!
//! Varints are unsigned LEB128 and must be minimal so that encoding is a
//! bijection on valid streams. No padding, no entropy coding.

use thiserror::Error;

use crate::correspondence::ParamMask;
use crate::keypoint::Keypoint;
use crate::residual::{Correction, ResidualFrame, ResidualStream, StreamHeader};

pub const MAGIC: [u8; 4] = *b"VCMR";
pub const VERSION: u8 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum StreamError {
    #[error("bad magic, not a residual stream")]
    BadMagic,
    #[error("unsupported stream version {0}")]
    UnsupportedVersion(u8),
    #[error("stream ends mid-record")]
    TruncatedStream,
    #[error("stream invariant violated: {0}")]
    InvariantViolation(&'static str),
    #[error("{0} bytes of trailing data after the stream")]
    TrailingBytes(usize),
}

fn write_varint(out: &mut Vec<u8>, mut value: u64) {
    loop {
        let mut byte = (value & 0x7f) as u8;
        value >>= 7;
        if value != 0 {
            byte |= 0x80;
        }
        out.push(byte);
        if value == 0 {
            break;
        }
    }
}

fn write_keypoint(out: &mut Vec<u8>, kp: &Keypoint) {
    for v in [kp.x, kp.y, kp.size, kp.orientation, kp.response] {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn write_frame(out: &mut Vec<u8>, frame: &ResidualFrame) {
    write_varint(out, frame.frame_id);
    write_varint(out, frame.missed.len() as u64);
    write_varint(out, frame.corrections.len() as u64);
    write_varint(out, frame.deletions.len() as u64);
    for kp in &frame.missed {
        write_keypoint(out, kp);
    }
    for c in &frame.corrections {
        write_varint(out, c.dec_index as u64);
        out.push(c.mask.bits());
        for v in &c.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for &d in &frame.deletions {
        write_varint(out, d as u64);
    }
}

pub fn serialize(stream: &ResidualStream) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.push(stream.header.version);
    out.extend_from_slice(&stream.header.tolerance.to_le_bytes());
    out.extend_from_slice(&stream.header.orientation_tolerance.to_le_bytes());
    write_varint(&mut out, stream.frames.len() as u64);
    for frame in &stream.frames {
        write_frame(&mut out, frame);
    }
    out
}

/// Wire size of one frame record, exactly as `serialize` would emit it.
pub fn frame_wire_size(frame: &ResidualFrame) -> usize {
    let mut scratch = Vec::new();
    write_frame(&mut scratch, frame);
    scratch.len()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StreamError> {
        if self.pos + n > self.bytes.len() {
            return Err(StreamError::TruncatedStream);
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, StreamError> {
        Ok(self.take(1)?[0])
    }

    fn f32(&mut self) -> Result<f32, StreamError> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn varint(&mut self) -> Result<u64, StreamError> {
        let mut value = 0u64;
        let mut shift = 0u32;
        loop {
            let byte = self.u8()?;
            if shift == 63 && byte > 1 {
                return Err(StreamError::InvariantViolation("varint overflows u64"));
            }
            value |= ((byte & 0x7f) as u64) << shift;
            if byte & 0x80 == 0 {
                if byte == 0 && shift > 0 {
                    return Err(StreamError::InvariantViolation("non-minimal varint"));
                }
                return Ok(value);
            }
            shift += 7;
            if shift > 63 {
                return Err(StreamError::InvariantViolation("varint overflows u64"));
            }
        }
    }

    fn finite_f32(&mut self, what: &'static str) -> Result<f32, StreamError> {
        let v = self.f32()?;
        if !v.is_finite() {
            return Err(StreamError::InvariantViolation(what));
        }
        Ok(v)
    }

    fn keypoint(&mut self) -> Result<Keypoint, StreamError> {
        let x = self.finite_f32("non-finite keypoint field")?;
        let y = self.finite_f32("non-finite keypoint field")?;
        let size = self.finite_f32("non-finite keypoint field")?;
        let orientation = self.finite_f32("non-finite keypoint field")?;
        let response = self.finite_f32("non-finite keypoint field")?;
        if x < 0.0 || y < 0.0 {
            return Err(StreamError::InvariantViolation("negative keypoint position"));
        }
        if size <= 0.0 {
            return Err(StreamError::InvariantViolation("non-positive keypoint size"));
        }
        if !(0.0..360.0).contains(&orientation) {
            return Err(StreamError::InvariantViolation(
                "orientation outside [0, 360)",
            ));
        }
        if response < 0.0 {
            return Err(StreamError::InvariantViolation("negative keypoint response"));
        }
        Ok(Keypoint {
            x,
            y,
            size,
            orientation,
            response,
        })
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<ResidualStream, StreamError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(StreamError::BadMagic);
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(StreamError::UnsupportedVersion(version));
    }
    let tolerance = r.f32()?;
    let orientation_tolerance = r.f32()?;
    if !tolerance.is_finite() || tolerance < 0.0 {
        return Err(StreamError::InvariantViolation("bad header tolerance"));
    }
    if !orientation_tolerance.is_finite() || orientation_tolerance < 0.0 {
        return Err(StreamError::InvariantViolation(
            "bad header orientation tolerance",
        ));
    }

    let frame_count = r.varint()?;
    let mut frames = Vec::new();
    let mut previous_frame_id: Option<u64> = None;
    for _ in 0..frame_count {
        let frame_id = r.varint()?;
        if previous_frame_id.is_some_and(|p| p >= frame_id) {
            return Err(StreamError::InvariantViolation(
                "frame ids not strictly increasing",
            ));
        }
        previous_frame_id = Some(frame_id);

        let n_missed = r.varint()?;
        let n_corrections = r.varint()?;
        let n_deletions = r.varint()?;

        let mut missed = Vec::new();
        for _ in 0..n_missed {
            missed.push(r.keypoint()?);
        }

        let mut corrections: Vec<Correction> = Vec::new();
        let mut prev_index: Option<u32> = None;
        for _ in 0..n_corrections {
            let raw_index = r.varint()?;
            let dec_index = u32::try_from(raw_index)
                .map_err(|_| StreamError::InvariantViolation("correction index too large"))?;
            if prev_index.is_some_and(|p| p >= dec_index) {
                return Err(StreamError::InvariantViolation(
                    "correction indices not strictly increasing",
                ));
            }
            prev_index = Some(dec_index);
            let mask_bits = r.u8()?;
            let mask = ParamMask::from_bits(mask_bits)
                .ok_or(StreamError::InvariantViolation("mask uses reserved bits"))?;
            if mask.is_empty() {
                return Err(StreamError::InvariantViolation("zero correction mask"));
            }
            let mut values = Vec::with_capacity(mask.count() as usize);
            for _ in 0..mask.count() {
                values.push(r.finite_f32("non-finite correction value")?);
            }
            corrections.push(Correction {
                dec_index,
                mask,
                values,
            });
        }

        let mut deletions: Vec<u32> = Vec::new();
        let mut prev_deletion: Option<u32> = None;
        for _ in 0..n_deletions {
            let raw_index = r.varint()?;
            let index = u32::try_from(raw_index)
                .map_err(|_| StreamError::InvariantViolation("deletion index too large"))?;
            if prev_deletion.is_some_and(|p| p >= index) {
                return Err(StreamError::InvariantViolation(
                    "deletion indices not strictly increasing",
                ));
            }
            prev_deletion = Some(index);
            if corrections.binary_search_by_key(&index, |c| c.dec_index).is_ok() {
                return Err(StreamError::InvariantViolation(
                    "index appears in both corrections and deletions",
                ));
            }
            deletions.push(index);
        }

        frames.push(ResidualFrame {
            frame_id,
            missed,
            corrections,
            deletions,
        });
    }

    if r.pos != bytes.len() {
        return Err(StreamError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(ResidualStream {
        header: StreamHeader {
            version,
            tolerance,
            orientation_tolerance,
        },
        frames,
    })
}
