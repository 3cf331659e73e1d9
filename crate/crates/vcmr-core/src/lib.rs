//! Residual coding of SIFT keypoints for joint video/feature transmission.
//!
//! The crate covers the full feature side-channel pipeline:
//!
//! * [`sift`] — deterministic SIFT keypoint detection (no descriptors),
//! * [`correspondence`] — one-to-one matching of original vs. decoded-frame
//!   keypoints and the same/moved/missed/new classification,
//! * [`residual`] — the side-information codec: a decoder that re-extracts
//!   keypoints from decoded video only needs the residual stream to restore
//!   the original feature set,
//! * [`degrade`] — a block-DCT compression surrogate plus ingestion of
//!   externally decoded frame sequences,
//! * [`analysis`] — per-run aggregation, CSV/JSON reporting and the linear
//!   fit of the side-information ratio against QP.

pub mod analysis;
pub mod correspondence;
pub mod degrade;
pub mod image;
pub mod keypoint;
pub mod residual;
pub mod sift;
pub mod synth;

pub use crate::image::{gaussian_blur, image_psnr, Image, ImageError};
pub use crate::keypoint::{Keypoint, KeypointSet};
pub use crate::sift::{extract_keypoints, SiftError, SiftParams};
