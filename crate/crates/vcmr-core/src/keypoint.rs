//! Keypoint records and the canonical per-frame ordering that lets encoder
//! and decoder agree on indices without transmitting identities.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// One detected feature: sub-sample position, size (diameter in samples),
/// dominant orientation in degrees `[0, 360)` and contrast response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    pub size: f32,
    #[serde(rename = "angle")]
    pub orientation: f32,
    pub response: f32,
}

impl Keypoint {
    /// All five parameters bitwise equal.
    pub fn identical(&self, other: &Keypoint) -> bool {
        self.x == other.x
            && self.y == other.y
            && self.size == other.size
            && self.orientation == other.orientation
            && self.response == other.response
    }

    /// Canonical sort: rounded grid position first, then the remaining
    /// parameters, then the exact fractional position. The final two keys
    /// make the order independent of detection order for any two distinct
    /// keypoints, which the decoder relies on when it re-canonicalizes a
    /// merged set.
    pub fn canonical_cmp(&self, other: &Keypoint) -> Ordering {
        (self.y.round() as i64)
            .cmp(&(other.y.round() as i64))
            .then((self.x.round() as i64).cmp(&(other.x.round() as i64)))
            .then(self.size.total_cmp(&other.size))
            .then(self.orientation.total_cmp(&other.orientation))
            .then(self.response.total_cmp(&other.response))
            .then(self.x.total_cmp(&other.x))
            .then(self.y.total_cmp(&other.y))
    }
}

/// Canonically ordered keypoints of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    #[serde(rename = "frame")]
    pub frame_id: u64,
    pub keypoints: Vec<Keypoint>,
}

impl KeypointSet {
    pub fn empty(frame_id: u64) -> Self {
        Self {
            frame_id,
            keypoints: Vec::new(),
        }
    }

    /// Canonicalize an arbitrary keypoint list. Exact duplicates are kept;
    /// detectors deduplicate before constructing a set.
    pub fn from_keypoints(frame_id: u64, mut keypoints: Vec<Keypoint>) -> Self {
        keypoints.sort_by(Keypoint::canonical_cmp);
        Self {
            frame_id,
            keypoints,
        }
    }

    /// Canonicalize and drop keypoints identical in all five fields, as a
    /// detector emitting one record per orientation peak can duplicate a
    /// candidate found from tied neighbouring extrema.
    pub fn from_detected(frame_id: u64, mut keypoints: Vec<Keypoint>) -> Self {
        keypoints.sort_by(Keypoint::canonical_cmp);
        keypoints.dedup_by(|a, b| a.identical(b));
        Self {
            frame_id,
            keypoints,
        }
    }

    /// Same keypoints under a different frame index.
    pub fn with_frame_id(mut self, frame_id: u64) -> Self {
        self.frame_id = frame_id;
        self
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn is_canonical(&self) -> bool {
        self.keypoints
            .windows(2)
            .all(|w| w[0].canonical_cmp(&w[1]) != Ordering::Greater)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kp(x: f32, y: f32, size: f32, orientation: f32, response: f32) -> Keypoint {
        Keypoint {
            x,
            y,
            size,
            orientation,
            response,
        }
    }

    #[test]
    fn canonical_order_sorts_by_rounded_position_first() {
        let set = KeypointSet::from_keypoints(
            0,
            vec![
                kp(10.0, 5.0, 2.0, 0.0, 0.5),
                kp(3.0, 1.0, 2.0, 0.0, 0.5),
                kp(2.0, 5.0, 2.0, 0.0, 0.5),
            ],
        );
        let xs: Vec<f32> = set.keypoints.iter().map(|k| k.x).collect();
        assert_eq!(xs, vec![3.0, 2.0, 10.0]);
    }

    #[test]
    fn canonical_order_is_idempotent() {
        let set = KeypointSet::from_keypoints(
            0,
            vec![
                kp(10.2, 5.0, 2.0, 10.0, 0.5),
                kp(10.4, 5.0, 2.0, 10.0, 0.5),
                kp(10.4, 5.0, 1.0, 10.0, 0.5),
            ],
        );
        let again = KeypointSet::from_keypoints(0, set.keypoints.clone());
        assert_eq!(set, again);
        assert!(set.is_canonical());
    }

    #[test]
    fn order_does_not_depend_on_insertion_order() {
        let a = kp(10.2, 5.0, 2.0, 10.0, 0.5);
        let b = kp(10.4, 5.0, 2.0, 10.0, 0.5); // same rounded position and params
        let s1 = KeypointSet::from_keypoints(0, vec![a, b]);
        let s2 = KeypointSet::from_keypoints(0, vec![b, a]);
        assert_eq!(s1, s2);
    }

    #[test]
    fn detected_set_drops_exact_duplicates() {
        let a = kp(7.0, 7.0, 3.0, 45.0, 0.25);
        let set = KeypointSet::from_detected(0, vec![a, a, kp(1.0, 1.0, 2.0, 0.0, 0.1)]);
        assert_eq!(set.len(), 2);
    }

    #[test]
    fn json_projection_uses_extractor_field_names() {
        let set = KeypointSet::from_keypoints(3, vec![kp(1.5, 2.5, 4.0, 90.0, 0.125)]);
        let json = serde_json::to_string(&set).unwrap();
        assert_eq!(
            json,
            "{\"frame\":3,\"keypoints\":[{\"x\":1.5,\"y\":2.5,\"size\":4.0,\"angle\":90.0,\"response\":0.125}]}"
        );
        let back: KeypointSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, set);
    }
}
