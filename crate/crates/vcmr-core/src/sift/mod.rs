//! Deterministic SIFT keypoint detection (no descriptors).
//!
//! The pipeline is the classic one: Gaussian pyramid, difference of
//! Gaussians, 3x3x3 extrema, quadratic sub-sample refinement, contrast and
//! edge rejection, then one keypoint per dominant gradient orientation.
//! Identical input and parameters produce bitwise-identical output.

mod detect;
mod pyramid;

use thiserror::Error;

use crate::image::Image;
use crate::keypoint::KeypointSet;

#[derive(Debug, Error, PartialEq)]
pub enum SiftError {
    #[error("image {width}x{height} smaller than required {required}x{required}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        required: usize,
    },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Detector configuration. Defaults mirror the common OpenCV-style
/// configuration so keypoint statistics stay comparable with externally
/// produced dumps.
#[derive(Debug, Clone, PartialEq)]
pub struct SiftParams {
    /// DoG layers searched per octave.
    pub layers_per_octave: u32,
    /// Blur level assigned to the first pyramid image, in samples.
    pub base_sigma: f32,
    /// DoG magnitude acceptance threshold (on samples normalized to [0,1]).
    pub contrast_threshold: f32,
    /// Principal-curvature ratio bound for edge rejection.
    pub edge_threshold: f32,
    /// Exclusion margin at every octave, in samples.
    pub border: u32,
    /// Octave cap; `None` derives the count from the image size.
    pub max_octaves: Option<u32>,
    /// Insert a doubled-resolution first octave.
    pub upsample: bool,
}

impl Default for SiftParams {
    fn default() -> Self {
        Self {
            layers_per_octave: 3,
            base_sigma: 1.6,
            contrast_threshold: 0.04,
            edge_threshold: 10.0,
            border: 5,
            max_octaves: None,
            upsample: false,
        }
    }
}

impl SiftParams {
    pub fn validate(&self) -> Result<(), SiftError> {
        let fail = |msg: &str| Err(SiftError::InvalidParams(msg.to_string()));
        if self.layers_per_octave < 1 {
            return fail("layers_per_octave must be >= 1");
        }
        if !self.base_sigma.is_finite() || self.base_sigma <= 0.0 {
            return fail("base_sigma must be positive");
        }
        let seed_sigma = if self.upsample { 1.0 } else { 0.5 };
        if self.base_sigma <= seed_sigma {
            return fail("base_sigma must exceed the assumed input blur");
        }
        if !self.contrast_threshold.is_finite() || self.contrast_threshold <= 0.0 {
            return fail("contrast_threshold must be positive");
        }
        if !self.edge_threshold.is_finite() || self.edge_threshold < 1.0 {
            return fail("edge_threshold must be >= 1");
        }
        if self.border < 1 {
            return fail("border must be >= 1");
        }
        if self.max_octaves == Some(0) {
            return fail("max_octaves must be >= 1");
        }
        Ok(())
    }

    /// Smallest accepted input edge for these parameters.
    pub fn min_image_dim(&self) -> usize {
        2 * self.border as usize + 3
    }
}

/// Detect keypoints on a grayscale frame. The result is canonically ordered
/// with exact duplicates removed; `frame_id` is 0 and is assigned by the
/// caller when frames come from a sequence.
pub fn extract_keypoints(image: &Image, params: &SiftParams) -> Result<KeypointSet, SiftError> {
    params.validate()?;
    let required = params.min_image_dim();
    if image.width() < required || image.height() < required {
        return Err(SiftError::ImageTooSmall {
            width: image.width(),
            height: image.height(),
            required,
        });
    }

    let space = pyramid::build_scale_space(image, params);
    let mut keypoints = detect::detect_keypoints(&space, params);
    // Refinement keeps offsets within half a sample of an in-border pixel,
    // so world coordinates stay inside the frame; drop anything else rather
    // than emitting an invariant-breaking record.
    keypoints.retain(|kp| {
        kp.x.is_finite()
            && kp.y.is_finite()
            && kp.size.is_finite()
            && kp.response.is_finite()
            && (0.0..image.width() as f32).contains(&kp.x)
            && (0.0..image.height() as f32).contains(&kp.y)
            && kp.size > 0.0
    });
    Ok(KeypointSet::from_detected(0, keypoints))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::gaussian_blur;
    use crate::synth::textured_frame;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_frame(size: usize, seed: u64) -> Image {
        textured_frame(size, size, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn constant_image_has_no_keypoints() {
        let img = Image::constant(64, 64, 128.0).unwrap();
        let set = extract_keypoints(&img, &SiftParams::default()).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn extraction_is_bitwise_deterministic() {
        let img = test_frame(128, 42);
        let a = extract_keypoints(&img, &SiftParams::default()).unwrap();
        let b = extract_keypoints(&img, &SiftParams::default()).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_invalid_params() {
        let img = test_frame(64, 1);
        for params in [
            SiftParams {
                layers_per_octave: 0,
                ..Default::default()
            },
            SiftParams {
                base_sigma: 0.0,
                ..Default::default()
            },
            SiftParams {
                base_sigma: 0.4,
                ..Default::default()
            },
            SiftParams {
                contrast_threshold: -0.1,
                ..Default::default()
            },
            SiftParams {
                edge_threshold: 0.5,
                ..Default::default()
            },
            SiftParams {
                border: 0,
                ..Default::default()
            },
            SiftParams {
                max_octaves: Some(0),
                ..Default::default()
            },
        ] {
            assert!(matches!(
                extract_keypoints(&img, &params),
                Err(SiftError::InvalidParams(_))
            ));
        }
    }

    #[test]
    fn rejects_too_small_images() {
        let img = Image::constant(16, 16, 0.0).unwrap();
        let params = SiftParams {
            border: 8,
            ..Default::default()
        };
        assert!(matches!(
            extract_keypoints(&img, &params),
            Err(SiftError::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn emitted_keypoints_satisfy_invariants() {
        for seed in [3u64, 17, 99] {
            let img = test_frame(96, seed);
            let set = extract_keypoints(&img, &SiftParams::default()).unwrap();
            assert!(set.is_canonical());
            for kp in &set.keypoints {
                assert!(kp.x >= 0.0 && kp.x < 96.0);
                assert!(kp.y >= 0.0 && kp.y < 96.0);
                assert!(kp.size > 0.0 && kp.size.is_finite());
                assert!((0.0..360.0).contains(&kp.orientation));
                assert!(kp.response >= 0.0 && kp.response.is_finite());
            }
            for pair in set.keypoints.windows(2) {
                assert!(!pair[0].identical(&pair[1]));
            }
        }
    }

    #[test]
    fn canonical_order_is_idempotent() {
        let img = test_frame(96, 7);
        let set = extract_keypoints(&img, &SiftParams::default()).unwrap();
        let resorted = KeypointSet::from_keypoints(set.frame_id, set.keypoints.clone());
        assert_eq!(set, resorted);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn random_images_yield_invariant_keypoints(
            seed in proptest::prelude::any::<u64>(),
            width in 32usize..72,
            height in 32usize..72,
            noisy in proptest::prelude::any::<bool>(),
        ) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = if noisy {
                let samples = (0..width * height)
                    .map(|_| rng.gen_range(0.0..=255.0))
                    .collect();
                Image::new(width, height, samples).unwrap()
            } else {
                textured_frame(width, height, &mut rng)
            };
            let set = extract_keypoints(&img, &SiftParams::default()).unwrap();
            proptest::prop_assert!(set.is_canonical());
            for kp in &set.keypoints {
                proptest::prop_assert!(kp.x >= 0.0 && kp.x < width as f32);
                proptest::prop_assert!(kp.y >= 0.0 && kp.y < height as f32);
                proptest::prop_assert!(kp.size > 0.0 && kp.size.is_finite());
                proptest::prop_assert!((0.0..360.0).contains(&kp.orientation));
                proptest::prop_assert!(kp.response >= 0.0 && kp.response.is_finite());
            }
            for pair in set.keypoints.windows(2) {
                proptest::prop_assert!(!pair[0].identical(&pair[1]));
            }
        }
    }

    #[test]
    fn deep_pyramids_reach_the_smallest_octave() {
        // 104 halves down to a 13-wide top octave, where the largest blur
        // kernel spans more than the row
        let img = test_frame(104, 42);
        let set = extract_keypoints(&img, &SiftParams::default()).unwrap();
        assert!(!set.is_empty());
    }

    #[test]
    fn upsampled_octave_finds_more_keypoints() {
        let img = test_frame(96, 23);
        let normal = extract_keypoints(&img, &SiftParams::default()).unwrap();
        let upsampled = extract_keypoints(
            &img,
            &SiftParams {
                upsample: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(upsampled.len() > normal.len());
    }

    #[test]
    fn keypoint_count_decreases_under_smoothing() {
        // Pre-smooth past the noise floor; below it extra blur can *create*
        // coherent fine-scale structure instead of destroying it.
        let img = gaussian_blur(&test_frame(128, 11), 1.8);
        let params = SiftParams::default();
        let radii: Vec<f32> = (0..11).map(|i| i as f32 * 0.6).collect();
        let counts: Vec<usize> = radii
            .iter()
            .map(|&sigma| {
                let smoothed = if sigma > 0.0 {
                    gaussian_blur(&img, sigma)
                } else {
                    img.clone()
                };
                extract_keypoints(&smoothed, &params).unwrap().len()
            })
            .collect();
        assert!(counts[0] > 20, "fixture should be feature rich: {counts:?}");
        let non_increasing = counts
            .windows(2)
            .filter(|pair| pair[1] <= pair[0])
            .count();
        let pairs = counts.len() - 1;
        assert!(
            non_increasing as f64 >= 0.9 * pairs as f64,
            "counts not monotone enough: {counts:?}"
        );
    }

    /// The oracle for rotation equivariance is the coordinate transform of
    /// the exact 90-degree rotation: `(x, y) -> (H-1-y, x)`, and subtracting
    /// 90 degrees from the rotated detection's orientation recovers the
    /// original (the reported angle is the mirrored reference convention).
    fn assert_rotation_equivariance(img: &Image, turns: u32) {
        let params = SiftParams::default();
        let mut rotated = img.clone();
        for _ in 0..turns {
            rotated = rotated.rotated90_cw();
        }
        let original = extract_keypoints(img, &params).unwrap();
        let transformed = extract_keypoints(&rotated, &params).unwrap();
        assert!(original.len() > 20);

        let mut mapped = 0usize;
        for kp in &original.keypoints {
            let (mut x, mut y) = (kp.x, kp.y);
            let mut side = img.height() as f32; // height of the frame being rotated
            for _ in 0..turns {
                let nx = side - 1.0 - y;
                let ny = x;
                x = nx;
                y = ny;
                side = if side == img.height() as f32 {
                    img.width() as f32
                } else {
                    img.height() as f32
                };
            }
            let expected_orientation =
                detect_wrap(kp.orientation + 90.0 * turns as f32);
            let hit = transformed.keypoints.iter().any(|cand| {
                let dx = cand.x - x;
                let dy = cand.y - y;
                let dist = (dx * dx + dy * dy).sqrt();
                let dori = {
                    let d = (cand.orientation - expected_orientation).abs();
                    d.min(360.0 - d)
                };
                dist <= 0.5 && dori <= 1.0
            });
            if hit {
                mapped += 1;
            }
        }
        assert!(
            mapped as f64 >= 0.9 * original.len() as f64,
            "only {mapped}/{} keypoints mapped after {turns} quarter turns",
            original.len()
        );
    }

    fn detect_wrap(a: f32) -> f32 {
        let mut a = a % 360.0;
        if a < 0.0 {
            a += 360.0;
        }
        if a >= 360.0 {
            a = 0.0;
        }
        a
    }

    #[test]
    fn rotation_equivariance_quarter_turns() {
        let img = test_frame(128, 42);
        assert_rotation_equivariance(&img, 1);
        assert_rotation_equivariance(&img, 2);
        assert_rotation_equivariance(&img, 3);
    }
}
