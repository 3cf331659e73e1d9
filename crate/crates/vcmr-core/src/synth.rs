//! Seeded synthetic test frames: smooth gradients plus Gaussian blobs at
//! mixed scales plus low-amplitude noise, so detectors find structure at
//! several pyramid levels and compression has something to destroy.

use rand::Rng;

use crate::image::Image;

/// Deterministic textured frame; every call consumes the same number of RNG
/// draws for a given size, so frame sequences are reproducible per seed.
pub fn textured_frame<R: Rng>(width: usize, height: usize, rng: &mut R) -> Image {
    let mut buf = vec![128.0f32; width * height];

    let gx: f32 = rng.gen_range(-0.25..0.25);
    let gy: f32 = rng.gen_range(-0.25..0.25);
    let cx0 = width as f32 / 2.0;
    let cy0 = height as f32 / 2.0;
    for y in 0..height {
        for x in 0..width {
            buf[y * width + x] += gx * (x as f32 - cx0) + gy * (y as f32 - cy0);
        }
    }

    let max_sigma = (width.min(height) as f32 / 10.0).max(3.0);
    let n_blobs = (width * height / 90).clamp(48, 1024);
    for _ in 0..n_blobs {
        let bx: f32 = rng.gen_range(0.0..width as f32);
        let by: f32 = rng.gen_range(0.0..height as f32);
        // bias towards fine structure, with a tail of large blobs
        let t: f32 = rng.gen_range(0.0f32..1.0);
        let sigma = 1.1 + (max_sigma - 1.1) * t * t;
        let amp: f32 = rng.gen_range(30.0..100.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        stamp_blob(&mut buf, width, height, bx, by, sigma, amp);
    }

    for v in buf.iter_mut() {
        *v += rng.gen_range(-6.0..6.0);
        *v = v.clamp(0.0, 255.0);
    }
    Image::new(width, height, buf).expect("synthesized samples are clamped")
}

fn stamp_blob(buf: &mut [f32], width: usize, height: usize, bx: f32, by: f32, sigma: f32, amp: f32) {
    let reach = (3.0 * sigma).ceil() as i64;
    let x0 = (bx as i64 - reach).max(0);
    let x1 = (bx as i64 + reach).min(width as i64 - 1);
    let y0 = (by as i64 - reach).max(0);
    let y1 = (by as i64 + reach).min(height as i64 - 1);
    let inv = 1.0 / (2.0 * sigma * sigma);
    for y in y0..=y1 {
        let dy = y as f32 - by;
        for x in x0..=x1 {
            let dx = x as f32 - bx;
            buf[y as usize * width + x as usize] += amp * (-(dx * dx + dy * dy) * inv).exp();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn same_seed_same_frame() {
        let a = textured_frame(64, 48, &mut ChaCha8Rng::seed_from_u64(11));
        let b = textured_frame(64, 48, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
    }

    #[test]
    fn frames_are_valid_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..4 {
            let f = textured_frame(48, 32, &mut rng);
            assert!(f.samples().iter().all(|v| (0.0..=255.0).contains(v)));
        }
    }
}
