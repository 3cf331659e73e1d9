//! Gaussian scale space and its difference-of-Gaussians stack.

use crate::image::{blur_in_place, gaussian_kernel, Image};
use crate::sift::SiftParams;

/// Working float plane; values are in `[0, 1]` for Gaussian levels and
/// signed for DoG levels.
pub(crate) struct Grid {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Grid {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    fn blurred(&self, sigma: f32) -> Grid {
        let mut data = self.data.clone();
        if sigma > 0.0 {
            let kernel = gaussian_kernel(sigma);
            blur_in_place(&mut data, self.width, self.height, &kernel);
        }
        Grid {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Halve by 2x2 mean. Block averaging commutes with quarter-turn
    /// rotations on even dimensions, which plain every-second-sample
    /// decimation does not; result pixel `i` sits at source coordinate
    /// `2i + 0.5`.
    fn decimated(&self) -> Grid {
        let width = self.width / 2;
        let height = self.height / 2;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            let top = 2 * y * self.width;
            let bottom = (2 * y + 1) * self.width;
            for x in 0..width {
                let sum = self.data[top + 2 * x]
                    + self.data[top + 2 * x + 1]
                    + self.data[bottom + 2 * x]
                    + self.data[bottom + 2 * x + 1];
                data.push(sum * 0.25);
            }
        }
        Grid {
            width,
            height,
            data,
        }
    }

    /// 2x bilinear upsample with source coordinate `out/2`, so even output
    /// samples copy the source and world coordinates scale by exactly 0.5.
    fn upsampled2x(&self) -> Grid {
        let width = self.width * 2;
        let height = self.height * 2;
        let mut data = vec![0.0f32; width * height];
        for y in 0..height {
            let sy = y / 2;
            let sy1 = (sy + 1).min(self.height - 1);
            let fy = if y % 2 == 0 { 0.0 } else { 0.5 };
            for x in 0..width {
                let sx = x / 2;
                let sx1 = (sx + 1).min(self.width - 1);
                let fx = if x % 2 == 0 { 0.0 } else { 0.5 };
                let top = self.at(sx, sy) * (1.0 - fx) + self.at(sx1, sy) * fx;
                let bottom = self.at(sx, sy1) * (1.0 - fx) + self.at(sx1, sy1) * fx;
                data[y * width + x] = top * (1.0 - fy) + bottom * fy;
            }
        }
        Grid {
            width,
            height,
            data,
        }
    }
}

pub(crate) struct Octave {
    pub gauss: Vec<Grid>,
    pub dog: Vec<Grid>,
}

pub(crate) struct ScaleSpace {
    pub octaves: Vec<Octave>,
    /// World samples per pixel of octave 0 (0.5 when upsampling is on).
    pub base_scale: f32,
}

impl ScaleSpace {
    /// World samples per pixel at an octave.
    pub fn world_scale(&self, octave: usize) -> f32 {
        self.base_scale * (1u32 << octave) as f32
    }

    /// World coordinate of pixel 0 at an octave: each 2x2-mean decimation
    /// shifts the grid by half a parent sample.
    pub fn world_offset(&self, octave: usize) -> f32 {
        self.base_scale * ((1u32 << octave) as f32 - 1.0) * 0.5
    }
}

/// Assumed blur level of the raw input, following the usual convention for
/// camera images.
const INPUT_SIGMA: f32 = 0.5;

pub(crate) fn build_scale_space(image: &Image, params: &SiftParams) -> ScaleSpace {
    let layers = params.layers_per_octave as usize;

    let raw = Grid {
        width: image.width(),
        height: image.height(),
        data: image.samples().iter().map(|&v| v / 255.0).collect(),
    };
    let (seed, seed_sigma, base_scale) = if params.upsample {
        (raw.upsampled2x(), INPUT_SIGMA * 2.0, 0.5)
    } else {
        (raw, INPUT_SIGMA, 1.0)
    };
    // Bring the seed up to base_sigma; variances of successive Gaussians add.
    let delta = (params.base_sigma * params.base_sigma - seed_sigma * seed_sigma)
        .max(0.0)
        .sqrt();
    let base = seed.blurred(delta);

    let min_octave_dim = (2 * params.border + 3) as usize;
    let mut n_octaves = {
        let mut n = 1usize;
        let mut dim = base.width.min(base.height);
        while dim / 2 >= min_octave_dim {
            dim /= 2;
            n += 1;
        }
        n
    };
    if let Some(cap) = params.max_octaves {
        n_octaves = n_octaves.min(cap as usize);
    }

    // Incremental blur taking level i-1 to level i within an octave.
    let k = 2.0f64.powf(1.0 / layers as f64);
    let increments: Vec<f32> = (1..layers + 3)
        .map(|i| {
            let prev = params.base_sigma as f64 * k.powi(i as i32 - 1);
            (prev * (k * k - 1.0).sqrt()) as f32
        })
        .collect();

    let mut octaves = Vec::with_capacity(n_octaves);
    let mut current = base;
    for _ in 0..n_octaves {
        let mut gauss = Vec::with_capacity(layers + 3);
        gauss.push(current);
        for &sigma in &increments {
            let next = gauss.last().unwrap().blurred(sigma);
            gauss.push(next);
        }
        let dog = (0..layers + 2)
            .map(|i| {
                let a = &gauss[i];
                let b = &gauss[i + 1];
                Grid {
                    width: a.width,
                    height: a.height,
                    data: b.data.iter().zip(&a.data).map(|(&hi, &lo)| hi - lo).collect(),
                }
            })
            .collect();
        // The level with twice the octave's starting blur seeds the next one.
        current = gauss[layers].decimated();
        octaves.push(Octave { gauss, dog });
    }

    ScaleSpace {
        octaves,
        base_scale,
    }
}
