//! Grayscale frame storage and the handful of pixel-level operations the
//! pipeline needs (PSNR, Gaussian smoothing, exact 90° rotation).

use thiserror::Error;

/// Smallest accepted frame edge, in samples.
pub const MIN_DIMENSION: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("image dimensions {width}x{height} below minimum {MIN_DIMENSION}")]
    BadDimensions { width: usize, height: usize },
    #[error("sample buffer holds {got} values, expected {expected}")]
    SampleCount { expected: usize, got: usize },
    #[error("sample {index} = {value} outside [0, 255] or not finite")]
    SampleRange { index: usize, value: f32 },
    #[error("images are {0}x{1} and {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// A single grayscale frame. Samples are luma values in `[0, 255]` stored
/// row-major as `f32`; fractional values are allowed so that filtered or
/// surrogate-decoded frames round-trip without premature quantization.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    samples: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, samples: Vec<f32>) -> Result<Self, ImageError> {
        if width < MIN_DIMENSION || height < MIN_DIMENSION {
            return Err(ImageError::BadDimensions { width, height });
        }
        if samples.len() != width * height {
            return Err(ImageError::SampleCount {
                expected: width * height,
                got: samples.len(),
            });
        }
        for (index, &value) in samples.iter().enumerate() {
            if !value.is_finite() || !(0.0..=255.0).contains(&value) {
                return Err(ImageError::SampleRange { index, value });
            }
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    /// Frame filled with a single value.
    pub fn constant(width: usize, height: usize, value: f32) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Construct without validation; callers guarantee clamped samples and
    /// dimensions taken from an existing valid frame.
    pub(crate) fn new_unchecked(width: usize, height: usize, samples: Vec<f32>) -> Self {
        debug_assert_eq!(samples.len(), width * height);
        Self {
            width,
            height,
            samples,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.samples[y * self.width + x]
    }

    /// Exact 90° clockwise rotation: output pixel `(H-1-y, x)` takes the
    /// value of input pixel `(x, y)`.
    pub fn rotated90_cw(&self) -> Image {
        let (w, h) = (self.width, self.height);
        let mut out = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let xr = h - 1 - y;
                let yr = x;
                out[yr * h + xr] = self.samples[y * w + x];
            }
        }
        Image {
            width: h,
            height: w,
            samples: out,
        }
    }
}

/// Peak-255 PSNR in dB; `f64::INFINITY` for identical frames.
pub fn image_psnr(a: &Image, b: &Image) -> Result<f64, ImageError> {
    if a.width != b.width || a.height != b.height {
        return Err(ImageError::DimensionMismatch(
            a.width, a.height, b.width, b.height,
        ));
    }
    let mut sq = 0.0f64;
    for (&pa, &pb) in a.samples.iter().zip(&b.samples) {
        let d = pa as f64 - pb as f64;
        sq += d * d;
    }
    let mse = sq / (a.width * a.height) as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0f64 * 255.0 / mse).log10())
}

/// Separable Gaussian smoothing with reflect-101 borders. `sigma <= 0`
/// returns the input unchanged.
pub fn gaussian_blur(image: &Image, sigma: f32) -> Image {
    if sigma <= 0.0 {
        return image.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let mut out = image.clone();
    blur_in_place(&mut out.samples, image.width, image.height, &kernel);
    out
}

pub(crate) fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (4.0 * sigma).ceil().max(1.0) as usize;
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    let denom = 2.0 * (sigma as f64) * (sigma as f64);
    let mut sum = 0.0f64;
    for i in -(radius as i64)..=(radius as i64) {
        let w = (-(i * i) as f64 / denom).exp();
        sum += w;
        kernel.push(w);
    }
    kernel.into_iter().map(|w| (w / sum) as f32).collect()
}

/// Reflect-101 index: `-1 -> 1`, `n -> n - 2`. Periodic with period
/// `2(n - 1)`, so kernels wider than the row still resolve.
#[inline]
fn mirror(i: i64, n: i64) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

pub(crate) fn blur_in_place(samples: &mut [f32], width: usize, height: usize, kernel: &[f32]) {
    let radius = (kernel.len() / 2) as i64;
    let mut tmp = vec![0.0f32; samples.len()];

    // Horizontal pass.
    for y in 0..height {
        let row = &samples[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0f32;
            for (k, &w) in kernel.iter().enumerate() {
                let xi = mirror(x as i64 + k as i64 - radius, width as i64);
                acc += w * row[xi];
            }
            tmp[y * width + x] = acc;
        }
    }
    // Vertical pass.
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0f32;
            for (k, &w) in kernel.iter().enumerate() {
                let yi = mirror(y as i64 + k as i64 - radius, height as i64);
                acc += w * tmp[yi * width + x];
            }
            samples[y * width + x] = acc;
        }
    }
}
