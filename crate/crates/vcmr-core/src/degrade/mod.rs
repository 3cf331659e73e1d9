//! Compression surrogate: per-block 2-D DCT with uniform quantization under
//! the HEVC step law, standing in for a reference codec at desk scale.
//! Externally decoded frame sequences are ingested through [`io`].

pub mod io;

use thiserror::Error;

use crate::image::Image;

#[derive(Debug, Error, PartialEq)]
pub enum DegradeError {
    #[error("invalid degrade parameters: {0}")]
    InvalidParams(String),
}

/// Quality knob for the surrogate. `qp` follows the HEVC range and step
/// law; `block` is the transform size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegradeParams {
    pub qp: u8,
    pub block: usize,
}

impl DegradeParams {
    pub fn new(qp: u8) -> Self {
        Self { qp, block: 8 }
    }

    pub fn validate(&self) -> Result<(), DegradeError> {
        if self.qp > 51 {
            return Err(DegradeError::InvalidParams(format!(
                "qp {} outside [0, 51]",
                self.qp
            )));
        }
        if ![4, 8, 16].contains(&self.block) {
            return Err(DegradeError::InvalidParams(format!(
                "block {} not one of 4, 8, 16",
                self.block
            )));
        }
        Ok(())
    }
}

/// Quantization step `2^((qp - 4) / 6)`: doubles every six QP, unity at 4.
pub fn quant_step(qp: u8) -> f64 {
    2f64.powf((qp as f64 - 4.0) / 6.0)
}

/// Orthonormal DCT-II basis, `basis[k][n]`.
fn dct_basis(n: usize) -> Vec<Vec<f64>> {
    let mut basis = vec![vec![0.0f64; n]; n];
    let norm0 = (1.0 / n as f64).sqrt();
    let norm = (2.0 / n as f64).sqrt();
    for (k, row) in basis.iter_mut().enumerate() {
        let scale = if k == 0 { norm0 } else { norm };
        for (i, v) in row.iter_mut().enumerate() {
            *v = scale
                * (std::f64::consts::PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * n as f64))
                    .cos();
        }
    }
    basis
}

/// Degrade a frame as a decoder output surrogate. Edge blocks are padded by
/// replication and cropped after the inverse transform. AC coefficients are
/// quantized with the QP step; the DC path keeps integer sample precision so
/// flat content survives every QP, as it would under a predictive codec.
pub fn degrade_frame(image: &Image, params: &DegradeParams) -> Result<Image, DegradeError> {
    params.validate()?;
    let n = params.block;
    let step = quant_step(params.qp);
    let basis = dct_basis(n);

    let width = image.width();
    let height = image.height();
    let mut out = vec![0.0f32; width * height];

    let mut block = vec![0.0f64; n * n];
    let mut tmp = vec![0.0f64; n * n];
    let mut coef = vec![0.0f64; n * n];

    for by in (0..height).step_by(n) {
        for bx in (0..width).step_by(n) {
            // gather with replication padding
            for j in 0..n {
                let sy = (by + j).min(height - 1);
                for i in 0..n {
                    let sx = (bx + i).min(width - 1);
                    block[j * n + i] = image.get(sx, sy) as f64;
                }
            }

            // forward: coef = C * block * C^T
            for k in 0..n {
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += basis[k][j] * block[j * n + i];
                    }
                    tmp[k * n + i] = acc;
                }
            }
            for k in 0..n {
                for l in 0..n {
                    let mut acc = 0.0;
                    for i in 0..n {
                        acc += tmp[k * n + i] * basis[l][i];
                    }
                    coef[k * n + l] = acc;
                }
            }

            // quantize: DC to integer mean precision, AC with the QP step
            let dc_scale = n as f64; // orthonormal DC = block mean * n
            coef[0] = (coef[0] / dc_scale).round() * dc_scale;
            for (idx, c) in coef.iter_mut().enumerate() {
                if idx != 0 {
                    *c = (*c / step).round() * step;
                }
            }

            // inverse: block = C^T * coef * C
            for j in 0..n {
                for l in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += basis[k][j] * coef[k * n + l];
                    }
                    tmp[j * n + l] = acc;
                }
            }
            for j in 0..n {
                for i in 0..n {
                    let mut acc = 0.0;
                    for l in 0..n {
                        acc += tmp[j * n + l] * basis[l][i];
                    }
                    block[j * n + i] = acc;
                }
            }

            // scatter, cropping the padding
            for j in 0..n {
                let sy = by + j;
                if sy >= height {
                    break;
                }
                for i in 0..n {
                    let sx = bx + i;
                    if sx >= width {
                        break;
                    }
                    out[sy * width + sx] = (block[j * n + i] as f32).clamp(0.0, 255.0);
                }
            }
        }
    }

    Ok(Image::new_unchecked(width, height, out))
}
