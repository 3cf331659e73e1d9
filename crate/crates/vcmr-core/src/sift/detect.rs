//! Scale-space extremum detection, sub-sample refinement and orientation
//! assignment.

use crate::keypoint::Keypoint;
use crate::sift::pyramid::{Grid, Octave, ScaleSpace};
use crate::sift::SiftParams;

const MAX_INTERPOLATION_STEPS: usize = 5;
const ORIENTATION_BINS: usize = 36;
const ORIENTATION_SIGMA_FACTOR: f32 = 1.5;
const ORIENTATION_RADIUS_FACTOR: f32 = 3.0 * ORIENTATION_SIGMA_FACTOR;
const ORIENTATION_PEAK_RATIO: f32 = 0.8;

pub(crate) fn detect_keypoints(space: &ScaleSpace, params: &SiftParams) -> Vec<Keypoint> {
    let layers = params.layers_per_octave as usize;
    let border = params.border as usize;
    // Sub-threshold extrema are skipped before refinement.
    let prefilter = 0.5 * params.contrast_threshold / layers as f32;

    let mut out = Vec::new();
    for (octave_index, octave) in space.octaves.iter().enumerate() {
        let world = WorldMap {
            scale: space.world_scale(octave_index),
            offset: space.world_offset(octave_index),
        };
        let width = octave.dog[0].width;
        let height = octave.dog[0].height;
        if width < 2 * border + 3 || height < 2 * border + 3 {
            continue;
        }
        for s in 1..=layers {
            for y in border..height - border {
                for x in border..width - border {
                    if !is_local_extremum(&octave.dog, s, x, y, prefilter) {
                        continue;
                    }
                    let Some(refined) = refine(&octave.dog, layers, border, s, x, y) else {
                        continue;
                    };
                    if refined.contrast.abs() * (layers as f32) < params.contrast_threshold {
                        continue;
                    }
                    if on_edge(
                        &octave.dog[refined.s],
                        refined.x,
                        refined.y,
                        params.edge_threshold,
                    ) {
                        continue;
                    }
                    emit_oriented(octave, params, world, &refined, &mut out);
                }
            }
        }
    }
    out
}

struct Refined {
    s: usize,
    x: usize,
    y: usize,
    ds: f32,
    dx: f32,
    dy: f32,
    contrast: f32,
}

/// Octave-to-image coordinate mapping.
#[derive(Clone, Copy)]
struct WorldMap {
    scale: f32,
    offset: f32,
}

impl WorldMap {
    #[inline]
    fn apply(&self, octave_coord: f32) -> f32 {
        octave_coord * self.scale + self.offset
    }
}

/// 26-neighbour extremum test with ties allowed; the centre compares equal
/// to itself, so no special case is needed for it.
fn is_local_extremum(dog: &[Grid], s: usize, x: usize, y: usize, prefilter: f32) -> bool {
    let v = dog[s].at(x, y);
    if v.abs() <= prefilter {
        return false;
    }
    let planes = [&dog[s - 1], &dog[s], &dog[s + 1]];
    if v > 0.0 {
        for plane in planes {
            for ny in y - 1..=y + 1 {
                for nx in x - 1..=x + 1 {
                    if v < plane.at(nx, ny) {
                        return false;
                    }
                }
            }
        }
    } else {
        for plane in planes {
            for ny in y - 1..=y + 1 {
                for nx in x - 1..=x + 1 {
                    if v > plane.at(nx, ny) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Quadratic fit of the DoG around a discrete extremum. Moves to the
/// neighbouring sample when the fitted offset leaves the half-sample cube
/// and gives up after a bounded number of steps.
fn refine(
    dog: &[Grid],
    layers: usize,
    border: usize,
    s0: usize,
    x0: usize,
    y0: usize,
) -> Option<Refined> {
    let mut s = s0;
    let mut x = x0;
    let mut y = y0;
    let width = dog[0].width;
    let height = dog[0].height;

    for _ in 0..MAX_INTERPOLATION_STEPS {
        let prev = &dog[s - 1];
        let cur = &dog[s];
        let next = &dog[s + 1];

        let c = cur.at(x, y);
        let gs = (next.at(x, y) - prev.at(x, y)) * 0.5;
        let gy = (cur.at(x, y + 1) - cur.at(x, y - 1)) * 0.5;
        let gx = (cur.at(x + 1, y) - cur.at(x - 1, y)) * 0.5;

        let c2 = 2.0 * c;
        let hss = next.at(x, y) + prev.at(x, y) - c2;
        let hyy = cur.at(x, y + 1) + cur.at(x, y - 1) - c2;
        let hxx = cur.at(x + 1, y) + cur.at(x - 1, y) - c2;
        let hsy = (next.at(x, y + 1) - next.at(x, y - 1) - prev.at(x, y + 1)
            + prev.at(x, y - 1))
            * 0.25;
        let hsx = (next.at(x + 1, y) - next.at(x - 1, y) - prev.at(x + 1, y)
            + prev.at(x - 1, y))
            * 0.25;
        let hyx = (cur.at(x + 1, y + 1) - cur.at(x - 1, y + 1) - cur.at(x + 1, y - 1)
            + cur.at(x - 1, y - 1))
            * 0.25;

        let det = hss * (hyy * hxx - hyx * hyx) - hsy * (hsy * hxx - hyx * hsx)
            + hsx * (hsy * hyx - hyy * hsx);
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let inv_ss = (hyy * hxx - hyx * hyx) / det;
        let inv_sy = (hsx * hyx - hsy * hxx) / det;
        let inv_sx = (hsy * hyx - hsx * hyy) / det;
        let inv_yy = (hss * hxx - hsx * hsx) / det;
        let inv_yx = (hsy * hsx - hss * hyx) / det;
        let inv_xx = (hss * hyy - hsy * hsy) / det;

        let ds = -(inv_ss * gs + inv_sy * gy + inv_sx * gx);
        let dy = -(inv_sy * gs + inv_yy * gy + inv_yx * gx);
        let dx = -(inv_sx * gs + inv_yx * gy + inv_xx * gx);
        if !(ds.is_finite() && dy.is_finite() && dx.is_finite()) {
            return None;
        }

        if ds.abs() <= 0.5 && dy.abs() <= 0.5 && dx.abs() <= 0.5 {
            let contrast = c + 0.5 * (gs * ds + gy * dy + gx * dx);
            return Some(Refined {
                s,
                x,
                y,
                ds,
                dx,
                dy,
                contrast,
            });
        }

        let ns = s as i64 + ds.round() as i64;
        let ny = y as i64 + dy.round() as i64;
        let nx = x as i64 + dx.round() as i64;
        if ns < 1
            || ns > layers as i64
            || nx < border as i64
            || nx >= (width - border) as i64
            || ny < border as i64
            || ny >= (height - border) as i64
        {
            return None;
        }
        s = ns as usize;
        y = ny as usize;
        x = nx as usize;
    }
    None
}

/// Principal-curvature ratio test on the 2x2 spatial Hessian.
fn on_edge(plane: &Grid, x: usize, y: usize, edge_threshold: f32) -> bool {
    let c2 = 2.0 * plane.at(x, y);
    let dxx = plane.at(x + 1, y) + plane.at(x - 1, y) - c2;
    let dyy = plane.at(x, y + 1) + plane.at(x, y - 1) - c2;
    let dxy = (plane.at(x + 1, y + 1) - plane.at(x - 1, y + 1) - plane.at(x + 1, y - 1)
        + plane.at(x - 1, y - 1))
        * 0.25;
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    if det <= 0.0 {
        return true;
    }
    tr * tr * edge_threshold >= (edge_threshold + 1.0) * (edge_threshold + 1.0) * det
}

fn emit_oriented(
    octave: &Octave,
    params: &SiftParams,
    world: WorldMap,
    refined: &Refined,
    out: &mut Vec<Keypoint>,
) {
    let layers = params.layers_per_octave as f32;
    let sigma_octave =
        params.base_sigma * 2.0f32.powf((refined.s as f32 + refined.ds) / layers);

    let x = world.apply(refined.x as f32 + refined.dx);
    let y = world.apply(refined.y as f32 + refined.dy);
    let size = sigma_octave * world.scale * 2.0;
    let response = refined.contrast.abs();

    let plane = &octave.gauss[refined.s];
    let cx = (refined.x as f32 + refined.dx).round() as i64;
    let cy = (refined.y as f32 + refined.dy).round() as i64;
    let radius = (ORIENTATION_RADIUS_FACTOR * sigma_octave).round() as i64;
    let hist = orientation_histogram(
        plane,
        cx,
        cy,
        radius,
        ORIENTATION_SIGMA_FACTOR * sigma_octave,
    );

    let max = hist.iter().copied().fold(0.0f32, f32::max);
    if max <= 0.0 {
        return;
    }
    let threshold = max * ORIENTATION_PEAK_RATIO;
    for k in 0..ORIENTATION_BINS {
        let left = hist[(k + ORIENTATION_BINS - 1) % ORIENTATION_BINS];
        let right = hist[(k + 1) % ORIENTATION_BINS];
        if hist[k] > left && hist[k] > right && hist[k] >= threshold {
            // Parabolic peak interpolation on the three bins. The reported
            // angle is mirrored (360 - peak) to match the convention of the
            // reference extractor, so external keypoint dumps interoperate.
            let offset = 0.5 * (left - right) / (left - 2.0 * hist[k] + right);
            let bin = k as f32 + offset;
            let orientation = wrap_degrees(360.0 - bin * (360.0 / ORIENTATION_BINS as f32));
            out.push(Keypoint {
                x,
                y,
                size,
                orientation,
                response,
            });
        }
    }
}

/// Gaussian-weighted gradient direction histogram, smoothed with the usual
/// circular [1 4 6 4 1]/16 kernel.
fn orientation_histogram(
    plane: &Grid,
    cx: i64,
    cy: i64,
    radius: i64,
    weight_sigma: f32,
) -> [f32; ORIENTATION_BINS] {
    let mut raw = [0.0f32; ORIENTATION_BINS];
    let denom = -1.0 / (2.0 * weight_sigma * weight_sigma);
    let bins_per_degree = ORIENTATION_BINS as f32 / 360.0;

    for j in -radius..=radius {
        let y = cy + j;
        if y <= 0 || y >= plane.height as i64 - 1 {
            continue;
        }
        for i in -radius..=radius {
            let x = cx + i;
            if x <= 0 || x >= plane.width as i64 - 1 {
                continue;
            }
            let (xu, yu) = (x as usize, y as usize);
            let dx = plane.at(xu + 1, yu) - plane.at(xu - 1, yu);
            let dy = plane.at(xu, yu - 1) - plane.at(xu, yu + 1);
            let magnitude = (dx * dx + dy * dy).sqrt();
            let weight = ((i * i + j * j) as f32 * denom).exp();
            let angle = wrap_degrees(dy.atan2(dx).to_degrees());
            let mut bin = (angle * bins_per_degree).round() as i64;
            if bin >= ORIENTATION_BINS as i64 {
                bin -= ORIENTATION_BINS as i64;
            }
            raw[bin as usize] += weight * magnitude;
        }
    }

    let mut hist = [0.0f32; ORIENTATION_BINS];
    let n = ORIENTATION_BINS;
    for k in 0..n {
        hist[k] = (raw[(k + n - 2) % n] + raw[(k + 2) % n]) * (1.0 / 16.0)
            + (raw[(k + n - 1) % n] + raw[(k + 1) % n]) * (4.0 / 16.0)
            + raw[k] * (6.0 / 16.0);
    }
    hist
}

pub(crate) fn wrap_degrees(angle: f32) -> f32 {
    let mut a = angle % 360.0;
    if a < 0.0 {
        a += 360.0;
    }
    if a >= 360.0 {
        a = 0.0;
    }
    a
}
