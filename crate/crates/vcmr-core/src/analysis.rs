//! Per-run aggregates: keypoint-count statistics, category counts,
//! unchanged-parameter histograms, the side-information ratio L and its
//! least-squares fit against QP, plus fixed-schema CSV rows.

use serde::Serialize;
use thiserror::Error;

use crate::correspondence::{unchanged_param_histogram, Category, MatchReport};
use crate::degrade::io::CodingType;
use crate::keypoint::KeypointSet;
use crate::residual::ResidualFrame;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("run has no frames")]
    EmptyRun,
    #[error("run mixes qp values {0} and {1}")]
    MixedQp(u8, u8),
    #[error("need at least two distinct qp values for a fit")]
    DegenerateInput,
    #[error("run has no original keypoints")]
    NoKeypoints,
}

/// Everything recorded about one (original, decoded) frame pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameResult {
    pub frame_id: u64,
    pub qp: u8,
    pub n_orig: usize,
    pub n_dec: usize,
    pub same: usize,
    pub moved: usize,
    pub missed: usize,
    pub new: usize,
    /// Unchanged-parameter histogram of *same* pairs, bins 0..5.
    pub hist_same: [u64; 6],
    /// The matching histogram for *moved* pairs.
    pub hist_moved: [u64; 6],
    /// Original parameters carried as side information.
    pub transmitted_params: u64,
    /// Side-information ratio in percent; 0 for frames without keypoints.
    pub l_percent: f64,
    /// Wire size of the residual frame record.
    pub residual_bytes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coding_type: Option<CodingType>,
}

impl FrameResult {
    pub fn from_run(
        qp: u8,
        orig: &KeypointSet,
        dec: &KeypointSet,
        report: &MatchReport,
        residual: &ResidualFrame,
        residual_bytes: usize,
    ) -> Self {
        let transmitted = residual.transmitted_params();
        let l_percent = if orig.is_empty() {
            0.0
        } else {
            100.0 * transmitted as f64 / (5.0 * orig.len() as f64)
        };
        Self {
            frame_id: orig.frame_id,
            qp,
            n_orig: orig.len(),
            n_dec: dec.len(),
            same: report.count(Category::Same),
            moved: report.count(Category::Moved),
            missed: report.missed.len(),
            new: report.new.len(),
            hist_same: unchanged_param_histogram(report, Category::Same),
            hist_moved: unchanged_param_histogram(report, Category::Moved),
            transmitted_params: transmitted,
            l_percent,
            residual_bytes,
            coding_type: None,
        }
    }

    /// One CSV row in the fixed column order of [`CSV_HEADER`]. The
    /// histogram columns are the *same*-category histogram.
    pub fn csv_row(&self) -> String {
        let h = &self.hist_same;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.frame_id,
            self.qp,
            self.n_orig,
            self.n_dec,
            self.same,
            self.moved,
            self.missed,
            self.new,
            h[0],
            h[1],
            h[2],
            h[3],
            h[4],
            h[5],
            self.l_percent,
            self.residual_bytes,
        )
    }
}

pub const CSV_HEADER: &str =
    "frame_id,qp,n_orig,n_dec,same,moved,missed,new,hist0,hist1,hist2,hist3,hist4,hist5,L,bytes";

/// Keypoints *not preserved* in the decoded frame: vanished or different in
/// location, i.e. missed plus moved.
pub fn loss_count(frame: &FrameResult) -> u64 {
    (frame.missed + frame.moved) as u64
}

/// Aggregates of one QP operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStats {
    pub qp: u8,
    pub frames: Vec<FrameResult>,
    pub min_dec: usize,
    pub avg_dec: f64,
    pub max_dec: usize,
    /// Pooled over keypoints: 100 * transmitted / (5 * total originals).
    pub mean_l: f64,
    pub mean_transmitted_per_keypoint: f64,
}

pub fn summarize_run(frames: Vec<FrameResult>) -> Result<RunStats, AnalysisError> {
    let first = frames.first().ok_or(AnalysisError::EmptyRun)?;
    let qp = first.qp;
    if let Some(other) = frames.iter().find(|f| f.qp != qp) {
        return Err(AnalysisError::MixedQp(qp, other.qp));
    }

    let min_dec = frames.iter().map(|f| f.n_dec).min().unwrap();
    let max_dec = frames.iter().map(|f| f.n_dec).max().unwrap();
    let avg_dec = frames.iter().map(|f| f.n_dec as f64).sum::<f64>() / frames.len() as f64;

    let total_orig: u64 = frames.iter().map(|f| f.n_orig as u64).sum();
    let total_transmitted: u64 = frames.iter().map(|f| f.transmitted_params).sum();
    let (mean_l, mean_t) = if total_orig == 0 {
        (0.0, 0.0)
    } else {
        let t = total_transmitted as f64 / total_orig as f64;
        (100.0 * t / 5.0, t)
    };

    Ok(RunStats {
        qp,
        frames,
        min_dec,
        avg_dec,
        max_dec,
        mean_l,
        mean_transmitted_per_keypoint: mean_t,
    })
}

/// Average number of transmitted parameters per original keypoint, pooled
/// over the whole run. Always equals `5 * mean_l / 100`.
pub fn avg_transmitted_params_per_keypoint(stats: &RunStats) -> Result<f64, AnalysisError> {
    let total_orig: u64 = stats.frames.iter().map(|f| f.n_orig as u64).sum();
    if total_orig == 0 {
        return Err(AnalysisError::NoKeypoints);
    }
    let total_transmitted: u64 = stats.frames.iter().map(|f| f.transmitted_params).sum();
    Ok(total_transmitted as f64 / total_orig as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    /// L-percent at QP zero.
    pub intercept: f64,
    /// L-percent per QP unit.
    pub slope: f64,
    pub max_abs_error: f64,
    pub r_squared: f64,
    pub qp_min: f64,
    pub qp_max: f64,
}

/// Ordinary least squares of mean L against QP.
pub fn fit_l_vs_qp(points: &[(f64, f64)]) -> Result<FitResult, AnalysisError> {
    if points.len() < 2 {
        return Err(AnalysisError::DegenerateInput);
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::DegenerateInput);
    }
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;

    let mut max_abs_error = 0.0f64;
    let mut ss_res = 0.0f64;
    let mut ss_tot = 0.0f64;
    for &(x, y) in points {
        let r = y - (intercept + slope * x);
        max_abs_error = max_abs_error.max(r.abs());
        ss_res += r * r;
        ss_tot += (y - mean_y).powi(2);
    }
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    let qp_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let qp_max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(FitResult {
        intercept,
        slope,
        max_abs_error,
        r_squared,
        qp_min,
        qp_max,
    })
}

/// Spearman rank correlation with average ranks on ties.
pub fn spearman_rho(points: &[(f64, f64)]) -> f64 {
    fn ranks(values: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut ranks = vec![0.0; values.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
                j += 1;
            }
            let rank = (i + j) as f64 / 2.0 + 1.0;
            for &idx in &order[i..=j] {
                ranks[idx] = rank;
            }
            i = j + 1;
        }
        ranks
    }

    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let rx = ranks(&xs);
    let ry = ranks(&ys);
    let n = points.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..points.len() {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx).powi(2);
        vy += (ry[i] - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}
