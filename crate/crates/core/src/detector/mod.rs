//! Cell proposals, window classification, bg/cnn blob assignment,
//! regression splitting of merged blobs, and training-set extraction.

mod assign;
mod cells;
mod regress;
mod stack;
mod training;


use serde::{Deserialize, Serialize};

pub use assign::{assign_blobs, blob_score, emit_direct, Assignment};
pub use cells::{accepted_cells, propose_cells, Gate};
pub use regress::{
    cell_offset, default_box, regress_merged, response_peaks, upsample, window_centers, RegressionParams,
};
pub use stack::{batch_tensor, AlignedFrames, PatchStack};
pub use training::{
    calibrate_phi, classifier_training_set, label_cell, pick_phi, regression_target, regression_training_set,
    subsample_negatives, CellLabel, ClassifierSetStats, PHI_SWEEP,
};

use crate::background::{build_background, foreground, propose_blobs, SubtractionConfig};
use crate::error::{invalid, Result};
use crate::imgcore::{connected_components, BinaryMask, Blob, Frame};
use crate::nn::Network;
pub use crate::records::{Detection, Source};
use crate::registration::{Homography, TransformChain};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub cell_size: usize,
    pub window_side: usize,
    pub phi: f64,
    pub kappa: f64,
    pub max_direct_area: usize,
    pub min_overlap: usize,
    pub regression_side: usize,
    pub response_side: usize,
    pub default_box_side: f64,
    pub dedup_radius: f64,
    /// Previous frames per patch stack.
    pub stack_depth: usize,
    /// Regression peaks may lie this far outside the merged blob's box.
    pub regression_margin: f64,
    /// Oracle classifier acceptance radius.
    pub oracle_radius: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            cell_size: 5,
            window_side: 21,
            phi: 0.8,
            kappa: 0.25,
            max_direct_area: 150,
            min_overlap: 50,
            regression_side: 45,
            response_side: 15,
            default_box_side: 7.0,
            dedup_radius: 3.0,
            stack_depth: 3,
            regression_margin: 2.0,
            oracle_radius: 6.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(invalid!("phi must lie in (0, 1), got {}", self.phi));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(invalid!("kappa must lie in (0, 1), got {}", self.kappa));
        }
        if self.cell_size == 0 || self.cell_size.is_multiple_of(2) {
            return Err(invalid!("cell size must be odd, got {}", self.cell_size));
        }
        if self.window_side.is_multiple_of(2) || self.regression_side.is_multiple_of(2) {
            return Err(invalid!("window sides must be odd"));
        }
        if self.response_side == 0 || !self.regression_side.is_multiple_of(self.response_side) {
            return Err(invalid!(
                "response side {} must divide the regression side {}",
                self.response_side,
                self.regression_side
            ));
        }
        if self.stack_depth == 0 {
            return Err(invalid!("stack depth must be at least 1"));
        }
        if !(self.dedup_radius >= 0.0 && self.default_box_side > 0.0 && self.regression_margin >= 0.0) {
            return Err(invalid!("dedup radius, box side and margin must be non-negative"));
        }
        Ok(())
    }

    pub fn regression_params(&self) -> RegressionParams {
        RegressionParams {
            kappa: self.kappa,
            window_side: self.regression_side,
            response_side: self.response_side,
            box_side: self.default_box_side,
            margin: self.regression_margin,
        }
    }

    /// Frames needed before the first detection.
    pub fn warmup(&self, sub: &SubtractionConfig) -> usize {
        sub.history.max(self.stack_depth)
    }
}

/// Everything about a frame that does not depend on `phi` or `kappa`.
#[derive(Clone, Debug)]
pub struct FrameEvidence {
    pub frame: usize,
    pub foreground: BinaryMask,
    pub bg_blobs: Vec<Blob>,
    pub centers: Vec<(usize, usize)>,
    pub scores: Vec<f64>,
    pub aligned: AlignedFrames,
}

/// Background subtraction, cell proposals and window scores for frame
/// `current`, with `history[k-1]` = frame t-k and the chain at t.
pub fn frame_evidence(
    current: &Frame,
    history: &[Frame],
    chain: &TransformChain,
    gate: &Gate,
    sub: &SubtractionConfig,
    cfg: &DetectorConfig,
) -> Result<FrameEvidence> {
    let model = build_background(history, chain, sub.history, current.index())?;
    let fg = foreground(current, &model, sub)?;
    let aligned = AlignedFrames::from_model(current, &model, history, chain, cfg.stack_depth)?;
    let bg_blobs = propose_blobs(&fg);
    let centers = propose_cells(&fg, cfg.cell_size);
    let scores = gate.scores(&aligned, &centers, cfg.window_side)?;
    Ok(FrameEvidence {
        frame: current.index().max(0) as usize,
        foreground: fg,
        bg_blobs,
        centers,
        scores,
        aligned,
    })
}

#[derive(Clone, Debug)]
pub struct FrameDetections {
    pub detections: Vec<Detection>,
    pub accepted: BinaryMask,
}

/// Gating, assignment, direct/regression emission and deduplication. A
/// merged blob without a regressor yields the centroids of its bg blobs.
pub fn finish_frame(
    ev: &FrameEvidence,
    phi: f64,
    regressor: Option<&Network<f32>>,
    cfg: &DetectorConfig,
) -> Result<FrameDetections> {
    let (w, h) = (ev.foreground.width(), ev.foreground.height());
    let accepted = accepted_cells(w, h, &ev.centers, &ev.scores, phi, cfg.cell_size);
    let cnn = connected_components(&accepted);
    let a = assign_blobs(&ev.bg_blobs, &cnn, cfg.max_direct_area, cfg.min_overlap);
    let score_of = |b: &Blob| blob_score(b, &ev.centers, &ev.scores, phi, cfg.cell_size);
    let mut dets = Vec::new();
    for &(j, _) in &a.direct {
        dets.push(emit_direct(ev.frame, &ev.bg_blobs[j], score_of(&ev.bg_blobs[j])));
    }
    for (i, members) in &a.merged {
        match regressor {
            Some(net) => dets.extend(regress_merged(ev.frame, &cnn[*i], &ev.aligned, net, &cfg.regression_params())?),
            None => {
                for &j in members {
                    dets.push(emit_direct(ev.frame, &ev.bg_blobs[j], score_of(&ev.bg_blobs[j])));
                }
            }
        }
    }
    Ok(FrameDetections {
        detections: dedup(dets, cfg.dedup_radius),
        accepted,
    })
}

/// Keeps the higher-scoring of any two detections closer than `radius`;
/// equal scores keep the earlier one. Output is in raster order of position.
pub fn dedup(dets: Vec<Detection>, radius: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    let mut keep: Vec<usize> = Vec::new();
    for i in order {
        let (x, y) = dets[i].position();
        if keep.iter().all(|&k| {
            let (kx, ky) = dets[k].position();
            (kx - x).hypot(ky - y) >= radius
        }) {
            keep.push(i);
        }
    }
    keep.sort_by(|&a, &b| dets[a].y.total_cmp(&dets[b].y).then(dets[a].x.total_cmp(&dets[b].x)));
    keep.into_iter().map(|i| dets[i].clone()).collect()
}

pub fn detect_frame(
    current: &Frame,
    history: &[Frame],
    chain: &TransformChain,
    gate: &Gate,
    regressor: Option<&Network<f32>>,
    sub: &SubtractionConfig,
    cfg: &DetectorConfig,
) -> Result<FrameDetections> {
    let ev = frame_evidence(current, history, chain, gate, sub, cfg)?;
    finish_frame(&ev, cfg.phi, regressor, cfg)
}

/// Chain at frame `t` rebuilt from the per-frame transforms
/// (`homographies[t]` = `h_t^{t-1}`).
pub fn chain_at(homographies: &[Homography], t: usize, capacity: usize) -> TransformChain {
    let mut c = TransformChain::new(capacity);
    for h in &homographies[t + 1 - capacity.min(t)..=t] {
        c.push(*h);
    }
    c
}

/// History slice for frame `t`: frames t-1, t-2, ... t-depth.
pub fn history_at(frames: &[Frame], t: usize, depth: usize) -> Vec<Frame> {
    (1..=depth.min(t)).map(|k| frames[t - k].clone()).collect()
}
