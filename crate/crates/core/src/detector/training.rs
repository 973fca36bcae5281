use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::stack::AlignedFrames;
use super::{chain_at, finish_frame, history_at, propose_cells, DetectorConfig, FrameEvidence};
use crate::background::{build_background, foreground, SubtractionConfig};
use crate::error::{Error, Result};
use crate::evalmetrics::{match_detections, Counts};
use crate::imgcore::Frame;
use crate::nn::{Dataset, Network, CLASSIFIER_INPUT, REGRESSOR_INPUT, REGRESSOR_OUTPUTS};
use crate::records::{by_frame, GtPoint};
use crate::registration::Homography;

pub const POSITIVE_RADIUS: f64 = 6.0;
pub const NEGATIVE_RADIUS: f64 = 15.0;
pub const NEGATIVE_RATIO: usize = 4;
pub const JITTER: f64 = 8.0;
pub const JITTER_REPEATS: usize = 5;

/// `[0.50, 0.55, ..., 0.95]`.
pub const PHI_SWEEP: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellLabel {
    Positive,
    Negative,
    Discard,
}

pub fn label_cell(center: (f64, f64), truth: &[(f64, f64)]) -> CellLabel {
    let d = truth
        .iter()
        .map(|&(x, y)| (x - center.0).hypot(y - center.1))
        .fold(f64::INFINITY, f64::min);
    if d <= POSITIVE_RADIUS {
        CellLabel::Positive
    } else if d >= NEGATIVE_RADIUS {
        CellLabel::Negative
    } else {
        CellLabel::Discard
    }
}

/// Sorted indices of the negatives kept: all of them when there are at
/// most `4 * positives`, otherwise a seeded uniform sample of that size.
pub fn subsample_negatives(negatives: usize, positives: usize, seed: u64) -> Vec<usize> {
    let keep = NEGATIVE_RATIO * positives;
    if negatives <= keep {
        return (0..negatives).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, negatives, keep).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClassifierSetStats {
    pub positives: usize,
    pub negatives_found: usize,
    pub negatives_kept: usize,
    pub discarded: usize,
}

/// Frames, their `h_t^{t-1}` transforms and ground truth.
fn check_video(frames: &[Frame], homographies: &[Homography]) -> Result<()> {
    if frames.len() != homographies.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} frames but {} homographies",
            frames.len(),
            homographies.len()
        )));
    }
    Ok(())
}

fn truth_by_frame(gt: &[GtPoint]) -> BTreeMap<usize, Vec<(f64, f64)>> {
    by_frame(gt, |g| g.frame)
        .into_iter()
        .map(|(f, v)| (f, v.iter().map(|g| (g.x, g.y)).collect()))
        .collect()
}

/// Labelled 21x21x4 windows at the proposed cells of every frame: within
/// 6 px of a ground-truth point is positive (target `[1, 0]`), 15 px or
/// more from all of them negative (`[0, 1]`); negatives are subsampled to
/// four times the positives.
pub fn classifier_training_set(
    frames: &[Frame],
    homographies: &[Homography],
    gt: &[GtPoint],
    sub: &SubtractionConfig,
    cfg: &DetectorConfig,
    seed: u64,
) -> Result<(Dataset<f32>, ClassifierSetStats)> {
    check_video(frames, homographies)?;
    let truth = truth_by_frame(gt);
    let warm = cfg.warmup(sub);
    let none = Vec::new();
    let per_frame: Vec<(Vec<Vec<f32>>, Vec<Vec<f32>>, usize)> = (warm..frames.len())
        .into_par_iter()
        .map(|t| {
            let chain = chain_at(homographies, t, warm);
            let history = history_at(frames, t, warm);
            let model = build_background(&history, &chain, sub.history, t as i64)?;
            let fg = foreground(&frames[t], &model, sub)?;
            let aligned = AlignedFrames::from_model(&frames[t], &model, &history, &chain, cfg.stack_depth)?;
            let pts = truth.get(&t).unwrap_or(&none);
            let (mut pos, mut neg, mut discarded) = (Vec::new(), Vec::new(), 0);
            for (cx, cy) in propose_cells(&fg, cfg.cell_size) {
                let c = (cx as f64, cy as f64);
                let label = label_cell(c, pts);
                let d = pts.iter().map(|&(x, y)| (x - c.0).hypot(y - c.1)).fold(f64::INFINITY, f64::min);
                match label {
                    CellLabel::Positive => {
                        assert!(d <= POSITIVE_RADIUS);
                        pos.push(aligned.stack((cx as i64, cy as i64), cfg.window_side).normalized());
                    }
                    CellLabel::Negative => {
                        assert!(d >= NEGATIVE_RADIUS);
                        neg.push(aligned.stack((cx as i64, cy as i64), cfg.window_side).normalized());
                    }
                    CellLabel::Discard => discarded += 1,
                }
            }
            Ok((pos, neg, discarded))
        })
        .collect::<Result<_>>()?;
    let positives: Vec<Vec<f32>> = per_frame.iter().flat_map(|p| p.0.iter().cloned()).collect();
    if positives.is_empty() {
        return Err(Error::MissingData("no positive windows in the training video".into()));
    }
    let negatives: Vec<&Vec<f32>> = per_frame.iter().flat_map(|p| p.1.iter()).collect();
    let kept = subsample_negatives(negatives.len(), positives.len(), seed);
    let mut data = Dataset::new(CLASSIFIER_INPUT, 2);
    for p in &positives {
        data.push(p, &[1.0, 0.0])?;
    }
    for &i in &kept {
        data.push(negatives[i], &[0.0, 1.0])?;
    }
    let stats = ClassifierSetStats {
        positives: positives.len(),
        negatives_found: negatives.len(),
        negatives_kept: kept.len(),
        discarded: per_frame.iter().map(|p| p.2).sum(),
    };
    Ok((data, stats))
}

/// 15x15 occupancy of `points` in the 3x3-pixel cells of the 45x45 window
/// centred on `center`.
pub fn regression_target(center: (i64, i64), points: &[(f64, f64)], window: usize, response: usize) -> Vec<f32> {
    let step = (window / response) as f64;
    let half = (window / 2) as f64;
    let mut t = vec![0.0f32; response * response];
    for &(x, y) in points {
        let px = x - (center.0 as f64 - half);
        let py = y - (center.1 as f64 - half);
        let (c, r) = (((px + 0.5) / step).floor(), ((py + 0.5) / step).floor());
        if c >= 0.0 && r >= 0.0 && c < response as f64 && r < response as f64 {
            t[r as usize * response + c as usize] = 1.0;
        }
    }
    t
}

/// Five 45x45x4 stacks per ground-truth point and frame, centred on the
/// point moved by a uniform draw from [-8, 8] on each axis.
pub fn regression_training_set(
    frames: &[Frame],
    homographies: &[Homography],
    gt: &[GtPoint],
    sub: &SubtractionConfig,
    cfg: &DetectorConfig,
    seed: u64,
) -> Result<Dataset<f32>> {
    check_video(frames, homographies)?;
    let truth = truth_by_frame(gt);
    let warm = cfg.warmup(sub);
    let depth = cfg.stack_depth;
    let per_frame: Vec<Vec<(Vec<f32>, Vec<f32>)>> = (warm..frames.len())
        .into_par_iter()
        .map(|t| {
            let Some(pts) = truth.get(&t) else { return Ok(Vec::new()) };
            let chain = chain_at(homographies, t, depth);
            let aligned = AlignedFrames::new(&frames[t], &history_at(frames, t, depth), &chain, depth)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let mut out = Vec::new();
            for &(gx, gy) in pts {
                for _ in 0..JITTER_REPEATS {
                    let dx = rng.gen_range(-JITTER..=JITTER);
                    let dy = rng.gen_range(-JITTER..=JITTER);
                    let c = ((gx + dx).round() as i64, (gy + dy).round() as i64);
                    let stack = aligned.stack(c, cfg.regression_side).normalized();
                    out.push((stack, regression_target(c, pts, cfg.regression_side, cfg.response_side)));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut data = Dataset::new(REGRESSOR_INPUT, REGRESSOR_OUTPUTS);
    for (x, t) in per_frame.iter().flatten() {
        data.push(x, t)?;
    }
    Ok(data)
}

/// Best `phi` of a sweep of `(phi, f1, detections)`; ties go to the larger
/// `phi`.
pub fn pick_phi(sweep: &[(f64, f64, usize)]) -> Result<f64> {
    if sweep.iter().all(|s| s.2 == 0) {
        return Err(Error::Numerical("no detections at any phi in the sweep".into()));
    }
    let mut best = sweep[0];
    for &s in &sweep[1..] {
        if s.1 > best.1 || (s.1 == best.1 && s.0 > best.0) {
            best = s;
        }
    }
    Ok(best.0)
}

/// Detection F1 of every `phi` in the sweep over precomputed frame
/// evidence, and the maximiser.
pub fn calibrate_phi(
    evidence: &[FrameEvidence],
    gt: &[GtPoint],
    regressor: Option<&Network<f32>>,
    cfg: &DetectorConfig,
    radius: f64,
) -> Result<(f64, Vec<(f64, f64, usize)>)> {
    let truth = truth_by_frame(gt);
    let none = Vec::new();
    let mut sweep = Vec::new();
    for &phi in &PHI_SWEEP {
        let mut c = Counts::default();
        let mut n = 0;
        for ev in evidence {
            let dets = finish_frame(ev, phi, regressor, cfg)?.detections;
            n += dets.len();
            let pos: Vec<_> = dets.iter().map(|d| d.position()).collect();
            c.add(&match_detections(&pos, truth.get(&ev.frame).unwrap_or(&none), radius));
        }
        sweep.push((phi, c.prf().f1, n));
    }
    Ok((pick_phi(&sweep)?, sweep))
}
