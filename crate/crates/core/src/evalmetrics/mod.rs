//! Detection precision/recall under one-to-one matching, and track
//! purity/continuity against target trajectories.

mod overlay;

#[cfg(test)]
mod tests;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use overlay::{render_overlay, write_overlay};

use crate::error::{Error, Result};
use crate::records::{by_frame, Detection, GtPoint, TrackPoint};

pub const MATCH_RADIUS: f64 = 10.0;
pub const STATIONARY_METRES: f64 = 0.8;
pub const MIN_ENTITY_FRAMES: usize = 5;

/// Removes ground-truth points whose world displacement from the same
/// object's previous frame is below `min_displacement` metres. An object's
/// first point is judged by its step to the next frame; a point with no
/// adjacent frame is removed.
pub fn filter_stationary(gt: &[GtPoint], min_displacement: f64) -> Result<Vec<GtPoint>> {
    let mut index: BTreeMap<(u64, usize), (f64, f64)> = BTreeMap::new();
    for g in gt {
        let w = g.world.ok_or_else(|| {
            Error::MissingData(format!(
                "ground truth for object {} frame {} has no world coordinates",
                g.id, g.frame
            ))
        })?;
        index.insert((g.id, g.frame), w);
    }
    let step = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).hypot(a.1 - b.1);
    Ok(gt
        .iter()
        .filter(|g| {
            let here = g.world.unwrap();
            let prev = g.frame.checked_sub(1).and_then(|f| index.get(&(g.id, f)));
            let d = match prev {
                Some(&p) => Some(step(here, p)),
                None => index.get(&(g.id, g.frame + 1)).map(|&n| step(here, n)),
            };
            d.is_some_and(|d| d >= min_displacement)
        })
        .copied()
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MatchResult {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// `(detection index, ground-truth index)`.
    pub pairs: Vec<(usize, usize)>,
}

/// Greedy one-to-one matching of `a` to `b` by ascending distance, pairs
/// further than `radius` never matching. Ties break on the coordinates of
/// the unordered pair, so the result does not depend on input order or on
/// which side is which.
pub fn greedy_match(a: &[(f64, f64)], b: &[(f64, f64)], radius: f64) -> Vec<(usize, usize)> {
    let mut cand = Vec::new();
    for (i, p) in a.iter().enumerate() {
        for (j, q) in b.iter().enumerate() {
            let d = (p.0 - q.0).hypot(p.1 - q.1);
            if d <= radius {
                let (lo, hi) = if (p.0, p.1) <= (q.0, q.1) { (*p, *q) } else { (*q, *p) };
                cand.push((d, lo, hi, i, j));
            }
        }
    }
    cand.sort_by(|x, y| {
        x.0.total_cmp(&y.0)
            .then(x.1 .0.total_cmp(&y.1 .0))
            .then(x.1 .1.total_cmp(&y.1 .1))
            .then(x.2 .0.total_cmp(&y.2 .0))
            .then(x.2 .1.total_cmp(&y.2 .1))
    });
    let (mut used_a, mut used_b) = (vec![false; a.len()], vec![false; b.len()]);
    let mut pairs = Vec::new();
    for (_, _, _, i, j) in cand {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

pub fn match_detections(dets: &[(f64, f64)], gt: &[(f64, f64)], radius: f64) -> MatchResult {
    let pairs = greedy_match(dets, gt, radius);
    MatchResult {
        true_positives: pairs.len(),
        false_positives: dets.len() - pairs.len(),
        false_negatives: gt.len() - pairs.len(),
        pairs,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(n: f64, d: f64) -> f64 {
    if d > 0.0 {
        n / d
    } else {
        0.0
    }
}

pub fn prf(tp: usize, fp: usize, fn_: usize) -> Prf {
    let (tp, fp, fn_) = (tp as f64, fp as f64, fn_ as f64);
    Prf {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        f1: ratio(2.0 * tp, 2.0 * tp + fp + fn_),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, m: &MatchResult) {
        self.tp += m.true_positives;
        self.fp += m.false_positives;
        self.fn_ += m.false_negatives;
    }

    pub fn prf(&self) -> Prf {
        prf(self.tp, self.fp, self.fn_)
    }
}

/// Per-frame matching over `frames`, summed.
pub fn evaluate_detections(
    dets: &[Detection],
    gt: &[GtPoint],
    frames: impl IntoIterator<Item = usize>,
    radius: f64,
) -> Counts {
    let d = by_frame(dets, |d| d.frame);
    let g = by_frame(gt, |g| g.frame);
    let mut c = Counts::default();
    for f in frames {
        let dp: Vec<_> = d.get(&f).map(|v| v.iter().map(|d| d.position()).collect()).unwrap_or_default();
        let gp: Vec<_> = g.get(&f).map(|v| v.iter().map(|g| (g.x, g.y)).collect()).unwrap_or_default();
        c.add(&match_detections(&dp, &gp, radius));
    }
    c
}

/// One point of a track or target trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obs {
    pub frame: usize,
    pub id: u64,
    pub x: f64,
    pub y: f64,
}

impl From<&TrackPoint> for Obs {
    fn from(t: &TrackPoint) -> Self {
        Obs {
            frame: t.frame,
            id: t.track_id,
            x: t.x,
            y: t.y,
        }
    }
}

impl From<&GtPoint> for Obs {
    fn from(g: &GtPoint) -> Self {
        Obs {
            frame: g.frame,
            id: g.id,
            x: g.x,
            y: g.y,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackMetricsConfig {
    pub radius: f64,
    /// Tracks and trajectories with fewer frames are ignored.
    pub min_frames: usize,
    /// When set, continuity counts only counterparts assigned in at least
    /// this many frames (at least 1 whenever any assignment exists).
    pub continuity_min_assigned: Option<usize>,
}

impl Default for TrackMetricsConfig {
    fn default() -> Self {
        Self {
            radius: MATCH_RADIUS,
            min_frames: MIN_ENTITY_FRAMES,
            continuity_min_assigned: Some(MIN_ENTITY_FRAMES),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackMetrics {
    /// Fractions in [0, 1].
    pub target_purity: f64,
    pub target_continuity: f64,
    pub track_purity: f64,
    pub track_continuity: f64,
    pub targets: usize,
    pub tracks: usize,
}

/// Purity and continuity of every entity of one side against the other,
/// from per-frame assignments `(a id, b id)`.
fn side_metrics(
    lengths: &BTreeMap<u64, usize>,
    assigned: &BTreeMap<u64, BTreeMap<u64, usize>>,
    min_assigned: Option<usize>,
) -> (f64, f64) {
    if lengths.is_empty() {
        return (0.0, 0.0);
    }
    let (mut purity, mut continuity) = (0.0, 0.0);
    for (id, &len) in lengths {
        let Some(counts) = assigned.get(id) else { continue };
        let best = counts.values().copied().max().unwrap_or(0);
        purity += best as f64 / len as f64;
        let c = match min_assigned {
            Some(m) => counts.values().filter(|&&n| n >= m).count().max(1),
            None => counts.len(),
        };
        continuity += c as f64;
    }
    let n = lengths.len() as f64;
    (purity / n, continuity / n)
}

fn long_enough(obs: &[Obs], min_frames: usize) -> Vec<Obs> {
    let mut frames: BTreeMap<u64, BTreeSet<usize>> = BTreeMap::new();
    for o in obs {
        frames.entry(o.id).or_default().insert(o.frame);
    }
    obs.iter()
        .filter(|o| frames[&o.id].len() >= min_frames)
        .copied()
        .collect()
}

/// Frame-wise one-to-one association of tracks to target trajectories,
/// then purity (share of the predominant counterpart) and continuity
/// (number of counterparts) for targets and, symmetrically, for tracks.
/// Means are unweighted over entities.
pub fn track_metrics(tracks: &[Obs], targets: &[Obs], cfg: &TrackMetricsConfig) -> TrackMetrics {
    let tracks = long_enough(tracks, cfg.min_frames);
    let targets = long_enough(targets, cfg.min_frames);
    let len_of = |obs: &[Obs]| {
        let mut m: BTreeMap<u64, BTreeSet<usize>> = BTreeMap::new();
        for o in obs {
            m.entry(o.id).or_default().insert(o.frame);
        }
        m.into_iter().map(|(k, v)| (k, v.len())).collect::<BTreeMap<_, _>>()
    };
    let (track_len, target_len) = (len_of(&tracks), len_of(&targets));
    let tf = by_frame(&tracks, |o| o.frame);
    let gf = by_frame(&targets, |o| o.frame);
    let mut by_target: BTreeMap<u64, BTreeMap<u64, usize>> = BTreeMap::new();
    let mut by_track: BTreeMap<u64, BTreeMap<u64, usize>> = BTreeMap::new();
    for (f, ts) in &tf {
        let Some(gs) = gf.get(f) else { continue };
        let tp: Vec<_> = ts.iter().map(|o| (o.x, o.y)).collect();
        let gp: Vec<_> = gs.iter().map(|o| (o.x, o.y)).collect();
        for (i, j) in greedy_match(&tp, &gp, cfg.radius) {
            *by_target.entry(gs[j].id).or_default().entry(ts[i].id).or_default() += 1;
            *by_track.entry(ts[i].id).or_default().entry(gs[j].id).or_default() += 1;
        }
    }
    let (target_purity, target_continuity) = side_metrics(&target_len, &by_target, cfg.continuity_min_assigned);
    let (track_purity, track_continuity) = side_metrics(&track_len, &by_track, cfg.continuity_min_assigned);
    TrackMetrics {
        target_purity,
        target_continuity,
        track_purity,
        track_continuity,
        targets: target_len.len(),
        tracks: track_len.len(),
    }
}

pub fn tracking_metrics(tracks: &[TrackPoint], targets: &[GtPoint], cfg: &TrackMetricsConfig) -> TrackMetrics {
    let a: Vec<Obs> = tracks.iter().map(Obs::from).collect();
    let b: Vec<Obs> = targets.iter().map(Obs::from).collect();
    track_metrics(&a, &b, cfg)
}

/// Flat `key=value` report.
pub fn detection_report(name: &str, frames: usize, c: &Counts) -> String {
    let p = c.prf();
    let mut s = String::new();
    writeln!(s, "name={name}").unwrap();
    writeln!(s, "mode=detection").unwrap();
    writeln!(s, "frames={frames}").unwrap();
    writeln!(s, "tp={}", c.tp).unwrap();
    writeln!(s, "fp={}", c.fp).unwrap();
    writeln!(s, "fn={}", c.fn_).unwrap();
    writeln!(s, "precision={:.4}", p.precision).unwrap();
    writeln!(s, "recall={:.4}", p.recall).unwrap();
    writeln!(s, "f1={:.4}", p.f1).unwrap();
    s
}

pub const DETECTION_CSV_HEADER: &str = "name,frames,tp,fp,fn,precision,recall,f1";

pub fn detection_csv_row(name: &str, frames: usize, c: &Counts) -> String {
    let p = c.prf();
    format!(
        "{name},{frames},{},{},{},{:.4},{:.4},{:.4}",
        c.tp, c.fp, c.fn_, p.precision, p.recall, p.f1
    )
}

pub fn tracking_report(name: &str, m: &TrackMetrics) -> String {
    let mut s = String::new();
    writeln!(s, "name={name}").unwrap();
    writeln!(s, "mode=tracking").unwrap();
    writeln!(s, "targets={}", m.targets).unwrap();
    writeln!(s, "tracks={}", m.tracks).unwrap();
    writeln!(s, "target_purity={:.2}", 100.0 * m.target_purity).unwrap();
    writeln!(s, "target_continuity={:.3}", m.target_continuity).unwrap();
    writeln!(s, "track_purity={:.2}", 100.0 * m.track_purity).unwrap();
    writeln!(s, "track_continuity={:.3}", m.track_continuity).unwrap();
    s
}

pub const TRACKING_CSV_HEADER: &str =
    "name,targets,tracks,target_purity,target_continuity,track_purity,track_continuity";

pub fn tracking_csv_row(name: &str, m: &TrackMetrics) -> String {
    format!(
        "{name},{},{},{:.2},{:.3},{:.2},{:.3}",
        m.targets,
        m.tracks,
        100.0 * m.target_purity,
        m.target_continuity,
        100.0 * m.track_purity,
        m.track_continuity
    )
}
