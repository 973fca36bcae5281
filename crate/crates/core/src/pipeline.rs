//! Whole-video glue: loading frames and transforms, and frame-parallel
//! detection.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::background::SubtractionConfig;
use crate::detector::{
    chain_at, finish_frame, frame_evidence, history_at, Detection, DetectorConfig, FrameDetections, FrameEvidence, Gate,
};
use crate::error::{Error, Result};
use crate::imgcore::io::read_frame;
use crate::imgcore::{BinaryMask, Frame};
use crate::nn::Network;
use crate::records::{by_frame, GtPoint};
use crate::registration::{read_homographies, register_pair, Homography, RegistrationMode, RegistrationParams};

fn is_frame_file(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("png"))
}

/// Frame files of a video directory in name order: `dir/frames/*` when
/// that exists, else `dir/*`.
pub fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let sub = dir.join("frames");
    let root = if sub.is_dir() { sub } else { dir.to_path_buf() };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&root)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_file() && is_frame_file(p))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::MissingData(format!("no .pgm or .png frames in {}", root.display())));
    }
    Ok(paths)
}

pub fn load_frames(dir: &Path) -> Result<Vec<Frame>> {
    let frames = frame_paths(dir)?
        .par_iter()
        .enumerate()
        .map(|(t, p)| read_frame(p, t as i64))
        .collect::<Result<Vec<_>>>()?;
    if frames.iter().any(|f| !f.same_shape(&frames[0])) {
        return Err(Error::DimensionMismatch(format!("frames in {} differ in size", dir.display())));
    }
    Ok(frames)
}

/// The single `*.homographies.txt` file in `dir`.
pub fn find_sidecar(dir: &Path) -> Result<PathBuf> {
    let mut found: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(".homographies.txt")))
        .collect();
    found.sort();
    match found.len() {
        1 => Ok(found.remove(0)),
        0 => Err(Error::MissingData(format!("no homography sidecar in {}", dir.display()))),
        _ => Err(Error::InvalidArgument(format!("several homography sidecars in {}", dir.display()))),
    }
}

/// `h_t^{t-1}` for every frame, entry 0 the identity. Pairs are
/// independent and estimated in parallel.
pub fn estimate_homographies(frames: &[Frame], mode: RegistrationMode, p: &RegistrationParams) -> Result<Vec<Homography>> {
    let mut hs = vec![Homography::identity()];
    hs.extend(
        (1..frames.len())
            .into_par_iter()
            .map(|t| register_pair(&frames[t - 1], &frames[t], mode, p))
            .collect::<Result<Vec<_>>>()?,
    );
    Ok(hs)
}

#[derive(Clone, Debug)]
pub struct Video {
    pub frames: Vec<Frame>,
    pub homographies: Vec<Homography>,
}

impl Video {
    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }
}

/// Frames of `dir` with transforms read from its sidecar (`Truth`) or
/// estimated.
pub fn load_video(dir: &Path, mode: RegistrationMode, p: &RegistrationParams) -> Result<Video> {
    let frames = load_frames(dir)?;
    let homographies = match mode {
        RegistrationMode::Truth => {
            let hs = read_homographies(&find_sidecar(dir)?)?;
            if hs.len() != frames.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} frames but {} sidecar transforms",
                    frames.len(),
                    hs.len()
                )));
            }
            hs
        }
        _ => estimate_homographies(&frames, mode, p)?,
    };
    Ok(Video { frames, homographies })
}

/// Where window scores come from for a whole video.
#[derive(Clone, Copy, Debug)]
pub enum GateSource<'a> {
    Network(&'a Network<f32>),
    /// Ground truth of the video, scored per frame.
    Oracle(&'a [GtPoint]),
}

fn truth_points(gt: &[GtPoint]) -> BTreeMap<usize, Vec<(f64, f64)>> {
    by_frame(gt, |g| g.frame)
        .into_iter()
        .map(|(f, v)| (f, v.iter().map(|g| (g.x, g.y)).collect()))
        .collect()
}

/// Evidence for every frame after the warm-up, computed in parallel.
pub fn video_evidence(
    video: &Video,
    gate: GateSource,
    sub: &SubtractionConfig,
    cfg: &DetectorConfig,
) -> Result<Vec<FrameEvidence>> {
    video_evidence_then(video, gate, sub, cfg, Ok)
}

/// Detector output of one frame with its foreground mask.
#[derive(Clone, Debug)]
pub struct FrameResult {
    pub frame: usize,
    pub foreground: BinaryMask,
    pub output: FrameDetections,
}

/// Per-frame detector output for every frame after the warm-up.
pub fn detect_video_frames(
    video: &Video,
    gate: GateSource,
    regressor: Option<&Network<f32>>,
    sub: &SubtractionConfig,
    cfg: &DetectorConfig,
) -> Result<Vec<FrameResult>> {
    if video.frames.len() != video.homographies.len() {
        return Err(Error::DimensionMismatch("one transform per frame required".into()));
    }
    video_evidence_then(video, gate, sub, cfg, |ev| {
        let output = finish_frame(&ev, cfg.phi, regressor, cfg)?;
        Ok(FrameResult {
            frame: ev.frame,
            foreground: ev.foreground,
            output,
        })
    })
}

/// Detections of every frame, in frame order.
pub fn detect_video(
    video: &Video,
    gate: GateSource,
    regressor: Option<&Network<f32>>,
    sub: &SubtractionConfig,
    cfg: &DetectorConfig,
) -> Result<Vec<Detection>> {
    let frames = detect_video_frames(video, gate, regressor, sub, cfg)?;
    Ok(frames.into_iter().flat_map(|f| f.output.detections).collect())
}

/// Applies `f` to each frame's evidence as soon as it exists, so the
/// aligned stacks of the whole video need not be held together.
fn video_evidence_then<T: Send>(
    video: &Video,
    gate: GateSource,
    sub: &SubtractionConfig,
    cfg: &DetectorConfig,
    f: impl Fn(FrameEvidence) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let truth = match gate {
        GateSource::Oracle(gt) => truth_points(gt),
        GateSource::Network(_) => BTreeMap::new(),
    };
    let none = Vec::new();
    let warm = cfg.warmup(sub);
    (warm..video.frames.len())
        .into_par_iter()
        .map(|t| {
            let g = match gate {
                GateSource::Network(net) => Gate::Network(net),
                GateSource::Oracle(_) => Gate::Oracle {
                    truth: truth.get(&t).unwrap_or(&none),
                    radius: cfg.oracle_radius,
                },
            };
            let chain = chain_at(&video.homographies, t, warm);
            let history = history_at(&video.frames, t, warm);
            f(frame_evidence(&video.frames[t], &history, &chain, &g, sub, cfg)?)
        })
        .collect()
}
