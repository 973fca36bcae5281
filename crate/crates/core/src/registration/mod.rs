//! Frame-to-frame projective registration and transform chaining.

mod chain;
mod direct;
mod features;
mod homography;
mod ransac;
mod warp;

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

pub use chain::TransformChain;
pub use direct::{align_direct, downsample, DirectAlignment};
pub use features::{
    describe, detect_corners, harris_response, match_descriptors, Corner, Feature,
};
pub use homography::Homography;
pub use ransac::{dlt, estimate_homography_ransac, PointPair};
pub use warp::{warp_frame, warp_frame_masked};

use crate::error::{Error, Result};
use crate::imgcore::Frame;

pub const MIN_CORNERS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegistrationMode {
    Feature,
    Direct,
    /// Read transforms from a sidecar instead of estimating them.
    Truth,
}

impl FromStr for RegistrationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feature" => Ok(Self::Feature),
            "direct" => Ok(Self::Direct),
            "truth" => Ok(Self::Truth),
            _ => Err(Error::InvalidArgument(format!("unknown registration mode {s:?}"))),
        }
    }
}

impl fmt::Display for RegistrationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Feature => "feature",
            Self::Direct => "direct",
            Self::Truth => "truth",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegistrationParams {
    pub max_corners: usize,
    pub ransac_iterations: usize,
    pub inlier_tol: f64,
    pub pyramid_levels: usize,
    pub seed: u64,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        Self {
            max_corners: 500,
            ransac_iterations: 1000,
            inlier_tol: 2.0,
            pyramid_levels: 4,
            seed: 0,
        }
    }
}

/// Feature-based estimate of the transform taking `prev` into `curr`.
pub fn register_features(prev: &Frame, curr: &Frame, p: &RegistrationParams) -> Result<Homography> {
    let ca = detect_corners(prev, p.max_corners)?;
    let cb = detect_corners(curr, p.max_corners)?;
    if ca.len() < MIN_CORNERS || cb.len() < MIN_CORNERS {
        return Err(Error::Degenerate(format!(
            "too few corners ({} and {})",
            ca.len(),
            cb.len()
        )));
    }
    let (fa, fb) = (describe(prev, &ca), describe(curr, &cb));
    let matches = match_descriptors(&fa, &fb)?;
    let pairs: Vec<PointPair> = matches
        .iter()
        .map(|&(i, j)| ((fa[i].x, fa[i].y), (fb[j].x, fb[j].y)))
        .collect();
    let (h, _) = estimate_homography_ransac(&pairs, p.ransac_iterations, p.inlier_tol, p.seed)?;
    Ok(h)
}

/// Estimates `h_t^{t-1}` with the requested method. Direct alignment that
/// fails to converge falls back to the feature path.
pub fn register_pair(
    prev: &Frame,
    curr: &Frame,
    mode: RegistrationMode,
    p: &RegistrationParams,
) -> Result<Homography> {
    match mode {
        RegistrationMode::Feature => register_features(prev, curr, p),
        RegistrationMode::Direct => {
            let out = align_direct(prev, curr, &Homography::identity(), p.pyramid_levels)?;
            if out.converged {
                Ok(out.homography)
            } else {
                register_features(prev, curr, p).map_err(|e| {
                    Error::Degenerate(format!("direct alignment diverged; feature fallback: {e}"))
                })
            }
        }
        RegistrationMode::Truth => Err(Error::InvalidArgument(
            "truth registration reads a sidecar; nothing to estimate".into(),
        )),
    }
}

/// Writes one homography per line, 9 row-major values.
pub fn write_homographies(path: &Path, hs: &[Homography]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for h in hs {
        writeln!(w, "{h}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_homographies(path: &Path) -> Result<Vec<Homography>> {
    let r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(|s| s.parse::<f64>()).collect();
        let vals = vals.map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
        out.push(
            Homography::from_slice(&vals).map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}

/// Sidecar path `<stem>.homographies.txt` in `dir`.
pub fn sidecar_path(dir: &Path, stem: &str) -> std::path::PathBuf {
    dir.join(format!("{stem}.homographies.txt"))
}
