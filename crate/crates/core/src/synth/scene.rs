use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registration::Homography;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    /// Metres per pixel.
    #[serde(default = "default_gsd")]
    pub gsd: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Lattice spacing of the background value noise, pixels.
    #[serde(default = "default_cell")]
    pub texture_cell: f64,
    #[serde(default)]
    pub roads: Vec<Road>,
    #[serde(default)]
    pub vehicles: Vec<Vehicle>,
    #[serde(default)]
    pub camera: CameraSpec,
    #[serde(default)]
    pub tiles: Vec<Tile>,
    #[serde(default)]
    pub decoys: Vec<Decoy>,
}

fn default_gsd() -> f64 {
    0.25
}

fn default_cell() -> f64 {
    24.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Road {
    pub points: Vec<[f64; 2]>,
    pub width: f64,
    pub intensity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vehicle {
    pub id: u64,
    /// Length along the direction of travel, then width; pixels.
    pub size: [f64; 2],
    pub intensity: f64,
    /// Path in scene pixels.
    pub waypoints: Vec<[f64; 2]>,
    /// `[from_frame, speed]` pairs, speed in metres per frame, piecewise
    /// constant from each frame on.
    pub schedule: Vec<(usize, f64)>,
    /// First frame the vehicle is present; it leaves at the end of its path.
    #[serde(default)]
    pub start_frame: usize,
    /// Arc length already travelled at `start_frame`, pixels.
    #[serde(default)]
    pub start_offset: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraMode {
    #[default]
    Static,
    /// Constant translation per frame.
    Drift,
    /// Independent random similarity per frame.
    Shaky,
    /// One scene-to-frame matrix per frame.
    Explicit,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    #[serde(default)]
    pub mode: CameraMode,
    /// Drift, pixels per frame.
    #[serde(default)]
    pub velocity: Option<[f64; 2]>,
    /// Shaky: maximum translation (pixels), rotation (radians) and
    /// relative scale change.
    #[serde(default)]
    pub translation: Option<f64>,
    #[serde(default)]
    pub rotation: Option<f64>,
    #[serde(default)]
    pub scale: Option<f64>,
    /// Explicit: 9 row-major values per frame.
    #[serde(default)]
    pub matrices: Option<Vec<Vec<f64>>>,
}

/// Sensor region of the output frame with brightness steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tile {
    /// x, y, width, height in frame pixels.
    pub rect: [usize; 4],
    /// `[first_frame, last_frame, delta]`, inclusive.
    pub offsets: Vec<(usize, usize, f64)>,
}

/// Static high-contrast rectangle whose rendered position jitters each
/// frame; stands in for parallax of tall structures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decoy {
    pub center: [f64; 2],
    pub size: [f64; 2],
    pub intensity: f64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_jitter() -> f64 {
    1.0
}

fn bad(msg: String) -> Error {
    Error::InvalidScene(msg)
}

impl SceneSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SceneSpec = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene spec serialises")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::MissingData(format!("cannot read scene {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 32 || self.height < 32 {
            return Err(bad(format!("canvas {}x{} is below 32x32", self.width, self.height)));
        }
        if self.frames == 0 {
            return Err(bad("frames must be at least 1".into()));
        }
        if !(self.gsd > 0.0 && self.gsd.is_finite()) {
            return Err(bad(format!("gsd must be positive, got {}", self.gsd)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(self.texture_cell >= 2.0) {
            return Err(bad(format!("texture_cell must be >= 2, got {}", self.texture_cell)));
        }
        let inside = |p: &[f64; 2]| {
            p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= (self.width - 1) as f64 && p[1] <= (self.height - 1) as f64
        };
        for (i, r) in self.roads.iter().enumerate() {
            if r.points.len() < 2 || !(r.width > 0.0) {
                return Err(bad(format!("road {i} needs >= 2 points and positive width")));
            }
        }
        let mut ids = std::collections::BTreeSet::new();
        for v in &self.vehicles {
            if !ids.insert(v.id) {
                return Err(bad(format!("duplicate vehicle id {}", v.id)));
            }
            if v.waypoints.len() < 2 {
                return Err(bad(format!("vehicle {} needs >= 2 waypoints", v.id)));
            }
            if let Some(p) = v.waypoints.iter().find(|p| !inside(p)) {
                return Err(bad(format!("vehicle {} waypoint {:?} outside canvas", v.id, p)));
            }
            if !(v.size[0] > 0.0 && v.size[1] > 0.0) {
                return Err(bad(format!("vehicle {} size must be positive", v.id)));
            }
            if v.schedule.is_empty() || v.schedule[0].0 > v.start_frame {
                return Err(bad(format!("vehicle {} schedule must start at or before its first frame", v.id)));
            }
            if v.schedule.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(bad(format!("vehicle {} schedule frames must increase", v.id)));
            }
            if v.schedule.iter().any(|s| !(s.1 >= 0.0 && s.1.is_finite())) {
                return Err(bad(format!("vehicle {} speeds must be finite and >= 0", v.id)));
            }
            if !(v.start_offset >= 0.0) {
                return Err(bad(format!("vehicle {} start_offset must be >= 0", v.id)));
            }
        }
        for (i, t) in self.tiles.iter().enumerate() {
            let [x, y, w, h] = t.rect;
            if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
                return Err(bad(format!("tile {i} rectangle {:?} outside frame", t.rect)));
            }
            if t.offsets.iter().any(|o| o.0 > o.1 || !o.2.is_finite()) {
                return Err(bad(format!("tile {i} offsets need first <= last and finite deltas")));
            }
        }
        for (i, d) in self.decoys.iter().enumerate() {
            if !inside(&d.center) || !(d.size[0] > 0.0 && d.size[1] > 0.0) || !(d.jitter >= 0.0) {
                return Err(bad(format!("decoy {i} must lie inside the canvas with positive size")));
            }
        }
        self.check_camera()
    }

    fn check_camera(&self) -> Result<()> {
        let c = &self.camera;
        let stray = |present: bool, field: &str| {
            if present {
                Err(bad(format!("camera field {field} does not apply to mode {:?}", c.mode)))
            } else {
                Ok(())
            }
        };
        let shaky_fields = c.translation.is_some() || c.rotation.is_some() || c.scale.is_some();
        match c.mode {
            CameraMode::Static => {
                stray(c.velocity.is_some(), "velocity")?;
                stray(shaky_fields, "translation/rotation/scale")?;
                stray(c.matrices.is_some(), "matrices")
            }
            CameraMode::Drift => {
                stray(shaky_fields, "translation/rotation/scale")?;
                stray(c.matrices.is_some(), "matrices")?;
                match c.velocity {
                    Some(v) if v.iter().all(|x| x.is_finite()) => Ok(()),
                    _ => Err(bad("drift camera needs a finite velocity".into())),
                }
            }
            CameraMode::Shaky => {
                stray(c.velocity.is_some(), "velocity")?;
                stray(c.matrices.is_some(), "matrices")?;
                let ok = |v: Option<f64>| v.is_none_or(|x| x >= 0.0 && x.is_finite());
                if !(ok(c.translation) && ok(c.rotation) && ok(c.scale)) || c.scale.unwrap_or(0.0) >= 0.5 {
                    return Err(bad("shaky camera amplitudes must be >= 0 (scale < 0.5)".into()));
                }
                Ok(())
            }
            CameraMode::Explicit => {
                stray(c.velocity.is_some(), "velocity")?;
                stray(shaky_fields, "translation/rotation/scale")?;
                let m = c
                    .matrices
                    .as_ref()
                    .ok_or_else(|| bad("explicit camera needs matrices".into()))?;
                if m.len() != self.frames {
                    return Err(bad(format!(
                        "explicit camera has {} matrices for {} frames",
                        m.len(),
                        self.frames
                    )));
                }
                for (i, row) in m.iter().enumerate() {
                    Homography::from_slice(row).map_err(|e| bad(format!("camera matrix {i}: {e}")))?;
                }
                Ok(())
            }
        }
    }
}
