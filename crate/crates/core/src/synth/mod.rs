//! Deterministic synthetic aerial video with ground truth and true
//! inter-frame homographies.

pub mod presets;
pub mod render;
pub mod scene;
pub mod texture;

#[cfg(test)]
mod tests;

pub use presets::{preset, preset_scenes, PRESET_NAMES};
pub use render::{render_video, vehicle_state, write_output, SynthOutput};
pub use scene::{CameraMode, CameraSpec, Decoy, Road, SceneSpec, Tile, Vehicle};
