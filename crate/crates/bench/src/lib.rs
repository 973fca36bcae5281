//! Shared fixtures for the benchmarks.

use wami_core::pipeline::Video;
use wami_core::records::GtPoint;
use wami_core::synth::{preset, render_video};

/// A rendered preset with its true transforms.
pub fn preset_video(name: &str, frames: usize) -> (Video, Vec<GtPoint>) {
    let mut spec = preset(name, 1).expect("known preset");
    spec.frames = frames;
    let out = render_video(&spec).expect("preset renders");
    (
        Video {
            frames: out.frames,
            homographies: out.truth,
        },
        out.gt,
    )
}
