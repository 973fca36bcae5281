//! Named scenes on a 320x256 canvas, 50 frames, 9x6 px vehicles.

use super::scene::{CameraMode, CameraSpec, Decoy, Road, SceneSpec, Tile, Vehicle};
use crate::error::{Error, Result};

pub const PRESET_NAMES: [&str; 6] = ["clean", "dense", "stopgo", "flicker", "parallax", "unstable-camera"];

const W: usize = 320;
const H: usize = 256;
const FRAMES: usize = 50;
const SIZE: [f64; 2] = [9.0, 6.0];
const ROAD: f64 = 85.0;
const BRIGHT: f64 = 150.0;
const DARK: f64 = 30.0;
/// Loop road corners, clockwise in image coordinates.
const LOOP: [[f64; 2]; 4] = [[40.0, 40.0], [280.0, 40.0], [280.0, 216.0], [40.0, 216.0]];
const LOOP_LEN: f64 = 2.0 * (240.0 + 176.0);

/// Loop centreline moved `o` px outward, starting at the top-left corner,
/// repeated `laps` times; reversed for anticlockwise travel.
fn loop_path(o: f64, laps: usize, clockwise: bool) -> Vec<[f64; 2]> {
    let c = [
        [LOOP[0][0] - o, LOOP[0][1] - o],
        [LOOP[1][0] + o, LOOP[1][1] - o],
        [LOOP[2][0] + o, LOOP[2][1] + o],
        [LOOP[3][0] - o, LOOP[3][1] + o],
    ];
    let mut p = vec![c[0]];
    for _ in 0..laps {
        if clockwise {
            p.extend([c[1], c[2], c[3], c[0]]);
        } else {
            p.extend([c[3], c[2], c[1], c[0]]);
        }
    }
    p
}

fn shuttle(a: [f64; 2], b: [f64; 2], trips: usize) -> Vec<[f64; 2]> {
    let mut p = vec![a];
    for i in 0..trips {
        p.push(if i % 2 == 0 { b } else { a });
    }
    p
}

fn vehicle(id: u64, intensity: f64, waypoints: Vec<[f64; 2]>, speed: f64, offset: f64) -> Vehicle {
    Vehicle {
        id,
        size: SIZE,
        intensity,
        waypoints,
        schedule: vec![(0, speed)],
        start_frame: 0,
        start_offset: offset,
    }
}

fn road(points: Vec<[f64; 2]>, width: f64) -> Road {
    Road {
        points,
        width,
        intensity: ROAD,
    }
}

fn base(name: &str, seed: u64) -> SceneSpec {
    SceneSpec {
        name: name.to_string(),
        width: W,
        height: H,
        frames: FRAMES,
        seed,
        gsd: 0.25,
        noise_sigma: 1.5,
        texture_cell: 24.0,
        roads: vec![
            road(loop_path(0.0, 1, true), 18.0),
            road(vec![[70.0, 100.0], [250.0, 100.0]], 28.0),
            road(vec![[70.0, 156.0], [250.0, 156.0]], 28.0),
            road(vec![[70.0, 100.0], [70.0, 156.0]], 18.0),
            road(vec![[250.0, 100.0], [250.0, 156.0]], 18.0),
        ],
        vehicles: Vec::new(),
        camera: CameraSpec::default(),
        tiles: Vec::new(),
        decoys: Vec::new(),
    }
}

/// Inner ring through both inner roads, anticlockwise.
fn inner_ring(laps: usize) -> Vec<[f64; 2]> {
    let mut p = vec![[70.0, 100.0]];
    for _ in 0..laps {
        p.extend([[70.0, 156.0], [250.0, 156.0], [250.0, 100.0], [70.0, 100.0]]);
    }
    p
}

const INNER_LEN: f64 = 2.0 * (180.0 + 56.0);

/// Five vehicles that never come within 30 px of each other and never
/// reverse: three on the loop a third of a lap apart, two half a lap apart
/// on the inner ring.
fn clean_vehicles() -> Vec<Vehicle> {
    let lap = loop_path(0.0, 2, true);
    vec![
        vehicle(1, BRIGHT, lap.clone(), 2.0, 0.0),
        vehicle(2, DARK, lap.clone(), 2.0, LOOP_LEN / 3.0),
        vehicle(3, BRIGHT, lap, 2.0, 2.0 * LOOP_LEN / 3.0),
        vehicle(4, DARK, inner_ring(2), 2.0, 30.0),
        vehicle(5, BRIGHT, inner_ring(2), 2.0, 30.0 + INNER_LEN / 2.0),
    ]
}

pub fn clean(seed: u64) -> SceneSpec {
    SceneSpec {
        vehicles: clean_vehicles(),
        ..base("clean", seed)
    }
}

/// Twenty vehicles: opposing loop lanes 8 px apart, and side-by-side
/// pairs 6.5 px apart drifting past each other on the inner roads.
pub fn dense(seed: u64) -> SceneSpec {
    let mut v = Vec::new();
    let mut id = 1;
    let cw = loop_path(-4.0, 2, true);
    let ccw = loop_path(4.0, 2, false);
    for k in 0..6 {
        let off = k as f64 * LOOP_LEN / 6.0;
        v.push(vehicle(id, if k % 2 == 0 { BRIGHT } else { DARK }, cw.clone(), 2.0, off));
        id += 1;
        v.push(vehicle(id, if k % 2 == 0 { DARK } else { BRIGHT }, ccw.clone(), 1.75, off + 60.0));
        id += 1;
    }
    // Inner roads carry four lanes 6.5 px apart: two eastbound, two westbound.
    for yc in [100.0, 156.0] {
        for (lane, east, fast) in [(-9.75, true, true), (-3.25, true, false), (3.25, false, true), (9.75, false, false)] {
            let (a, b) = ([70.0, yc + lane], [250.0, yc + lane]);
            let path = if east { shuttle(a, b, 3) } else { shuttle(b, a, 3) };
            let speed = if fast { 2.0 } else { 1.75 };
            v.push(vehicle(id, if fast { BRIGHT } else { DARK }, path, speed, 0.0));
            id += 1;
        }
    }
    SceneSpec {
        vehicles: v,
        ..base("dense", seed)
    }
}

/// The clean layout with halts and crawling phases below 0.8 m/frame.
pub fn stopgo(seed: u64) -> SceneSpec {
    let mut v = clean_vehicles();
    v[0].schedule = vec![(0, 2.0), (12, 0.0), (24, 2.0)];
    v[1].schedule = vec![(0, 2.0), (20, 0.5), (32, 2.0)];
    v[3].schedule = vec![(0, 2.0), (8, 0.0), (18, 2.0), (35, 0.0)];
    v[4].schedule = vec![(0, 0.0), (10, 2.0)];
    SceneSpec {
        vehicles: v,
        ..base("stopgo", seed)
    }
}

/// Clean layout with brightness steps on four sensor tiles.
pub fn flicker(seed: u64) -> SceneSpec {
    let (tw, th) = (W / 2, H / 2);
    SceneSpec {
        vehicles: clean_vehicles(),
        tiles: vec![
            Tile {
                rect: [0, 0, tw, th],
                offsets: vec![(10, 20, 12.0)],
            },
            Tile {
                rect: [tw, 0, tw, th],
                offsets: vec![(25, 35, -10.0)],
            },
            Tile {
                rect: [0, th, tw, th],
                offsets: vec![(5, 12, 10.0), (30, 40, 10.0)],
            },
            Tile {
                rect: [tw, th, tw, th],
                offsets: vec![(18, 28, -12.0)],
            },
        ],
        ..base("flicker", seed)
    }
}

/// Clean layout with twelve high-contrast static structures off the roads.
pub fn parallax(seed: u64) -> SceneSpec {
    let spots = [
        [15.0, 15.0],
        [160.0, 15.0],
        [305.0, 15.0],
        [15.0, 128.0],
        [305.0, 128.0],
        [15.0, 240.0],
        [160.0, 240.0],
        [305.0, 240.0],
        [100.0, 70.0],
        [220.0, 70.0],
        [100.0, 186.0],
        [220.0, 186.0],
    ];
    SceneSpec {
        vehicles: clean_vehicles(),
        decoys: spots
            .iter()
            .enumerate()
            .map(|(i, &c)| Decoy {
                center: c,
                size: [7.0, 7.0],
                intensity: if i % 2 == 0 { 250.0 } else { 5.0 },
                jitter: 2.0,
            })
            .collect(),
        ..base("parallax", seed)
    }
}

/// Clean layout seen by a camera with independent random similarity
/// motion per frame.
pub fn unstable_camera(seed: u64) -> SceneSpec {
    SceneSpec {
        vehicles: clean_vehicles(),
        camera: CameraSpec {
            mode: CameraMode::Shaky,
            translation: Some(6.0),
            rotation: Some(0.02),
            scale: Some(0.015),
            ..CameraSpec::default()
        },
        ..base("unstable-camera", seed)
    }
}

pub fn preset(name: &str, seed: u64) -> Result<SceneSpec> {
    match name {
        "clean" => Ok(clean(seed)),
        "dense" => Ok(dense(seed)),
        "stopgo" => Ok(stopgo(seed)),
        "flicker" => Ok(flicker(seed)),
        "parallax" => Ok(parallax(seed)),
        "unstable-camera" => Ok(unstable_camera(seed)),
        _ => Err(Error::InvalidArgument(format!(
            "unknown preset {name:?}; expected one of {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}

pub fn preset_scenes(seed: u64) -> Vec<SceneSpec> {
    PRESET_NAMES.iter().map(|n| preset(n, seed).unwrap()).collect()
}
