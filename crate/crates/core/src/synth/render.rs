use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::scene::{CameraMode, SceneSpec, Vehicle};
use super::texture::value_noise;
use crate::error::Result;
use crate::imgcore::Frame;
use crate::records::{write_gt, GtPoint};
use crate::registration::{sidecar_path, write_homographies, Homography};

/// Background is generated this far beyond the canvas on every side so
/// camera motion keeps sampling texture.
pub const MARGIN: usize = 64;
const SUBSAMPLES: usize = 4;
const NOISE_STREAM: u64 = 1 << 40;
const DECOY_STREAM: u64 = 2 << 40;
const CAMERA_STREAM: u64 = 3 << 40;

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub frames: Vec<Frame>,
    pub gt: Vec<GtPoint>,
    /// Scene-to-frame mapping `C_t` per frame.
    pub cameras: Vec<Homography>,
    /// `h_t^{t-1} = C_t C_{t-1}^-1`; entry 0 is the identity.
    pub truth: Vec<Homography>,
}

/// Position (scene pixels) and unit heading of a vehicle at frame `t`, or
/// `None` before it starts or after it has left its path.
pub fn vehicle_state(v: &Vehicle, gsd: f64, t: usize) -> Option<((f64, f64), (f64, f64))> {
    if t < v.start_frame {
        return None;
    }
    let mut s = v.start_offset;
    for k in v.start_frame..t {
        s += speed_at(v, k) / gsd;
    }
    point_at(&v.waypoints, s)
}

fn speed_at(v: &Vehicle, frame: usize) -> f64 {
    v.schedule
        .iter()
        .rev()
        .find(|(from, _)| *from <= frame)
        .map(|s| s.1)
        .unwrap_or(0.0)
}

fn point_at(path: &[[f64; 2]], mut s: f64) -> Option<((f64, f64), (f64, f64))> {
    for w in path.windows(2) {
        let (dx, dy) = (w[1][0] - w[0][0], w[1][1] - w[0][1]);
        let len = dx.hypot(dy);
        if len == 0.0 {
            continue;
        }
        if s < len {
            let u = (dx / len, dy / len);
            return Some(((w[0][0] + u.0 * s, w[0][1] + u.1 * s), u));
        }
        s -= len;
    }
    // Exactly at the end still counts as on the path.
    if s <= 1e-9 {
        let n = path.len();
        let (dx, dy) = (path[n - 1][0] - path[n - 2][0], path[n - 1][1] - path[n - 2][1]);
        let len = dx.hypot(dy).max(f64::MIN_POSITIVE);
        return Some(((path[n - 1][0], path[n - 1][1]), (dx / len, dy / len)));
    }
    None
}

pub fn camera_path(spec: &SceneSpec) -> Result<Vec<Homography>> {
    let c = &spec.camera;
    let center = (spec.width as f64 / 2.0, spec.height as f64 / 2.0);
    (0..spec.frames)
        .map(|t| {
            Ok(match c.mode {
                CameraMode::Static => Homography::identity(),
                CameraMode::Drift => {
                    let v = c.velocity.unwrap_or([0.0, 0.0]);
                    Homography::translation(v[0] * t as f64, v[1] * t as f64)
                }
                CameraMode::Shaky => {
                    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                    rng.set_stream(CAMERA_STREAM + t as u64);
                    let tr = c.translation.unwrap_or(0.0);
                    let rot = c.rotation.unwrap_or(0.0);
                    let sc = c.scale.unwrap_or(0.0);
                    let mut u = |a: f64| if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 };
                    let angle = u(rot);
                    let scale = 1.0 + u(sc);
                    let shift = (u(tr), u(tr));
                    Homography::similarity(center, angle, scale, shift)
                }
                CameraMode::Explicit => Homography::from_slice(&c.matrices.as_ref().unwrap()[t])?,
            })
        })
        .collect()
}

fn seg_distance(p: (f64, f64), a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let l2 = dx * dx + dy * dy;
    let t = if l2 > 0.0 {
        (((p.0 - a[0]) * dx + (p.1 - a[1]) * dy) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - a[0] - t * dx).hypot(p.1 - a[1] - t * dy)
}

/// Scene background (texture and roads) including the margin; scene
/// point `(x, y)` sits at pixel `(x + MARGIN, y + MARGIN)`.
pub fn scene_background(spec: &SceneSpec) -> Frame {
    let (w, h) = (spec.width + 2 * MARGIN, spec.height + 2 * MARGIN);
    let mut bg = value_noise(w, h, spec.texture_cell, spec.seed);
    let m = MARGIN as f64;
    bg.pixels_mut().par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, v) in row.iter_mut().enumerate() {
            let p = (x as f64 - m, y as f64 - m);
            for road in &spec.roads {
                let d = road
                    .points
                    .windows(2)
                    .map(|s| seg_distance(p, s[0], s[1]))
                    .fold(f64::INFINITY, f64::min);
                let a = (road.width / 2.0 + 0.5 - d).clamp(0.0, 1.0);
                if a > 0.0 {
                    let surface = road.intensity + 0.15 * (*v - 120.0);
                    *v = (1.0 - a) * *v + a * surface;
                }
            }
        }
    });
    bg
}

/// Axis-aligned or oriented rectangle in scene coordinates.
struct Shape {
    center: (f64, f64),
    axis: (f64, f64),
    half: (f64, f64),
    intensity: f64,
}

impl Shape {
    fn contains(&self, q: (f64, f64)) -> bool {
        let (dx, dy) = (q.0 - self.center.0, q.1 - self.center.1);
        let along = dx * self.axis.0 + dy * self.axis.1;
        let across = -dx * self.axis.1 + dy * self.axis.0;
        along.abs() <= self.half.0 && across.abs() <= self.half.1
    }

    fn corners(&self) -> [(f64, f64); 4] {
        let (ux, uy) = self.axis;
        let (a, b) = self.half;
        let c = self.center;
        [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
            .map(|(s, t)| (c.0 + s * a * ux - t * b * uy, c.1 + s * a * uy + t * b * ux))
    }

    /// Blends the shape into `frame` with `SUBSAMPLES^2` coverage samples
    /// per pixel; `camera` maps scene to frame.
    fn draw(&self, frame: &mut Frame, camera: &Homography, inv: &Homography) {
        let pts = self.corners().map(|p| camera.apply(p));
        let x0 = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).floor() as i64 - 1;
        let x1 = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).ceil() as i64 + 1;
        let y0 = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor() as i64 - 1;
        let y1 = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil() as i64 + 1;
        let (w, h) = (frame.width() as i64, frame.height() as i64);
        let step = 1.0 / SUBSAMPLES as f64;
        let total = (SUBSAMPLES * SUBSAMPLES) as f64;
        for y in y0.max(0)..=y1.min(h - 1) {
            for x in x0.max(0)..=x1.min(w - 1) {
                let mut hits = 0usize;
                for j in 0..SUBSAMPLES {
                    for i in 0..SUBSAMPLES {
                        let fx = x as f64 - 0.5 + (i as f64 + 0.5) * step;
                        let fy = y as f64 - 0.5 + (j as f64 + 0.5) * step;
                        if self.contains(inv.apply((fx, fy))) {
                            hits += 1;
                        }
                    }
                }
                if hits > 0 {
                    let a = hits as f64 / total;
                    let (ux, uy) = (x as usize, y as usize);
                    let v = frame.get(ux, uy);
                    frame.set(ux, uy, (1.0 - a) * v + a * self.intensity);
                }
            }
        }
    }
}

fn render_frame(spec: &SceneSpec, bg: &Frame, camera: &Homography, t: usize) -> Result<Frame> {
    let inv = camera.inverse()?;
    let m = MARGIN as f64;
    let (bw, bh) = ((bg.width() - 1) as f64, (bg.height() - 1) as f64);
    let mut frame = Frame::filled(spec.width, spec.height, 0.0).with_index(t as i64);
    let w = spec.width;
    frame.pixels_mut().chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, v) in row.iter_mut().enumerate() {
            let (sx, sy) = inv.apply((x as f64, y as f64));
            let (bx, by) = ((sx + m).clamp(0.0, bw), (sy + m).clamp(0.0, bh));
            *v = bg.bilinear(bx, by).expect("clamped inside");
        }
    });

    let mut jitter = ChaCha8Rng::seed_from_u64(spec.seed);
    jitter.set_stream(DECOY_STREAM + t as u64);
    for d in &spec.decoys {
        let mut off = |a: f64| if a > 0.0 { jitter.gen_range(-a..=a) } else { 0.0 };
        let (ox, oy) = (off(d.jitter), off(d.jitter));
        Shape {
            center: (d.center[0] + ox, d.center[1] + oy),
            axis: (1.0, 0.0),
            half: (d.size[0] / 2.0, d.size[1] / 2.0),
            intensity: d.intensity,
        }
        .draw(&mut frame, camera, &inv);
    }

    let mut vehicles: Vec<&Vehicle> = spec.vehicles.iter().collect();
    vehicles.sort_by_key(|v| v.id);
    for v in vehicles {
        if let Some((c, u)) = vehicle_state(v, spec.gsd, t) {
            Shape {
                center: c,
                axis: u,
                half: (v.size[0] / 2.0, v.size[1] / 2.0),
                intensity: v.intensity,
            }
            .draw(&mut frame, camera, &inv);
        }
    }

    for tile in &spec.tiles {
        let delta: f64 = tile
            .offsets
            .iter()
            .filter(|o| o.0 <= t && t <= o.1)
            .map(|o| o.2)
            .sum();
        if delta != 0.0 {
            let [x0, y0, tw, th] = tile.rect;
            for y in y0..y0 + th {
                for x in x0..x0 + tw {
                    frame.set(x, y, frame.get(x, y) + delta);
                }
            }
        }
    }

    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(NOISE_STREAM + t as u64);
        let n = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
        for v in frame.pixels_mut() {
            *v += n.sample(&mut rng);
        }
    }
    for v in frame.pixels_mut() {
        *v = v.round().clamp(0.0, 255.0);
    }
    Ok(frame)
}

/// Ground truth of every vehicle whose centre is inside the frame.
pub fn ground_truth(spec: &SceneSpec, cameras: &[Homography]) -> Vec<GtPoint> {
    let mut vehicles: Vec<&Vehicle> = spec.vehicles.iter().collect();
    vehicles.sort_by_key(|v| v.id);
    let (w, h) = ((spec.width - 1) as f64, (spec.height - 1) as f64);
    let mut gt = Vec::new();
    for (t, cam) in cameras.iter().enumerate() {
        for v in &vehicles {
            if let Some((c, _)) = vehicle_state(v, spec.gsd, t) {
                let (x, y) = cam.apply(c);
                if (0.0..=w).contains(&x) && (0.0..=h).contains(&y) {
                    gt.push(GtPoint {
                        frame: t,
                        id: v.id,
                        x,
                        y,
                        world: Some((c.0 * spec.gsd, c.1 * spec.gsd)),
                    });
                }
            }
        }
    }
    gt
}

/// Renders every frame; frames are independent and rendered in parallel
/// with per-frame random streams.
pub fn render_video(spec: &SceneSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let cameras = camera_path(spec)?;
    let bg = scene_background(spec);
    let frames = cameras
        .par_iter()
        .enumerate()
        .map(|(t, cam)| render_frame(spec, &bg, cam, t))
        .collect::<Result<Vec<_>>>()?;
    let mut truth = vec![Homography::identity()];
    for t in 1..cameras.len() {
        truth.push(cameras[t].compose(&cameras[t - 1].inverse()?));
    }
    let gt = ground_truth(spec, &cameras);
    Ok(SynthOutput {
        frames,
        gt,
        cameras,
        truth,
    })
}

/// `frames/frame_00000.pgm`, `gt.csv`, `<name>.homographies.txt` and the
/// scene description `scene.toml`.
pub fn write_output(spec: &SceneSpec, out: &SynthOutput, dir: &Path) -> Result<()> {
    let fdir = dir.join("frames");
    std::fs::create_dir_all(&fdir)?;
    for (t, f) in out.frames.iter().enumerate() {
        crate::imgcore::io::write_frame(&fdir.join(format!("frame_{t:05}.pgm")), f)?;
    }
    write_gt(&dir.join("gt.csv"), &out.gt)?;
    write_homographies(&sidecar_path(dir, &spec.name), &out.truth)?;
    std::fs::write(dir.join("scene.toml"), spec.to_toml())?;
    Ok(())
}
