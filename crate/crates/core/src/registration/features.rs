//! Harris corners, raw-patch descriptors and mutual nearest-neighbour
//! matching.

use crate::error::{invalid, Error, Result};
use crate::imgcore::{crop_patch, Frame};

pub const NMS_RADIUS: i64 = 5;
pub const DESCRIPTOR_SIDE: usize = 11;
pub const RATIO: f64 = 0.8;
const HARRIS_K: f64 = 0.04;
const BORDER: usize = 6;
const REL_THRESHOLD: f64 = 0.0001;
const ABS_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Corner {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

#[derive(Clone, Debug)]
pub struct Feature {
    pub x: f64,
    pub y: f64,
    /// Zero-mean, unit-norm 11x11 patch, row-major.
    pub descriptor: Vec<f64>,
}

fn clamped(f: &Frame, x: i64, y: i64) -> f64 {
    let x = x.clamp(0, f.width() as i64 - 1) as usize;
    let y = y.clamp(0, f.height() as i64 - 1) as usize;
    f.get(x, y)
}

fn gaussian_blur(data: &[f64], w: usize, h: usize) -> Vec<f64> {
    // sigma = 1, radius 3
    let k: Vec<f64> = (-3i64..=3).map(|i| (-(i * i) as f64 / 2.0).exp()).collect();
    let norm: f64 = k.iter().sum();
    let k: Vec<f64> = k.iter().map(|v| v / norm).collect();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let xx = (x as i64 + i as i64 - 3).clamp(0, w as i64 - 1) as usize;
                s += kv * data[y * w + xx];
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let yy = (y as i64 + i as i64 - 3).clamp(0, h as i64 - 1) as usize;
                s += kv * tmp[yy * w + x];
            }
            out[y * w + x] = s;
        }
    }
    out
}

/// Harris response `det(M) - 0.04 tr(M)^2` of the Gaussian-weighted
/// structure tensor built from Sobel gradients.
pub fn harris_response(frame: &Frame) -> Vec<f64> {
    let (w, h) = (frame.width(), frame.height());
    let mut ixx = vec![0.0; w * h];
    let mut iyy = vec![0.0; w * h];
    let mut ixy = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let p = |dx: i64, dy: i64| clamped(frame, x + dx, y + dy);
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let i = y as usize * w + x as usize;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    let (sxx, syy, sxy) = (
        gaussian_blur(&ixx, w, h),
        gaussian_blur(&iyy, w, h),
        gaussian_blur(&ixy, w, h),
    );
    (0..w * h)
        .map(|i| {
            let det = sxx[i] * syy[i] - sxy[i] * sxy[i];
            let tr = sxx[i] + syy[i];
            det - HARRIS_K * tr * tr
        })
        .collect()
}

/// Offset of the vertex of the parabola through three equally spaced
/// samples, clamped to half a pixel.
fn vertex(a: f64, b: f64, c: f64) -> f64 {
    let d = a - 2.0 * b + c;
    if d >= 0.0 {
        return 0.0;
    }
    (0.5 * (a - c) / d).clamp(-0.5, 0.5)
}

/// Local maxima of the Harris response, strongest first, at most
/// `max_count`. Ties between equal responses go to the smaller `(y, x)`.
pub fn detect_corners(frame: &Frame, max_count: usize) -> Result<Vec<Corner>> {
    let (w, h) = (frame.width(), frame.height());
    if w < 32 || h < 32 {
        return Err(invalid!("corner detection needs at least 32x32, got {w}x{h}"));
    }
    let r = harris_response(frame);
    let rmax = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let thresh = (REL_THRESHOLD * rmax).max(ABS_THRESHOLD);
    let mut corners = Vec::new();
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            let v = r[y * w + x];
            if v <= thresh {
                continue;
            }
            let mut is_max = true;
            'nms: for dy in -NMS_RADIUS..=NMS_RADIUS {
                let yy = y as i64 + dy;
                if yy < 0 || yy >= h as i64 {
                    continue;
                }
                for dx in -NMS_RADIUS..=NMS_RADIUS {
                    let xx = x as i64 + dx;
                    if (dx == 0 && dy == 0) || xx < 0 || xx >= w as i64 {
                        continue;
                    }
                    let o = r[yy as usize * w + xx as usize];
                    if o > v || (o == v && (yy, xx) < (y as i64, x as i64)) {
                        is_max = false;
                        break 'nms;
                    }
                }
            }
            if is_max {
                let at = |xx: usize, yy: usize| r[yy * w + xx];
                corners.push(Corner {
                    x: x as f64 + vertex(at(x - 1, y), v, at(x + 1, y)),
                    y: y as f64 + vertex(at(x, y - 1), v, at(x, y + 1)),
                    score: v,
                });
            }
        }
    }
    corners.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    corners.truncate(max_count);
    Ok(corners)
}

pub fn describe(frame: &Frame, corners: &[Corner]) -> Vec<Feature> {
    corners
        .iter()
        .map(|c| {
            let patch = crop_patch(frame, (c.x.round() as i64, c.y.round() as i64), DESCRIPTOR_SIDE);
            let mean = patch.mean();
            let mut d: Vec<f64> = patch.pixels().iter().map(|v| v - mean).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                d.iter_mut().for_each(|v| *v /= norm);
            }
            Feature {
                x: c.x,
                y: c.y,
                descriptor: d,
            }
        })
        .collect()
}

fn ssd(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Best and second-best SSD of `d` against `set`.
fn two_nearest(d: &[f64], set: &[Feature]) -> (usize, f64, f64) {
    let (mut best, mut d1, mut d2) = (usize::MAX, f64::INFINITY, f64::INFINITY);
    for (j, f) in set.iter().enumerate() {
        let s = ssd(d, &f.descriptor);
        if s < d1 {
            d2 = d1;
            d1 = s;
            best = j;
        } else if s < d2 {
            d2 = s;
        }
    }
    (best, d1, d2)
}

/// Mutual nearest neighbours under SSD that also pass the distance-ratio
/// test. Returns `(index in a, index in b)` pairs in `a` order.
pub fn match_descriptors(a: &[Feature], b: &[Feature]) -> Result<Vec<(usize, usize)>> {
    let back: Vec<usize> = b.iter().map(|f| two_nearest(&f.descriptor, a).0).collect();
    let mut out = Vec::new();
    for (i, f) in a.iter().enumerate() {
        let (j, d1, d2) = two_nearest(&f.descriptor, b);
        if j == usize::MAX || back[j] != i {
            continue;
        }
        let ratio_ok = if d2.is_infinite() {
            true
        } else {
            d2 > 0.0 && (d1 / d2).sqrt() < RATIO
        };
        if ratio_ok {
            out.push((i, j));
        }
    }
    if out.len() < 4 {
        return Err(Error::Degenerate(format!("only {} descriptor matches", out.len())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::{warp_frame, Homography};
    use crate::synth::texture::value_noise;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_frame_has_no_corners() {
        let f = Frame::filled(64, 64, 77.0);
        assert!(detect_corners(&f, 100).unwrap().is_empty());
    }

    #[test]
    fn small_frame_rejected() {
        assert!(detect_corners(&Frame::filled(31, 40, 0.0), 10).is_err());
    }

    #[test]
    fn square_has_four_corners() {
        let f = Frame::from_fn(64, 64, |x, y| {
            if (20..40).contains(&x) && (20..40).contains(&y) {
                255.0
            } else {
                0.0
            }
        });
        let corners = detect_corners(&f, 100).unwrap();
        assert_eq!(corners.len(), 4, "{corners:?}");
        for (vx, vy) in [(19.5, 19.5), (39.5, 19.5), (19.5, 39.5), (39.5, 39.5)] {
            assert!(corners
                .iter()
                .any(|c| (c.x - vx).abs() <= 2.0 && (c.y - vy).abs() <= 2.0));
        }
    }

    #[test]
    fn checkerboard_corners() {
        let f = Frame::from_fn(128, 128, |x, y| if (x / 16 + y / 16) % 2 == 0 { 200.0 } else { 30.0 });
        let corners = detect_corners(&f, 1000).unwrap();
        assert!(corners.len() >= 40, "{}", corners.len());
    }

    #[test]
    fn identical_frames_match_themselves() {
        let f = value_noise(128, 128, 8.0, 3).with_index(0);
        let feats = describe(&f, &detect_corners(&f, 300).unwrap());
        let m = match_descriptors(&feats, &feats).unwrap();
        assert!(m.iter().all(|&(i, j)| i == j));
        assert!(m.len() as f64 >= 0.95 * feats.len() as f64);
    }

    #[test]
    fn translated_frame_matches() {
        let f = value_noise(160, 160, 8.0, 5);
        let g = warp_frame(&f, &Homography::translation(3.0, 0.0), 160, 160).unwrap();
        let a = describe(&f, &detect_corners(&f, 300).unwrap());
        let b = describe(&g, &detect_corners(&g, 300).unwrap());
        let m = match_descriptors(&a, &b).unwrap();
        let good = m
            .iter()
            .filter(|&&(i, j)| (b[j].x - a[i].x - 3.0).abs() <= 1.0 && (b[j].y - a[i].y).abs() <= 1.0)
            .count();
        // Corners present in both frames: those not shifted out of view.
        let shared = a.iter().filter(|f| f.x + 3.0 < 160.0 - 6.0).count();
        assert!(good as f64 >= 0.8 * shared.min(b.len()) as f64, "{good} of {shared}");
    }

    #[test]
    fn unrelated_noise_does_not_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Frame::from_fn(96, 96, |_, _| rng.gen_range(0.0..255.0));
        let b = Frame::from_fn(96, 96, |_, _| rng.gen_range(0.0..255.0));
        let fa = describe(&a, &detect_corners(&a, 300).unwrap());
        let fb = describe(&b, &detect_corners(&b, 300).unwrap());
        assert!(matches!(match_descriptors(&fa, &fb), Err(Error::Degenerate(_))));
    }
}
