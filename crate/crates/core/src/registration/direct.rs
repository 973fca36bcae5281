//! Pyramidal inverse-compositional alignment over the 8 free homography
//! entries, in coordinates centred on the image and scaled by half its
//! larger side.

use nalgebra::{Matrix3, SMatrix, SVector};

use super::Homography;
use crate::error::{invalid, Result};
use crate::imgcore::Frame;

type Mat8 = SMatrix<f64, 8, 8>;
type Vec8 = SVector<f64, 8>;

pub const MAX_ITERATIONS: usize = 50;
pub const UPDATE_TOL: f64 = 1e-6;
pub const MAX_INCREASES: usize = 5;
const BORDER: usize = 8;
const STALL_PIXELS: f64 = 0.05;

#[derive(Clone, Copy, Debug)]
pub struct DirectAlignment {
    /// Maps `moving` coordinates into `reference` coordinates.
    pub homography: Homography,
    pub converged: bool,
    pub iterations: usize,
    /// Root-mean-square intensity residual at the finest level.
    pub rms: f64,
}

/// Half-resolution by 2x2 averaging; odd trailing rows/columns dropped.
pub fn downsample(f: &Frame) -> Frame {
    let (w, h) = ((f.width() / 2).max(1), (f.height() / 2).max(1));
    Frame::from_fn(w, h, |x, y| {
        let (x0, y0) = (2 * x, 2 * y);
        let x1 = (x0 + 1).min(f.width() - 1);
        let y1 = (y0 + 1).min(f.height() - 1);
        0.25 * (f.get(x0, y0) + f.get(x1, y0) + f.get(x0, y1) + f.get(x1, y1))
    })
}

/// Level l+1 coordinates from level l: pixel i covers 2i and 2i+1.
fn level_down() -> Matrix3<f64> {
    Matrix3::new(0.5, 0.0, -0.25, 0.0, 0.5, -0.25, 0.0, 0.0, 1.0)
}

fn normalizer(w: usize, h: usize) -> Matrix3<f64> {
    let s = w.max(h) as f64 / 2.0;
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    Matrix3::new(1.0 / s, 0.0, -cx / s, 0.0, 1.0 / s, -cy / s, 0.0, 0.0, 1.0)
}

fn params_to_matrix(p: &Vec8) -> Matrix3<f64> {
    Matrix3::new(
        1.0 + p[0],
        p[2],
        p[4],
        p[1],
        1.0 + p[3],
        p[5],
        p[6],
        p[7],
        1.0,
    )
}

struct Template {
    w: usize,
    h: usize,
    /// (x, y, T(x), steepest-descent row) for every pixel inside the border.
    pixels: Vec<(f64, f64, f64, Vec8)>,
}

fn build_template(reference: &Frame, margin: usize) -> Template {
    let (w, h) = (reference.width(), reference.height());
    let s = w.max(h) as f64 / 2.0;
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let mut pixels = Vec::new();
    let margin = margin.min((w.min(h).saturating_sub(3)) / 2).max(1);
    for y in margin..h - margin {
        for x in margin..w - margin {
            let gx = 0.5 * (reference.get(x + 1, y) - reference.get(x - 1, y)) * s;
            let gy = 0.5 * (reference.get(x, y + 1) - reference.get(x, y - 1)) * s;
            let u = (x as f64 - cx) / s;
            let v = (y as f64 - cy) / s;
            let sd = Vec8::from_column_slice(&[
                gx * u,
                gy * u,
                gx * v,
                gy * v,
                gx,
                gy,
                -gx * u * u - gy * u * v,
                -gx * u * v - gy * v * v,
            ]);
            pixels.push((x as f64, y as f64, reference.get(x, y), sd));
        }
    }
    Template { w, h, pixels }
}

struct Residuals {
    mse: f64,
    /// Mean Huber cost at the threshold the residuals were evaluated with.
    cost: f64,
    /// Huber threshold suggested by these residuals (2.5 robust sigmas).
    next_threshold: f64,
    count: usize,
    hessian: Mat8,
    gradient: Vec8,
}

const HUBER_SIGMAS: f64 = 2.5;

/// Residuals of `moving` sampled through `warp` (reference to moving pixel
/// coordinates) against the template, Huber-weighted at `threshold` so
/// moving objects do not drag the fit.
fn residuals(t: &Template, moving: &Frame, warp: &Matrix3<f64>, threshold: f64) -> Residuals {
    let mut r = Residuals {
        mse: 0.0,
        cost: 0.0,
        next_threshold: threshold,
        count: 0,
        hessian: Mat8::zeros(),
        gradient: Vec8::zeros(),
    };
    let (mut sse, mut cost) = (0.0, 0.0);
    let mut abs = Vec::with_capacity(t.pixels.len());
    for (x, y, tv, sd) in &t.pixels {
        let wz = warp[(2, 0)] * x + warp[(2, 1)] * y + warp[(2, 2)];
        let mx = (warp[(0, 0)] * x + warp[(0, 1)] * y + warp[(0, 2)]) / wz;
        let my = (warp[(1, 0)] * x + warp[(1, 1)] * y + warp[(1, 2)]) / wz;
        let Some(iv) = moving.bilinear(mx, my) else { continue };
        let e = iv - tv;
        let a = e.abs();
        sse += e * e;
        abs.push(a);
        let weight = if a <= threshold {
            cost += 0.5 * e * e;
            1.0
        } else {
            cost += threshold * a - 0.5 * threshold * threshold;
            threshold / a
        };
        r.hessian.ger(weight, sd, sd, 1.0);
        r.gradient.axpy(weight * e, sd, 1.0);
    }
    r.count = abs.len();
    if r.count > 0 {
        r.mse = sse / r.count as f64;
        r.cost = cost / r.count as f64;
        let mid = r.count / 2;
        let (_, median, _) = abs.select_nth_unstable_by(mid, f64::total_cmp);
        r.next_threshold = (HUBER_SIGMAS * 1.4826 * *median).max(1e-6);
    } else {
        r.mse = f64::INFINITY;
        r.cost = f64::INFINITY;
    }
    r
}

struct LevelOutcome {
    warp: Matrix3<f64>,
    diverged: bool,
    iterations: usize,
    mse: f64,
    count: usize,
    /// Robust cost before and after each accepted step, at that step's
    /// threshold.
    #[cfg_attr(not(test), allow(dead_code))]
    history: Vec<(f64, f64)>,
}

fn align_level(t: &Template, moving: &Frame, init: Matrix3<f64>) -> LevelOutcome {
    let n = normalizer(t.w, t.h);
    let half_side = t.w.max(t.h) as f64 / 2.0;
    let n_inv = n.try_inverse().unwrap();
    let mut warp = init;
    let first = residuals(t, moving, &warp, f64::INFINITY);
    let mut threshold = first.next_threshold;
    let mut current = residuals(t, moving, &warp, threshold);
    let mut increases = 0;
    let mut iterations = 0;
    let mut scale = 1.0;
    let mut history = Vec::new();
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if current.count < 8 {
            return LevelOutcome {
                warp,
                diverged: true,
                iterations,
                mse: current.mse,
                count: current.count,
                history,
            };
        }
        let Some(dp) = current.hessian.cholesky().map(|c| c.solve(&current.gradient)) else {
            return LevelOutcome {
                warp,
                diverged: true,
                iterations,
                mse: current.mse,
                count: current.count,
                history,
            };
        };
        let dp = dp * scale;
        if dp.norm() < UPDATE_TOL {
            break;
        }
        // W <- W o dW^{-1}, in normalized coordinates.
        let Some(d_inv) = params_to_matrix(&dp).try_inverse() else { break };
        let candidate = warp * n_inv * d_inv * n;
        let trial = residuals(t, moving, &candidate, threshold);
        if trial.cost <= current.cost {
            warp = candidate / candidate[(2, 2)];
            history.push((current.cost, trial.cost));
            threshold = trial.next_threshold;
            current = residuals(t, moving, &warp, threshold);
            increases = 0;
            scale = 1.0;
        } else {
            increases += 1;
            scale *= 0.5;
            if increases >= MAX_INCREASES {
                // A stall with sub-pixel steps is the interpolation noise
                // floor, not divergence.
                let full_step = dp.norm() / (2.0 * scale) * half_side;
                return LevelOutcome {
                    warp,
                    diverged: full_step >= STALL_PIXELS,
                    iterations,
                    mse: current.mse,
                    count: current.count,
                    history,
                };
            }
        }
    }
    LevelOutcome {
        warp,
        diverged: false,
        iterations,
        mse: current.mse,
        count: current.count,
        history,
    }
}

fn std_dev(f: &Frame) -> f64 {
    let m = f.mean();
    (f.pixels().iter().map(|v| (v - m) * (v - m)).sum::<f64>() / f.pixels().len() as f64).sqrt()
}

/// Refines `init` (moving to reference) by coarse-to-fine Gauss-Newton on
/// the sum of squared intensity differences. On divergence, or when the
/// final fit is implausible (residual above half the reference contrast,
/// or under a quarter of the pixels overlapping), returns `init` flagged as
/// not converged.
pub fn align_direct(
    moving: &Frame,
    reference: &Frame,
    init: &Homography,
    pyramid_levels: usize,
) -> Result<DirectAlignment> {
    if !moving.same_shape(reference) {
        return Err(invalid!("direct alignment needs frames of equal size"));
    }
    if pyramid_levels == 0 {
        return Err(invalid!("pyramid needs at least one level"));
    }
    let mut mov = vec![moving.clone()];
    let mut refs = vec![reference.clone()];
    for _ in 1..pyramid_levels {
        let (m, r) = (mov.last().unwrap(), refs.last().unwrap());
        if m.width() < 16 || m.height() < 16 {
            break;
        }
        mov.push(downsample(m));
        refs.push(downsample(r));
    }
    let levels = mov.len();
    let s = level_down();
    let s_inv = s.try_inverse().unwrap();
    // Warp maps reference coordinates to moving coordinates.
    let init_warp = *init.inverse()?.matrix();
    let mut s_pow = Matrix3::identity();
    for _ in 1..levels {
        s_pow = s * s_pow;
    }
    let mut warp = s_pow * init_warp * s_pow.try_inverse().unwrap();
    let mut total_iters = 0;
    let mut last = None;
    for level in (0..levels).rev() {
        let t = build_template(&refs[level], (BORDER >> level).max(1));
        let out = align_level(&t, &mov[level], warp);
        total_iters += out.iterations;
        if out.diverged {
            return Ok(DirectAlignment {
                homography: *init,
                converged: false,
                iterations: total_iters,
                rms: out.mse.sqrt(),
            });
        }
        warp = out.warp;
        if level > 0 {
            warp = s_inv * warp * s;
        }
        last = Some((out.mse, out.count, t.pixels.len()));
    }
    let (mse, count, total) = last.unwrap();
    let rms = mse.sqrt();
    let h = Homography::new(warp).and_then(|w| w.inverse());
    let plausible = rms <= 0.5 * std_dev(reference) && count * 4 >= total;
    match h {
        Ok(h) if plausible => Ok(DirectAlignment {
            homography: h,
            converged: true,
            iterations: total_iters,
            rms,
        }),
        _ => Ok(DirectAlignment {
            homography: *init,
            converged: false,
            iterations: total_iters,
            rms,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::warp_frame;
    use crate::synth::texture::value_noise;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_error(a: &Homography, b: &Homography, w: f64, h: f64) -> f64 {
        let mut s = 0.0;
        for i in 0..10 {
            for j in 0..10 {
                let p = (w * (i as f64 + 0.5) / 10.0, h * (j as f64 + 0.5) / 10.0);
                let (q, r) = (a.apply(p), b.apply(p));
                s += (q.0 - r.0).hypot(q.1 - r.1);
            }
        }
        s / 100.0
    }

    #[test]
    fn identical_frames_stay_identity() {
        let f = value_noise(96, 96, 8.0, 1);
        let out = align_direct(&f, &f, &Homography::identity(), 3).unwrap();
        assert!(out.converged);
        assert!(out.homography.relative_error(&Homography::identity()) < 1e-9);
    }

    #[test]
    fn recovers_small_warp() {
        let f = value_noise(128, 128, 10.0, 2);
        let truth = Homography::from_rows([[1.01, 0.005, 2.0], [-0.004, 0.995, -1.5], [1e-5, -2e-5, 1.0]])
            .unwrap();
        let g = warp_frame(&f, &truth, 128, 128).unwrap();
        let out = align_direct(&f, &g, &Homography::identity(), 3).unwrap();
        assert!(out.converged, "{out:?}");
        assert!(grid_error(&out.homography, &truth, 128.0, 128.0) < 0.1);
    }

    #[test]
    fn huge_shift_single_level_fails() {
        let f = value_noise(128, 128, 10.0, 3);
        let g = warp_frame(&f, &Homography::translation(100.0, 0.0), 128, 128).unwrap();
        let out = align_direct(&f, &g, &Homography::identity(), 1).unwrap();
        assert!(!out.converged);
        assert!(out.homography.is_identity());
    }

    #[test]
    fn accepted_steps_never_increase_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for seed in 0..10 {
            let f = value_noise(96, 96, 9.0, seed);
            let truth = Homography::similarity(
                (48.0, 48.0),
                rng.gen_range(-0.02..0.02),
                rng.gen_range(0.98..1.02),
                (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)),
            );
            let g = warp_frame(&f, &truth, 96, 96).unwrap();
            let t = build_template(&g, 8);
            let out = align_level(&t, &f, Matrix3::identity());
            assert!(!out.history.is_empty());
            assert!(out.history.iter().all(|&(before, after)| after <= before));
        }
    }
}
