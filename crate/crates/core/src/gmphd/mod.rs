//! Gaussian-mixture PHD filter over point detections, with states carried
//! through the inter-frame homography and two-point birth.

#[cfg(test)]
mod tests;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::records::{by_frame, Detection, TrackPoint};
use crate::registration::Homography;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhdConfig {
    pub dt: f64,
    pub sigma_q: f64,
    /// Measurement noise standard deviation per axis, pixels.
    pub meas_noise: f64,
    /// Birth gate on the distance between paired detections, pixels.
    pub theta: f64,
    pub w_init: f64,
    pub w_show: f64,
    pub w_remove: f64,
    pub p_detect: f64,
    pub p_survive: f64,
    /// Uniform clutter intensity per square pixel.
    pub clutter: f64,
    pub prune_threshold: f64,
    /// Squared Mahalanobis distance below which components merge.
    pub merge_distance: f64,
    pub max_components: usize,
}

impl Default for PhdConfig {
    fn default() -> Self {
        Self {
            dt: 1.0,
            sigma_q: 3.0,
            meas_noise: 3.0,
            theta: 35.0,
            w_init: 0.25,
            w_show: 0.5,
            w_remove: 0.05,
            p_detect: 0.8,
            p_survive: 0.95,
            clutter: 1e-6,
            prune_threshold: 1e-4,
            merge_distance: 4.0,
            max_components: 1000,
        }
    }
}

impl PhdConfig {
    pub fn validate(&self) -> Result<()> {
        let open01 = |v: f64| v > 0.0 && v < 1.0;
        if !(self.dt > 0.0) {
            return Err(invalid!("dt must be positive, got {}", self.dt));
        }
        if !(open01(self.p_detect) && open01(self.p_survive)) {
            return Err(invalid!("detection and survival probabilities must lie in (0, 1)"));
        }
        if !(self.sigma_q >= 0.0 && self.meas_noise > 0.0 && self.theta > 0.0) {
            return Err(invalid!("sigma_q >= 0, meas_noise > 0 and theta > 0 required"));
        }
        if !(self.w_init > 0.0 && self.w_show >= 0.0 && self.w_remove >= 0.0 && self.prune_threshold >= 0.0) {
            return Err(invalid!("weights and thresholds must be non-negative (w_init positive)"));
        }
        if !(self.clutter > 0.0 && self.merge_distance >= 0.0) || self.max_components == 0 {
            return Err(invalid!("clutter > 0, merge_distance >= 0 and max_components >= 1 required"));
        }
        Ok(())
    }

    fn r(&self) -> Matrix2<f64> {
        Matrix2::identity() * self.meas_noise.powi(2)
    }

    /// `diag(R^2, R^2, (theta/4)^2, (theta/4)^2)`.
    pub fn birth_covariance(&self) -> Matrix4<f64> {
        let p = self.meas_noise.powi(2);
        let v = (self.theta / 4.0).powi(2);
        Matrix4::from_diagonal(&Vector4::new(p, p, v, v))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub weight: f64,
    /// `[x, y, vx, vy]`, pixels and pixels per frame.
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
    pub label: u64,
}

impl Component {
    pub fn position(&self) -> (f64, f64) {
        (self.mean[0], self.mean[1])
    }
}

fn symmetrize(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

/// Near-constant-velocity process noise.
pub fn process_noise(dt: f64, sigma_q: f64) -> Result<Matrix4<f64>> {
    if !(dt > 0.0) {
        return Err(invalid!("dt must be positive, got {dt}"));
    }
    let (a, b, c) = (dt.powi(3) / 3.0, dt.powi(2) / 2.0, dt);
    #[rustfmt::skip]
    let q = Matrix4::new(
        a, 0.0, b, 0.0,
        0.0, a, 0.0, b,
        b, 0.0, c, 0.0,
        0.0, b, 0.0, c,
    );
    Ok(q * sigma_q.powi(2))
}

/// Carries every component from frame t-1 into frame t through `h`
/// (position mapped, velocity and covariance through its Jacobian), then
/// applies the constant-velocity transition and survival probability.
pub fn predict(comps: &[Component], cfg: &PhdConfig, h: &Homography) -> Result<Vec<Component>> {
    if !h.matrix().determinant().is_finite() || h.matrix().determinant().abs() < 1e-12 {
        return Err(Error::Degenerate("singular inter-frame homography".into()));
    }
    let q = process_noise(cfg.dt, cfg.sigma_q)?;
    let mut f = Matrix4::identity();
    f[(0, 2)] = cfg.dt;
    f[(1, 3)] = cfg.dt;
    let identity = h.is_identity();
    comps
        .iter()
        .map(|c| {
            let (mean, cov) = if identity {
                (c.mean, c.cov)
            } else {
                let p = (c.mean[0], c.mean[1]);
                let (x, y) = h.apply(p);
                let j = h.jacobian(p);
                if !(x.is_finite() && y.is_finite()) {
                    return Err(Error::Numerical("component mapped to infinity".into()));
                }
                let v = j * Vector2::new(c.mean[2], c.mean[3]);
                let mut a = Matrix4::zeros();
                a.fixed_view_mut::<2, 2>(0, 0).copy_from(&j);
                a.fixed_view_mut::<2, 2>(2, 2).copy_from(&j);
                (Vector4::new(x, y, v[0], v[1]), a * c.cov * a.transpose())
            };
            Ok(Component {
                weight: c.weight * cfg.p_survive,
                mean: f * mean,
                cov: symmetrize(&(f * cov * f.transpose() + q)),
                label: c.label,
            })
        })
        .collect()
}

fn gaussian2(d: &Vector2<f64>, s: &Matrix2<f64>, s_inv: &Matrix2<f64>) -> f64 {
    let e = (d.transpose() * s_inv * d)[0];
    (-0.5 * e).exp() / (2.0 * std::f64::consts::PI * s.determinant().sqrt())
}

/// Missed-detection copies weighted by `1 - pD`, plus one Kalman-updated
/// copy of every component per detection, normalised per detection by
/// clutter plus the detection's total likelihood mass.
pub fn update(comps: &[Component], dets: &[(f64, f64)], cfg: &PhdConfig) -> Vec<Component> {
    let hm = {
        let mut m = Matrix2x4::zeros();
        m[(0, 0)] = 1.0;
        m[(1, 1)] = 1.0;
        m
    };
    let mut out: Vec<Component> = comps
        .iter()
        .map(|c| Component {
            weight: c.weight * (1.0 - cfg.p_detect),
            ..c.clone()
        })
        .collect();
    struct Pre {
        s: Matrix2<f64>,
        s_inv: Matrix2<f64>,
        k: nalgebra::Matrix4x2<f64>,
        cov: Matrix4<f64>,
    }
    let pre: Vec<Pre> = comps
        .iter()
        .map(|c| {
            let s = hm * c.cov * hm.transpose() + cfg.r();
            let s_inv = s.try_inverse().expect("innovation covariance is positive definite");
            let k = c.cov * hm.transpose() * s_inv;
            let cov = symmetrize(&(c.cov - k * s * k.transpose()));
            Pre { s, s_inv, k, cov }
        })
        .collect();
    for &(zx, zy) in dets {
        let z = Vector2::new(zx, zy);
        let mut terms: Vec<Component> = comps
            .iter()
            .zip(&pre)
            .map(|(c, p)| {
                let d = z - Vector2::new(c.mean[0], c.mean[1]);
                Component {
                    weight: cfg.p_detect * c.weight * gaussian2(&d, &p.s, &p.s_inv),
                    mean: c.mean + p.k * d,
                    cov: p.cov,
                    label: c.label,
                }
            })
            .collect();
        let total: f64 = terms.iter().map(|t| t.weight).sum();
        for t in &mut terms {
            t.weight /= cfg.clutter + total;
        }
        out.extend(terms);
    }
    out
}

/// Components for every (previous, current) detection pair closer than
/// `theta` once the previous detection is mapped through `h`: position is
/// the current detection, velocity the displacement. Pairs are taken in
/// sorted order so labels do not depend on input order.
pub fn birth(
    prev: &[(f64, f64)],
    curr: &[(f64, f64)],
    h: &Homography,
    cfg: &PhdConfig,
    next_label: &mut u64,
) -> Vec<Component> {
    let sorted = |v: &[(f64, f64)]| {
        let mut v = v.to_vec();
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        v
    };
    let mapped: Vec<(f64, f64)> = sorted(prev).iter().map(|&p| h.apply(p)).collect();
    let cov = cfg.birth_covariance();
    let mut out = Vec::new();
    for c in sorted(curr) {
        for p in &mapped {
            let (vx, vy) = (c.0 - p.0, c.1 - p.1);
            if vx.hypot(vy) < cfg.theta {
                out.push(Component {
                    weight: cfg.w_init,
                    mean: Vector4::new(c.0, c.1, vx, vy),
                    cov,
                    label: *next_label,
                });
                *next_label += 1;
            }
        }
    }
    out
}

/// Pruning, greedy moment-matched merging around the heaviest remaining
/// component, capping, removal of light components and of those outside
/// the `width x height` frame.
pub fn prune_merge(comps: Vec<Component>, cfg: &PhdConfig, width: usize, height: usize) -> Vec<Component> {
    let mut rest: Vec<Component> = comps.into_iter().filter(|c| c.weight >= cfg.prune_threshold).collect();
    // Heaviest first; equal weights keep the lower label first.
    rest.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.label.cmp(&b.label)));
    let inv: Vec<Option<Matrix4<f64>>> = rest.iter().map(|c| c.cov.try_inverse()).collect();
    let mut used = vec![false; rest.len()];
    let mut merged = Vec::new();
    for j in 0..rest.len() {
        if used[j] {
            continue;
        }
        let mut group = Vec::new();
        for i in j..rest.len() {
            if used[i] {
                continue;
            }
            let d = rest[i].mean - rest[j].mean;
            let close = match &inv[i] {
                Some(pi) => (d.transpose() * pi * d)[0] <= cfg.merge_distance,
                None => d.norm() == 0.0,
            };
            if close {
                used[i] = true;
                group.push(i);
            }
        }
        let w: f64 = group.iter().map(|&i| rest[i].weight).sum();
        let mean = group.iter().map(|&i| rest[i].mean * rest[i].weight).sum::<Vector4<f64>>() / w;
        let cov = group
            .iter()
            .map(|&i| {
                let d = rest[i].mean - mean;
                (rest[i].cov + d * d.transpose()) * rest[i].weight
            })
            .sum::<Matrix4<f64>>()
            / w;
        merged.push(Component {
            weight: w,
            mean,
            cov: symmetrize(&cov),
            label: rest[j].label,
        });
    }
    merged.truncate(cfg.max_components);
    merged
        .into_iter()
        .filter(|c| c.weight >= cfg.w_remove)
        .filter(|c| {
            let (x, y) = c.position();
            x >= 0.0 && y >= 0.0 && x <= (width - 1) as f64 && y <= (height - 1) as f64
        })
        .collect()
}

/// Components heavier than `w_show`.
pub fn extract_tracks<'a>(comps: &'a [Component], cfg: &PhdConfig) -> Vec<&'a Component> {
    comps.iter().filter(|c| c.weight > cfg.w_show).collect()
}

/// Filter state for one video.
#[derive(Clone, Debug)]
pub struct PhdFilter {
    pub cfg: PhdConfig,
    pub components: Vec<Component>,
    prev: Vec<(f64, f64)>,
    next_label: u64,
    width: usize,
    height: usize,
}

impl PhdFilter {
    pub fn new(cfg: PhdConfig, width: usize, height: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            components: Vec::new(),
            prev: Vec::new(),
            next_label: 1,
            width,
            height,
        })
    }

    /// Predict with `h` (frame t-1 to t), update with the detections of
    /// frame t, add births, prune and merge, and report confirmed
    /// components. A confirmed component sharing its label with a heavier
    /// confirmed one receives a fresh label.
    pub fn step(&mut self, frame: usize, dets: &[(f64, f64)], h: &Homography) -> Result<Vec<TrackPoint>> {
        let predicted = predict(&self.components, &self.cfg, h)?;
        let mut comps = update(&predicted, dets, &self.cfg);
        comps.extend(birth(&self.prev, dets, h, &self.cfg, &mut self.next_label));
        let mut comps = prune_merge(comps, &self.cfg, self.width, self.height);
        let mut seen = std::collections::BTreeSet::new();
        for c in comps.iter_mut() {
            if c.weight > self.cfg.w_show && !seen.insert(c.label) {
                c.label = self.next_label;
                self.next_label += 1;
                seen.insert(c.label);
            }
        }
        self.components = comps;
        self.prev = dets.to_vec();
        Ok(extract_tracks(&self.components, &self.cfg)
            .into_iter()
            .map(|c| TrackPoint {
                frame,
                track_id: c.label,
                x: c.mean[0],
                y: c.mean[1],
                weight: c.weight,
            })
            .collect())
    }
}

/// Runs the filter over frames `0..homographies.len()` (`homographies[t]`
/// = `h_t^{t-1}`), or up to the last detection with identity motion when
/// no transforms are given.
pub fn run_tracker(
    dets: &[Detection],
    homographies: &[Homography],
    width: usize,
    height: usize,
    cfg: &PhdConfig,
) -> Result<Vec<TrackPoint>> {
    let by = by_frame(dets, |d| d.frame);
    let n = if homographies.is_empty() {
        by.keys().next_back().map_or(0, |&f| f + 1)
    } else {
        if let Some(&last) = by.keys().next_back() {
            if last >= homographies.len() {
                return Err(Error::MissingData(format!(
                    "detections reach frame {last} but only {} transforms are given",
                    homographies.len()
                )));
            }
        }
        homographies.len()
    };
    let mut filter = PhdFilter::new(*cfg, width, height)?;
    let identity = Homography::identity();
    let mut out = Vec::new();
    for t in 0..n {
        let pts: Vec<(f64, f64)> = by.get(&t).map(|v| v.iter().map(|d| d.position()).collect()).unwrap_or_default();
        let h = homographies.get(t).unwrap_or(&identity);
        out.extend(filter.step(t, &pts, h)?);
    }
    Ok(out)
}
