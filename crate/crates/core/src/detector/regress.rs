use super::stack::{batch_tensor, AlignedFrames};
use crate::error::Result;
use crate::imgcore::Blob;
use crate::nn::Network;
use crate::records::{Detection, Source};

/// Local maxima of a `side x side` response over 8-neighbourhoods with
/// value at least `kappa`, as `(col, row, value)` in raster order. On a
/// plateau only the first cell in raster order counts.
pub fn response_peaks(response: &[f64], side: usize, kappa: f64) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for r in 0..side {
        for c in 0..side {
            let v = response[r * side + c];
            if v < kappa {
                continue;
            }
            let mut peak = true;
            'nb: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if rr < 0 || cc < 0 || rr >= side as i64 || cc >= side as i64 {
                        continue;
                    }
                    let u = response[rr as usize * side + cc as usize];
                    let earlier = (rr, cc) < (r as i64, c as i64);
                    if u > v || (earlier && u == v) {
                        peak = false;
                        break 'nb;
                    }
                }
            }
            if peak {
                out.push((c, r, v));
            }
        }
    }
    out
}

/// Nearest-neighbour upsampling of a square response by `factor`.
pub fn upsample(response: &[f64], side: usize, factor: usize) -> Vec<f64> {
    let big = side * factor;
    (0..big * big)
        .map(|i| response[(i / big / factor) * side + (i % big) / factor])
        .collect()
}

/// Offset in frame pixels of response cell `k` from the window centre.
pub fn cell_offset(k: usize, response_side: usize, window_side: usize) -> f64 {
    let step = (window_side / response_side) as f64;
    step * (k as f64 - (response_side / 2) as f64)
}

/// Square box of side `s` around `(x, y)`.
pub fn default_box(x: f64, y: f64, s: f64) -> Vec<(f64, f64)> {
    let h = s / 2.0;
    vec![(x - h, y - h), (x + h, y - h), (x + h, y + h), (x - h, y + h)]
}

#[derive(Clone, Copy, Debug)]
pub struct RegressionParams {
    pub kappa: f64,
    pub window_side: usize,
    pub response_side: usize,
    pub box_side: f64,
    /// Peaks further than this outside the blob's bounding box are dropped.
    pub margin: f64,
}

/// Window centres for a blob: its rounded centroid, or a grid over the
/// bounding box when the blob is too wide for one window.
pub fn window_centers(blob: &Blob, window_side: usize, response_side: usize) -> Vec<(i64, i64)> {
    let step = window_side / response_side;
    let inner = window_side - 2 * step * 2;
    let b = blob.bbox;
    if b.width() <= inner && b.height() <= inner {
        return vec![(blob.centroid.0.round() as i64, blob.centroid.1.round() as i64)];
    }
    let half = (inner / 2) as i64;
    let axis = |lo: usize, hi: usize| {
        let mut v = Vec::new();
        let mut c = lo as i64 + half;
        loop {
            v.push(c);
            if c + half >= hi as i64 {
                break;
            }
            c += inner as i64 - 1;
        }
        v
    };
    let (xs, ys) = (axis(b.min_x, b.max_x), axis(b.min_y, b.max_y));
    ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect()
}

/// Splits a merged detection into the peaks of the regression response.
pub fn regress_merged(
    frame: usize,
    blob: &Blob,
    aligned: &AlignedFrames,
    net: &Network<f32>,
    p: &RegressionParams,
) -> Result<Vec<Detection>> {
    let centers = window_centers(blob, p.window_side, p.response_side);
    let stacks: Vec<_> = centers.iter().map(|&c| aligned.stack(c, p.window_side)).collect();
    let y = net.infer_batched(&batch_tensor(&stacks)?)?;
    let tiled = centers.len() > 1;
    let (w, h) = (aligned.width() as f64, aligned.height() as f64);
    let mut out = Vec::new();
    for (i, &(cx, cy)) in centers.iter().enumerate() {
        let response: Vec<f64> = y.sample(i).iter().map(|&v| v as f64).collect();
        for (c, r, v) in response_peaks(&response, p.response_side, p.kappa) {
            // Tiled windows keep only their interior cells; neighbours cover the rest.
            if tiled && [c, r].iter().any(|&k| k < 2 || k + 2 >= p.response_side) {
                continue;
            }
            let x = cx as f64 + cell_offset(c, p.response_side, p.window_side);
            let y = cy as f64 + cell_offset(r, p.response_side, p.window_side);
            if !blob.bbox.contains_with_margin(x, y, p.margin) || x < 0.0 || y < 0.0 || x > w - 1.0 || y > h - 1.0 {
                continue;
            }
            out.push(Detection {
                frame,
                x,
                y,
                score: v.clamp(0.0, 1.0),
                source: Source::Regression,
                bbox: default_box(x, y, p.box_side),
            });
        }
    }
    Ok(out)
}
