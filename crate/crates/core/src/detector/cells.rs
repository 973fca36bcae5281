use super::stack::{batch_tensor, AlignedFrames};
use crate::error::Result;
use crate::imgcore::BinaryMask;
use crate::nn::Network;

/// Centres of the `cell x cell` tiles holding at least one true pixel, in
/// raster order of the tiles.
pub fn propose_cells(mask: &BinaryMask, cell: usize) -> Vec<(usize, usize)> {
    let (w, h) = (mask.width(), mask.height());
    let (cw, ch) = (w.div_ceil(cell), h.div_ceil(cell));
    let mut hit = vec![false; cw * ch];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                hit[(y / cell) * cw + x / cell] = true;
            }
        }
    }
    let mid = cell / 2;
    (0..cw * ch)
        .filter(|&i| hit[i])
        .map(|i| ((i % cw) * cell + mid, (i / cw) * cell + mid))
        .collect()
}

/// Source of the vehicle score `o1` for a window.
#[derive(Clone, Copy, Debug)]
pub enum Gate<'a> {
    Network(&'a Network<f32>),
    /// 1 when a ground-truth point lies within `radius` of the cell centre.
    Oracle { truth: &'a [(f64, f64)], radius: f64 },
    /// Constant score for every window.
    Constant(f64),
}

impl Gate<'_> {
    pub fn scores(&self, aligned: &AlignedFrames, centers: &[(usize, usize)], side: usize) -> Result<Vec<f64>> {
        match *self {
            Gate::Constant(v) => Ok(vec![v; centers.len()]),
            Gate::Oracle { truth, radius } => Ok(centers
                .iter()
                .map(|&(cx, cy)| {
                    let near = truth
                        .iter()
                        .any(|&(gx, gy)| (gx - cx as f64).hypot(gy - cy as f64) <= radius);
                    if near {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()),
            Gate::Network(net) => {
                if centers.is_empty() {
                    return Ok(Vec::new());
                }
                let stacks: Vec<_> = centers
                    .iter()
                    .map(|&(x, y)| aligned.stack((x as i64, y as i64), side))
                    .collect();
                let y = net.infer_batched(&batch_tensor(&stacks)?)?;
                Ok((0..centers.len()).map(|i| y.sample(i)[0] as f64).collect())
            }
        }
    }
}

/// Union of the cells whose score reaches `phi`.
pub fn accepted_cells(
    width: usize,
    height: usize,
    centers: &[(usize, usize)],
    scores: &[f64],
    phi: f64,
    cell: usize,
) -> BinaryMask {
    let mut m = BinaryMask::empty(width, height);
    let mid = cell / 2;
    for (&(cx, cy), &s) in centers.iter().zip(scores) {
        if s < phi {
            continue;
        }
        let (x0, y0) = (cx - mid, cy - mid);
        for y in y0..(y0 + cell).min(height) {
            for x in x0..(x0 + cell).min(width) {
                m.set(x, y, true);
            }
        }
    }
    m
}
