use std::collections::HashMap;

use crate::imgcore::Blob;
use crate::records::{Detection, Source};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assignment {
    /// `(bg index, cnn index)` pairs accepted as they are.
    pub direct: Vec<(usize, usize)>,
    /// cnn blobs with their assigned bg blobs, for the regression path.
    pub merged: Vec<(usize, Vec<usize>)>,
}

/// Assigns every bg blob to the cnn blob it shares most pixels with (ties
/// to the lower cnn index; no shared pixel drops the bg blob) and splits
/// the cnn blobs into directly accepted pairs and merged detections.
pub fn assign_blobs(bg: &[Blob], cnn: &[Blob], max_direct_area: usize, min_overlap: usize) -> Assignment {
    let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
    for (i, c) in cnn.iter().enumerate() {
        for &p in &c.pixels {
            owner.insert(p, i);
        }
    }
    let mut members: Vec<Vec<(usize, usize)>> = vec![Vec::new(); cnn.len()];
    for (j, b) in bg.iter().enumerate() {
        let mut counts = vec![0usize; cnn.len()];
        for p in &b.pixels {
            if let Some(&i) = owner.get(p) {
                counts[i] += 1;
            }
        }
        let best = counts
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)));
        if let Some((i, &n)) = best {
            members[i].push((j, n));
        }
    }
    let mut out = Assignment::default();
    for (i, m) in members.into_iter().enumerate() {
        match m.as_slice() {
            [] => {}
            &[(j, overlap)] if cnn[i].area() < max_direct_area && overlap > min_overlap => out.direct.push((j, i)),
            _ => out.merged.push((i, m.iter().map(|&(j, _)| j).collect())),
        }
    }
    out
}

pub fn emit_direct(frame: usize, bg: &Blob, score: f64) -> Detection {
    Detection {
        frame,
        x: bg.centroid.0,
        y: bg.centroid.1,
        score,
        source: Source::Direct,
        bbox: bg.convex_hull(),
    }
}

/// Highest score among the accepted cells touching `blob`.
pub fn blob_score(blob: &Blob, centers: &[(usize, usize)], scores: &[f64], phi: f64, cell: usize) -> f64 {
    let mid = cell / 2;
    centers
        .iter()
        .zip(scores)
        .filter(|(_, &s)| s >= phi)
        .filter(|(&(cx, cy), _)| {
            blob.pixels
                .iter()
                .any(|&(x, y)| x + mid >= cx && x <= cx + mid && y + mid >= cy && y <= cy + mid)
        })
        .map(|(_, &s)| s)
        .fold(0.0, f64::max)
}
