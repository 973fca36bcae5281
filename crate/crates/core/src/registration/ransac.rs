use nalgebra::{DMatrix, Matrix3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Homography;
use crate::error::{Error, Result};

pub type PointPair = ((f64, f64), (f64, f64));

/// Similarity moving the centroid to the origin and the mean distance to
/// sqrt(2).
fn hartley(points: impl Iterator<Item = (f64, f64)> + Clone) -> Matrix3<f64> {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (cx, cy) = (sx / n, sy / n);
    let md = points
        .map(|p| ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let s = if md > 1e-12 { std::f64::consts::SQRT_2 / md } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn tf(t: &Matrix3<f64>, p: (f64, f64)) -> (f64, f64) {
    (t[(0, 0)] * p.0 + t[(0, 2)], t[(1, 1)] * p.1 + t[(1, 2)])
}

/// Normalized direct linear transform over all given pairs (at least 4).
pub fn dlt(pairs: &[PointPair]) -> Result<Homography> {
    if pairs.len() < 4 {
        return Err(Error::Degenerate(format!("DLT needs 4 pairs, got {}", pairs.len())));
    }
    let ta = hartley(pairs.iter().map(|p| p.0));
    let tb = hartley(pairs.iter().map(|p| p.1));
    let rows = (2 * pairs.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, &(p, q)) in pairs.iter().enumerate() {
        let (x, y) = tf(&ta, p);
        let (u, v) = tf(&tb, q);
        let r = 2 * i;
        a.row_mut(r)
            .copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let svd = a.svd(false, true);
    let vt = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not produce V".into()))?;
    let k = svd.singular_values.argmin().0;
    let largest = svd.singular_values.max();
    // Rank-deficient beyond the single null direction.
    let second = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, &s)| s)
        .fold(f64::INFINITY, f64::min);
    if second <= 1e-10 * largest.max(1e-300) {
        return Err(Error::Degenerate("DLT system is rank deficient".into()));
    }
    let h = vt.row(k);
    let hn = Matrix3::from_row_slice(&[h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]]);
    let tb_inv = tb
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("degenerate point normalization".into()))?;
    Homography::new(tb_inv * hn * ta)
}

fn collinear(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    let scale = ((b.0 - a.0).hypot(b.1 - a.1)) * ((c.0 - a.0).hypot(c.1 - a.1));
    cross.abs() <= 1e-6 * scale.max(1e-12)
}

fn sample_degenerate(pts: &[(f64, f64); 4]) -> bool {
    const TRIPLES: [(usize, usize, usize); 4] = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)];
    TRIPLES
        .iter()
        .any(|&(i, j, k)| collinear(pts[i], pts[j], pts[k]))
}

fn inliers(h: &Homography, pairs: &[PointPair], tol: f64) -> Vec<bool> {
    pairs
        .iter()
        .map(|&(p, q)| {
            let r = h.apply(p);
            let e = (r.0 - q.0).hypot(r.1 - q.1);
            e.is_finite() && e < tol
        })
        .collect()
}

/// Best-consensus homography mapping the first point of each pair onto the
/// second, refined by DLT over the inliers.
pub fn estimate_homography_ransac(
    pairs: &[PointPair],
    iterations: usize,
    inlier_tol: f64,
    seed: u64,
) -> Result<(Homography, Vec<bool>)> {
    if pairs.len() < 4 {
        return Err(Error::Degenerate(format!(
            "RANSAC needs at least 4 matches, got {}",
            pairs.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Homography, Vec<bool>)> = None;
    for _ in 0..iterations {
        let idx = sample(&mut rng, pairs.len(), 4);
        let s: Vec<PointPair> = idx.iter().map(|i| pairs[i]).collect();
        let src = [s[0].0, s[1].0, s[2].0, s[3].0];
        let dst = [s[0].1, s[1].1, s[2].1, s[3].1];
        if sample_degenerate(&src) || sample_degenerate(&dst) {
            continue;
        }
        let Ok(h) = dlt(&s) else { continue };
        let mask = inliers(&h, pairs, inlier_tol);
        let count = mask.iter().filter(|&&b| b).count();
        if best.as_ref().is_none_or(|b| count > b.0) {
            best = Some((count, h, mask));
            if count == pairs.len() {
                break;
            }
        }
    }
    let Some((mut count, mut h, mut mask)) = best else {
        return Err(Error::Degenerate("no non-degenerate RANSAC sample".into()));
    };
    if count < 4 {
        return Err(Error::Degenerate(format!("best model has only {count} inliers")));
    }
    for _ in 0..3 {
        let support: Vec<PointPair> = pairs
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(p, _)| *p)
            .collect();
        let Ok(refined) = dlt(&support) else { break };
        let new_mask = inliers(&refined, pairs, inlier_tol);
        let new_count = new_mask.iter().filter(|&&b| b).count();
        if new_count < count {
            break;
        }
        let stable = new_mask == mask;
        (h, mask, count) = (refined, new_mask, new_count);
        if stable {
            break;
        }
    }
    Ok((h, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn known() -> Homography {
        Homography::from_rows([[1.02, 0.03, 5.0], [-0.02, 0.98, -3.0], [2e-5, -1e-5, 1.0]]).unwrap()
    }

    fn exact_pairs(h: &Homography, n: usize, rng: &mut ChaCha8Rng) -> Vec<PointPair> {
        (0..n)
            .map(|_| {
                let p = (rng.gen_range(0.0..320.0), rng.gen_range(0.0..256.0));
                (p, h.apply(p))
            })
            .collect()
    }

    #[test]
    fn exact_correspondences_recovered() {
        let h = known();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pairs = exact_pairs(&h, 20, &mut rng);
        let (est, mask) = estimate_homography_ransac(&pairs, 1000, 2.0, 7).unwrap();
        assert!(est.relative_error(&h) < 1e-6);
        assert!(mask.iter().all(|&b| b));
    }

    #[test]
    fn outliers_excluded() {
        let h = known();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pairs = exact_pairs(&h, 21, &mut rng);
        for _ in 0..9 {
            let p = (rng.gen_range(0.0..320.0), rng.gen_range(0.0..256.0));
            let q = (rng.gen_range(0.0..320.0), rng.gen_range(0.0..256.0));
            pairs.push((p, q));
        }
        let (est, mask) = estimate_homography_ransac(&pairs, 1000, 2.0, 3).unwrap();
        assert!(est.relative_error(&h) < 1e-3);
        assert!(mask[..21].iter().all(|&b| b));
        assert!(mask[21..].iter().all(|&b| !b));
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pairs: Vec<PointPair> = (0..4)
            .map(|i| {
                let p = (i as f64 * 10.0, i as f64 * 5.0);
                (p, (p.0 + 1.0, p.1))
            })
            .collect();
        assert!(matches!(
            estimate_homography_ransac(&pairs, 100, 2.0, 0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn exact_regardless_of_seed() {
        let h = known();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pairs = exact_pairs(&h, 12, &mut rng);
        for seed in 0..20 {
            let (est, _) = estimate_homography_ransac(&pairs, 50, 2.0, seed).unwrap();
            assert!(est.relative_error(&h) < 1e-6);
        }
    }
}
