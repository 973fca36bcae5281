//! Binary morphology with rectangular all-true structuring elements.
//!
//! Pixels outside the image are treated as background (false) by both
//! erosion and dilation.

use super::image::BinaryMask;
use crate::error::{invalid, Result};

fn check_kernel(kw: usize, kh: usize) -> Result<()> {
    if kw == 0 || kh == 0 || kw.is_multiple_of(2) || kh.is_multiple_of(2) {
        return Err(invalid!("kernel must have odd positive dimensions, got {kw}x{kh}"));
    }
    Ok(())
}

/// Sliding-window count of true values along one line, window `[i-r, i+r]`
/// clipped to the line.
fn window_counts(line: &[bool], r: usize, out: &mut Vec<usize>) {
    let n = line.len();
    let mut prefix = vec![0usize; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + line[i] as usize;
    }
    out.clear();
    for i in 0..n {
        let lo = i.saturating_sub(r);
        let hi = (i + r + 1).min(n);
        out.push(prefix[hi] - prefix[lo]);
    }
}

/// Separable pass: `erode` requires the full (unclipped) window to be true,
/// otherwise any true value in the clipped window suffices.
fn pass(mask: &BinaryMask, r: usize, horizontal: bool, erode: bool) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let full = 2 * r + 1;
    let mut out = BinaryMask::empty(w, h);
    let mut line = Vec::new();
    let mut counts = Vec::new();
    let (outer, inner) = if horizontal { (h, w) } else { (w, h) };
    for o in 0..outer {
        line.clear();
        for i in 0..inner {
            let (x, y) = if horizontal { (i, o) } else { (o, i) };
            line.push(mask.get(x, y));
        }
        window_counts(&line, r, &mut counts);
        for (i, &c) in counts.iter().enumerate() {
            let v = if erode { c == full } else { c > 0 };
            if v {
                let (x, y) = if horizontal { (i, o) } else { (o, i) };
                out.set(x, y, true);
            }
        }
    }
    out
}

pub fn erode(mask: &BinaryMask, kw: usize, kh: usize) -> Result<BinaryMask> {
    check_kernel(kw, kh)?;
    let m = pass(mask, kw / 2, true, true);
    Ok(pass(&m, kh / 2, false, true))
}

pub fn dilate(mask: &BinaryMask, kw: usize, kh: usize) -> Result<BinaryMask> {
    check_kernel(kw, kh)?;
    let m = pass(mask, kw / 2, true, false);
    Ok(pass(&m, kh / 2, false, false))
}

/// Morphological opening: erosion followed by dilation.
pub fn morph_open(mask: &BinaryMask, kw: usize, kh: usize) -> Result<BinaryMask> {
    dilate(&erode(mask, kw, kh)?, kw, kh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct definition, one pixel at a time.
    fn brute_open(mask: &BinaryMask, kw: usize, kh: usize) -> BinaryMask {
        let (w, h) = (mask.width() as i64, mask.height() as i64);
        let (rx, ry) = (kw as i64 / 2, kh as i64 / 2);
        let at = |m: &BinaryMask, x: i64, y: i64| {
            x >= 0 && y >= 0 && x < w && y < h && m.get(x as usize, y as usize)
        };
        let eroded = BinaryMask::from_fn(w as usize, h as usize, |x, y| {
            (-ry..=ry).all(|dy| (-rx..=rx).all(|dx| at(mask, x as i64 + dx, y as i64 + dy)))
        });
        BinaryMask::from_fn(w as usize, h as usize, |x, y| {
            (-ry..=ry).any(|dy| (-rx..=rx).any(|dx| at(&eroded, x as i64 + dx, y as i64 + dy)))
        })
    }

    #[test]
    fn rejects_even_kernel() {
        let m = BinaryMask::empty(5, 5);
        assert!(morph_open(&m, 2, 3).is_err());
        assert!(morph_open(&m, 3, 0).is_err());
    }

    #[test]
    fn isolated_pixel_removed() {
        let mut m = BinaryMask::empty(9, 9);
        m.set(4, 4, true);
        assert!(morph_open(&m, 3, 3).unwrap().is_empty());
    }

    #[test]
    fn solid_square_survives() {
        let m = BinaryMask::from_fn(12, 12, |x, y| (3..8).contains(&x) && (3..8).contains(&y));
        let opened = morph_open(&m, 3, 3).unwrap();
        assert_eq!(opened, brute_open(&m, 3, 3));
        assert_eq!(opened, m);
    }

    #[test]
    fn all_true_mask_stays_all_true() {
        // Erosion clears the border, dilation from the interior restores it.
        let m = BinaryMask::filled(7, 6, true);
        let opened = morph_open(&m, 3, 3).unwrap();
        assert_eq!(opened, brute_open(&m, 3, 3));
        assert_eq!(opened.count(), 42);
    }

    proptest! {
        #[test]
        fn matches_brute_force_and_is_idempotent(
            bits in proptest::collection::vec(proptest::bool::weighted(0.6), 14 * 11),
            k in prop_oneof![Just((3usize, 3usize)), Just((1, 3)), Just((5, 3))],
        ) {
            let m = BinaryMask::new(14, 11, bits).unwrap();
            let once = morph_open(&m, k.0, k.1).unwrap();
            prop_assert_eq!(&once, &brute_open(&m, k.0, k.1));
            prop_assert_eq!(morph_open(&once, k.0, k.1).unwrap(), once);
        }
    }
}
