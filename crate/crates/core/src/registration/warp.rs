use super::Homography;
use crate::error::Result;
use crate::imgcore::{BinaryMask, Frame};

/// Resamples `frame` into an `out_w x out_h` canvas where `h` maps source
/// coordinates to output coordinates. Output pixels whose preimage falls
/// outside the source are 0 and flagged false in the returned mask.
pub fn warp_frame_masked(
    frame: &Frame,
    h: &Homography,
    out_w: usize,
    out_h: usize,
) -> Result<(Frame, BinaryMask)> {
    let inv = h.inverse()?;
    let mut valid = BinaryMask::empty(out_w, out_h);
    let mut out = Frame::filled(out_w, out_h, 0.0).with_index(frame.index());
    if h.is_identity() && frame.width() == out_w && frame.height() == out_h {
        return Ok((frame.clone(), BinaryMask::filled(out_w, out_h, true)));
    }
    for y in 0..out_h {
        for x in 0..out_w {
            let (sx, sy) = inv.apply((x as f64, y as f64));
            if let Some(v) = frame.bilinear(sx, sy) {
                out.set(x, y, v);
                valid.set(x, y, true);
            }
        }
    }
    Ok((out, valid))
}

pub fn warp_frame(frame: &Frame, h: &Homography, out_w: usize, out_h: usize) -> Result<Frame> {
    Ok(warp_frame_masked(frame, h, out_w, out_h)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_copy() {
        let f = Frame::from_fn(9, 7, |x, y| (x * y) as f64);
        assert_eq!(warp_frame(&f, &Homography::identity(), 9, 7).unwrap(), f);
    }

    #[test]
    fn translated_ramp() {
        let f = Frame::from_fn(20, 10, |x, _| 3.0 * x as f64);
        let out = warp_frame(&f, &Homography::translation(1.0, 0.0), 20, 10).unwrap();
        for y in 0..10 {
            assert_eq!(out.get(0, y), 0.0);
            for x in 1..20 {
                assert!((out.get(x, y) - 3.0 * (x as f64 - 1.0)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn forward_then_inverse_on_smooth_image() {
        let f = Frame::from_fn(64, 64, |x, y| {
            100.0 + 20.0 * (x as f64 * 0.008).sin() * (y as f64 * 0.007).cos()
        });
        let h = Homography::similarity((32.0, 32.0), 0.03, 1.01, (1.3, -0.7));
        let there = warp_frame(&f, &h, 64, 64).unwrap();
        let back = warp_frame(&there, &h.inverse().unwrap(), 64, 64).unwrap();
        for y in 8..56 {
            for x in 8..56 {
                assert!((back.get(x, y) - f.get(x, y)).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn mask_marks_uncovered_pixels() {
        let f = Frame::filled(10, 10, 5.0);
        let (_, m) = warp_frame_masked(&f, &Homography::translation(3.0, 0.0), 10, 10).unwrap();
        assert!(!m.get(2, 5));
        assert!(m.get(3, 5));
    }
}
