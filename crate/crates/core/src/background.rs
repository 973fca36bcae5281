//! Median background over registered history and low-threshold
//! foreground extraction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::imgcore::{box_filter, connected_components, morph_open, BinaryMask, Blob, Frame};
use crate::registration::{warp_frame_masked, TransformChain};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubtractionConfig {
    pub tau: f64,
    pub open_kernel: (usize, usize),
    pub brightness_radius: usize,
    /// Number of previous frames `L` in the median.
    pub history: usize,
}

impl SubtractionConfig {
    /// Full stitched image column.
    pub fn full() -> Self {
        Self {
            tau: 8.0,
            open_kernel: (3, 3),
            brightness_radius: 15,
            history: 3,
        }
    }

    /// Area-of-interest column.
    pub fn aoi() -> Self {
        Self {
            tau: 5.0,
            history: 5,
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(invalid!("tau must be positive, got {}", self.tau));
        }
        if self.history == 0 {
            return Err(invalid!("history length must be at least 1"));
        }
        let (kw, kh) = self.open_kernel;
        if kw == 0 || kh == 0 || kw % 2 == 0 || kh % 2 == 0 {
            return Err(invalid!("opening kernel must be odd, got {kw}x{kh}"));
        }
        if self.brightness_radius == 0 {
            return Err(invalid!("brightness radius must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct BackgroundModel {
    pub background: Frame,
    /// False where some history frame did not cover the pixel.
    pub valid: BinaryMask,
    pub aligned: Vec<Frame>,
}

/// Lower median: element `(n - 1) / 2` of the sorted values.
pub fn lower_median(values: &mut [f64]) -> f64 {
    let k = (values.len() - 1) / 2;
    *values.select_nth_unstable_by(k, |a, b| a.total_cmp(b)).1
}

/// Per-pixel lower median of already aligned frames.
pub fn median_stack(frames: &[Frame]) -> Result<Frame> {
    let first = frames.first().ok_or_else(|| invalid!("median of an empty stack"))?;
    if frames.iter().any(|f| !f.same_shape(first)) {
        return Err(Error::DimensionMismatch("median stack frames differ in size".into()));
    }
    let (w, h) = (first.width(), first.height());
    let mut pixels = vec![0.0; w * h];
    pixels.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let mut buf = Vec::with_capacity(frames.len());
        for (x, out) in row.iter_mut().enumerate() {
            buf.clear();
            buf.extend(frames.iter().map(|f| f.get(x, y)));
            *out = lower_median(&mut buf);
        }
    });
    Frame::new(w, h, pixels, first.index())
}

/// Warps `history[k-1]` (frame t-k) by the chained `h_t^{t-k}` and takes
/// the per-pixel median of the first `l` of them.
pub fn build_background(
    history: &[Frame],
    chain: &TransformChain,
    l: usize,
    current_index: i64,
) -> Result<BackgroundModel> {
    if l == 0 {
        return Err(invalid!("history length must be at least 1"));
    }
    if history.len() < l {
        return Err(Error::MissingData(format!(
            "background needs {l} previous frames, have {}",
            history.len()
        )));
    }
    if chain.len() < l {
        return Err(Error::MissingData(format!(
            "background needs {l} chained transforms, have {}",
            chain.len()
        )));
    }
    let (w, h) = (history[0].width(), history[0].height());
    let warped: Vec<(Frame, BinaryMask)> = (1..=l)
        .into_par_iter()
        .map(|k| warp_frame_masked(&history[k - 1], chain.get(k).unwrap(), w, h))
        .collect::<Result<_>>()?;
    let mut valid = BinaryMask::filled(w, h, true);
    for (_, m) in &warped {
        for (v, &b) in valid.bits_mut().iter_mut().zip(m.bits()) {
            *v &= b;
        }
    }
    let aligned: Vec<Frame> = warped.into_iter().map(|(f, _)| f).collect();
    let background = median_stack(&aligned)?.with_index(current_index);
    Ok(BackgroundModel {
        background,
        valid,
        aligned,
    })
}

/// `frame - box(frame) + box(background)`.
pub fn brightness_compensate(frame: &Frame, background: &Frame, radius: usize) -> Result<Frame> {
    if !frame.same_shape(background) {
        return Err(Error::DimensionMismatch("frame and background differ in size".into()));
    }
    let bf = box_filter(frame, radius);
    let bb = box_filter(background, radius);
    let pixels = frame
        .pixels()
        .iter()
        .zip(bf.pixels())
        .zip(bb.pixels())
        .map(|((v, a), b)| v - a + b)
        .collect();
    Frame::new(frame.width(), frame.height(), pixels, frame.index())
}

/// `|frame - background| > tau`, invalid background pixels cleared, then
/// opened with the configured kernel.
pub fn subtract(frame: &Frame, model: &BackgroundModel, cfg: &SubtractionConfig) -> Result<BinaryMask> {
    let bg = &model.background;
    if !frame.same_shape(bg) {
        return Err(Error::DimensionMismatch("frame and background differ in size".into()));
    }
    let bits = frame
        .pixels()
        .iter()
        .zip(bg.pixels())
        .zip(model.valid.bits())
        .map(|((a, b), &ok)| ok && (a - b).abs() > cfg.tau)
        .collect();
    let raw = BinaryMask::new(frame.width(), frame.height(), bits)?;
    morph_open(&raw, cfg.open_kernel.0, cfg.open_kernel.1)
}

/// Fills uncovered background pixels from the frame, compensates the
/// frame's low-frequency brightness toward the background, and subtracts.
pub fn foreground(frame: &Frame, model: &BackgroundModel, cfg: &SubtractionConfig) -> Result<BinaryMask> {
    let mut filled = model.background.clone();
    for (i, (b, &ok)) in filled.pixels_mut().iter_mut().zip(model.valid.bits()).enumerate() {
        if !ok {
            *b = frame.pixels()[i];
        }
    }
    let compensated = brightness_compensate(frame, &filled, cfg.brightness_radius)?;
    subtract(&compensated, model, cfg)
}

/// Candidate detections `S_bg`.
pub fn propose_blobs(mask: &BinaryMask) -> Vec<Blob> {
    connected_components(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::Homography;
    use proptest::prelude::*;

    fn identity_chain(l: usize) -> TransformChain {
        let mut c = TransformChain::new(l);
        for _ in 0..l {
            c.push(Homography::identity());
        }
        c
    }

    fn model_of(bg: Frame) -> BackgroundModel {
        let (w, h) = (bg.width(), bg.height());
        BackgroundModel {
            background: bg,
            valid: BinaryMask::filled(w, h, true),
            aligned: vec![],
        }
    }

    #[test]
    fn static_history_gives_same_frame() {
        let f = Frame::from_fn(12, 10, |x, y| (x * 3 + y) as f64);
        let hist = vec![f.clone(); 3];
        let m = build_background(&hist, &identity_chain(3), 3, 4).unwrap();
        assert_eq!(m.background.pixels(), f.pixels());
        assert_eq!(m.valid.count(), 120);
    }

    #[test]
    fn transient_blob_excluded() {
        let base = Frame::filled(16, 16, 50.0);
        let mut blip = base.clone();
        for y in 4..8 {
            for x in 4..8 {
                blip.set(x, y, 250.0);
            }
        }
        let hist = vec![base.clone(), blip, base.clone()];
        let m = build_background(&hist, &identity_chain(3), 3, 3).unwrap();
        assert_eq!(m.background.pixels(), base.pixels());
    }

    #[test]
    fn median_of_five() {
        let vals = [1.0, 2.0, 3.0, 4.0, 100.0];
        let frames: Vec<Frame> = vals.iter().map(|&v| Frame::filled(2, 2, v)).collect();
        assert_eq!(median_stack(&frames).unwrap().get(1, 1), 3.0);
        let mut even = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(lower_median(&mut even), 2.0);
    }

    #[test]
    fn short_history_rejected() {
        let hist = vec![Frame::filled(8, 8, 1.0); 2];
        assert!(build_background(&hist, &identity_chain(3), 3, 0).is_err());
    }

    #[test]
    fn shifted_history_flags_uncovered_pixels() {
        let hist = vec![Frame::filled(10, 10, 9.0); 2];
        let mut chain = TransformChain::new(2);
        chain.push(Homography::translation(2.0, 0.0));
        chain.push(Homography::identity());
        let m = build_background(&hist, &chain, 2, 2).unwrap();
        // Lag 2 is shifted by 2 px: columns 0 and 1 are uncovered.
        assert!(!m.valid.get(1, 5));
        assert!(m.valid.get(2, 5));
        let frame = Frame::filled(10, 10, 200.0);
        let mask = subtract(&frame, &m, &SubtractionConfig::aoi()).unwrap();
        assert!(!mask.get(0, 5) && !mask.get(1, 5));
    }

    #[test]
    fn constant_offset_removed() {
        let bg = Frame::from_fn(64, 64, |x, y| 80.0 + ((x * 7 + y * 13) % 17) as f64);
        let frame = Frame::from_fn(64, 64, |x, y| bg.get(x, y) + 10.0);
        let c = brightness_compensate(&frame, &bg, 40).unwrap();
        for (a, b) in c.pixels().iter().zip(bg.pixels()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(brightness_compensate(&bg, &bg, 5).unwrap().pixels(), bg.pixels());
    }

    #[test]
    fn vehicle_contrast_survives_compensation() {
        let bg = Frame::filled(64, 64, 90.0);
        let mut frame = Frame::filled(64, 64, 105.0);
        for y in 30..35 {
            for x in 30..35 {
                frame.set(x, y, 105.0 + 60.0);
            }
        }
        let c = brightness_compensate(&frame, &bg, 15).unwrap();
        let contrast = c.get(32, 32) - c.get(5, 5);
        assert!((contrast - 60.0).abs() < 6.0, "{contrast}");
        assert!((c.get(5, 5) - 90.0).abs() < 1e-9);
    }

    #[test]
    fn subtraction_examples() {
        let bg = Frame::filled(20, 20, 100.0);
        let m = model_of(bg.clone());
        let cfg = SubtractionConfig::full();
        assert!(subtract(&bg, &m, &cfg).unwrap().is_empty());

        let mut block = bg.clone();
        for y in 6..10 {
            for x in 6..10 {
                block.set(x, y, 100.0 + cfg.tau + 1.0);
            }
        }
        let mask = subtract(&block, &m, &cfg).unwrap();
        assert_eq!(mask.count(), 16);
        assert!(mask.get(6, 6) && mask.get(9, 9));

        let mut imp = bg.clone();
        imp.set(10, 10, 200.0);
        assert!(subtract(&imp, &m, &cfg).unwrap().is_empty());
    }

    #[test]
    fn static_noise_free_scene_has_no_foreground() {
        let f = Frame::from_fn(40, 30, |x, y| 60.0 + ((x * x + 3 * y) % 50) as f64);
        let hist = vec![f.clone(); 5];
        let m = build_background(&hist, &identity_chain(5), 5, 5).unwrap();
        assert!(foreground(&f, &m, &SubtractionConfig::aoi()).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn median_matches_sort_and_ignores_order(
            l in prop_oneof![Just(3usize), Just(5usize)],
            vals in proptest::collection::vec(0.0f64..255.0, 5 * 6 * 4),
            rot in 0usize..5,
        ) {
            let frames: Vec<Frame> = (0..l)
                .map(|k| Frame::new(6, 4, vals[k * 24..(k + 1) * 24].to_vec(), 0).unwrap())
                .collect();
            let med = median_stack(&frames).unwrap();
            for i in 0..24 {
                let mut col: Vec<f64> = frames.iter().map(|f| f.pixels()[i]).collect();
                col.sort_by(|a, b| a.partial_cmp(b).unwrap());
                prop_assert_eq!(med.pixels()[i], col[(l - 1) / 2]);
            }
            let mut permuted = frames.clone();
            permuted.rotate_left(rot % l);
            permuted.swap(0, l - 1);
            prop_assert_eq!(median_stack(&permuted).unwrap(), med);
        }

        #[test]
        fn subtraction_monotone_in_tau(
            vals in proptest::collection::vec(0.0f64..30.0, 24 * 18),
        ) {
            let frame = Frame::new(24, 18, vals, 0).unwrap();
            let m = model_of(Frame::filled(24, 18, 10.0));
            let low = subtract(&frame, &m, &SubtractionConfig::aoi()).unwrap();
            let high = subtract(&frame, &m, &SubtractionConfig::full()).unwrap();
            for (h, l) in high.bits().iter().zip(low.bits()) {
                prop_assert!(!h || *l);
            }
        }

        #[test]
        fn opened_blobs_have_area_at_least_four(
            bits in proptest::collection::vec(proptest::bool::weighted(0.55), 20 * 20),
        ) {
            let raw = BinaryMask::new(20, 20, bits).unwrap();
            let opened = morph_open(&raw, 3, 3).unwrap();
            for b in propose_blobs(&opened) {
                prop_assert!(b.area() >= 4);
            }
        }
    }
}
