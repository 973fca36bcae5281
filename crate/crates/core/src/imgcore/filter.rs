use super::image::{BinaryMask, Frame};

/// Summed-area table with a zero row/column prepended.
pub struct IntegralImage {
    width: usize,
    height: usize,
    sums: Vec<f64>,
}

impl IntegralImage {
    pub fn new(width: usize, height: usize, values: impl Fn(usize, usize) -> f64) -> Self {
        let stride = width + 1;
        let mut sums = vec![0.0; stride * (height + 1)];
        for y in 0..height {
            let mut row = 0.0;
            for x in 0..width {
                row += values(x, y);
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self {
            width,
            height,
            sums,
        }
    }

    /// Sum over the inclusive rectangle, clipped to the image.
    pub fn rect_sum(&self, x0: i64, y0: i64, x1: i64, y1: i64) -> f64 {
        let x0 = x0.clamp(0, self.width as i64) as usize;
        let y0 = y0.clamp(0, self.height as i64) as usize;
        let x1 = (x1 + 1).clamp(0, self.width as i64) as usize;
        let y1 = (y1 + 1).clamp(0, self.height as i64) as usize;
        if x1 <= x0 || y1 <= y0 {
            return 0.0;
        }
        let s = self.width + 1;
        self.sums[y1 * s + x1] - self.sums[y0 * s + x1] - self.sums[y1 * s + x0]
            + self.sums[y0 * s + x0]
    }
}

/// Mean over the `(2r+1)^2` window clipped to the image bounds. Cost does
/// not depend on `radius`.
pub fn box_filter(frame: &Frame, radius: usize) -> Frame {
    let (w, h) = (frame.width(), frame.height());
    let ii = IntegralImage::new(w, h, |x, y| frame.get(x, y));
    let r = radius as i64;
    let mut out = Frame::filled(w, h, 0.0).with_index(frame.index());
    for y in 0..h as i64 {
        let y0 = (y - r).max(0);
        let y1 = (y + r).min(h as i64 - 1);
        for x in 0..w as i64 {
            let x0 = (x - r).max(0);
            let x1 = (x + r).min(w as i64 - 1);
            let n = ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;
            out.set(x as usize, y as usize, ii.rect_sum(x0, y0, x1, y1) / n);
        }
    }
    out
}

/// Box mean restricted to pixels flagged in `support`. Pixels whose window
/// holds no supported pixel get 0.
pub fn masked_box_filter(frame: &Frame, support: &BinaryMask, radius: usize) -> Frame {
    let (w, h) = (frame.width(), frame.height());
    let values = IntegralImage::new(w, h, |x, y| {
        if support.get(x, y) {
            frame.get(x, y)
        } else {
            0.0
        }
    });
    let counts = IntegralImage::new(w, h, |x, y| support.get(x, y) as u8 as f64);
    let r = radius as i64;
    Frame::from_fn(w, h, |x, y| {
        let (x, y) = (x as i64, y as i64);
        let n = counts.rect_sum(x - r, y - r, x + r, y + r);
        if n > 0.0 {
            values.rect_sum(x - r, y - r, x + r, y + r) / n
        } else {
            0.0
        }
    })
    .with_index(frame.index())
}

/// `side x side` patch centred on `center`; pixels outside the frame are 0.
pub fn crop_patch(frame: &Frame, center: (i64, i64), side: usize) -> Frame {
    let half = (side / 2) as i64;
    let (cx, cy) = center;
    Frame::from_fn(side, side, |i, j| {
        frame.get_or_zero(cx - half + i as i64, cy - half + j as i64)
    })
    .with_index(frame.index())
}
