use super::image::BinaryMask;

/// Inclusive pixel bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BBox {
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
}

impl BBox {
    pub fn width(&self) -> usize {
        self.max_x - self.min_x + 1
    }

    pub fn height(&self) -> usize {
        self.max_y - self.min_y + 1
    }

    /// Whether `(x, y)` lies within the box grown by `margin` on every side.
    pub fn contains_with_margin(&self, x: f64, y: f64, margin: f64) -> bool {
        x >= self.min_x as f64 - margin
            && x <= self.max_x as f64 + margin
            && y >= self.min_y as f64 - margin
            && y <= self.max_y as f64 + margin
    }
}

/// A maximal 8-connected set of foreground pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct Blob {
    /// Pixels in raster order.
    pub pixels: Vec<(usize, usize)>,
    pub bbox: BBox,
    pub centroid: (f64, f64),
}

impl Blob {
    /// Builds a blob from an arbitrary non-empty pixel list. Connectivity is
    /// the caller's responsibility.
    pub fn from_pixels(mut pixels: Vec<(usize, usize)>) -> Self {
        assert!(!pixels.is_empty(), "blob needs at least one pixel");
        pixels.sort_by_key(|&(x, y)| (y, x));
        pixels.dedup();
        let mut bbox = BBox {
            min_x: usize::MAX,
            min_y: usize::MAX,
            max_x: 0,
            max_y: 0,
        };
        let (mut sx, mut sy) = (0.0, 0.0);
        for &(x, y) in &pixels {
            bbox.min_x = bbox.min_x.min(x);
            bbox.min_y = bbox.min_y.min(y);
            bbox.max_x = bbox.max_x.max(x);
            bbox.max_y = bbox.max_y.max(y);
            sx += x as f64;
            sy += y as f64;
        }
        let n = pixels.len() as f64;
        Self {
            pixels,
            bbox,
            centroid: (sx / n, sy / n),
        }
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    /// Convex hull of the pixel centres, counter-clockwise in image
    /// coordinates, starting from the lowest (x, y).
    pub fn convex_hull(&self) -> Vec<(f64, f64)> {
        convex_hull(&self.pixels)
    }
}

/// Andrew's monotone chain on integer points; collinear points dropped.
pub fn convex_hull(points: &[(usize, usize)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(i64, i64)> = points.iter().map(|&(x, y)| (x as i64, y as i64)).collect();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() <= 2 {
        return pts.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
    }
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(pts.len() * 2);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull.into_iter().map(|(x, y)| (x as f64, y as f64)).collect()
}

/// Maximal 8-connected foreground regions, ordered by the raster position of
/// each region's first pixel.
pub fn connected_components(mask: &BinaryMask) -> Vec<Blob> {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut visited = vec![false; w * h];
    let mut blobs = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !bits[start] || visited[start] {
            continue;
        }
        visited[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(idx) = stack.pop() {
            let (x, y) = (idx % w, idx / w);
            pixels.push((x, y));
            let y_lo = y.saturating_sub(1);
            let y_hi = (y + 1).min(h - 1);
            let x_lo = x.saturating_sub(1);
            let x_hi = (x + 1).min(w - 1);
            for ny in y_lo..=y_hi {
                for nx in x_lo..=x_hi {
                    let n = ny * w + nx;
                    if bits[n] && !visited[n] {
                        visited[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        blobs.push(Blob::from_pixels(pixels));
    }
    blobs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_with(w: usize, h: usize, on: &[(usize, usize)]) -> BinaryMask {
        let mut m = BinaryMask::empty(w, h);
        for &(x, y) in on {
            m.set(x, y, true);
        }
        m
    }

    #[test]
    fn empty_mask_has_no_blobs() {
        assert!(connected_components(&BinaryMask::empty(8, 8)).is_empty());
    }

    #[test]
    fn single_pixel_blob() {
        let blobs = connected_components(&mask_with(8, 8, &[(3, 4)]));
        assert_eq!(blobs.len(), 1);
        assert_eq!(blobs[0].area(), 1);
        assert_eq!(blobs[0].centroid, (3.0, 4.0));
    }

    #[test]
    fn diagonal_pixels_are_connected() {
        let blobs = connected_components(&mask_with(4, 4, &[(0, 0), (1, 1)]));
        assert_eq!(blobs.len(), 1);
        assert_eq!(blobs[0].area(), 2);
    }

    #[test]
    fn blobs_ordered_by_first_raster_pixel() {
        let blobs = connected_components(&mask_with(10, 10, &[(8, 1), (2, 5), (5, 0)]));
        let firsts: Vec<_> = blobs.iter().map(|b| b.pixels[0]).collect();
        assert_eq!(firsts, vec![(5, 0), (8, 1), (2, 5)]);
    }

    #[test]
    fn l_shape_hull() {
        // Brute-force oracle: hull vertices of an L are its outer corners.
        let pixels = vec![(0, 0), (0, 1), (0, 2), (1, 2), (2, 2)];
        let hull = convex_hull(&pixels);
        assert_eq!(hull, vec![(0.0, 0.0), (2.0, 2.0), (0.0, 2.0)]);
    }

    #[test]
    fn square_blob_centroid() {
        let blob = Blob::from_pixels(vec![(10, 10), (10, 11), (11, 10), (11, 11)]);
        assert_eq!(blob.centroid, (10.5, 10.5));
        assert_eq!(blob.bbox.width(), 2);
    }
}
