use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imgcore::Frame;

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Lattice of uniform values with spacing `cell`, interpolated with a
/// smoothstep. Values lie in [0, 1].
fn lattice(width: usize, height: usize, cell: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gw = (width as f64 / cell).ceil() as usize + 2;
    let gh = (height as f64 / cell).ceil() as usize + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.gen::<f64>()).collect();
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let fy = y as f64 / cell;
        let (iy, ty) = (fy.floor() as usize, smooth(fy.fract()));
        for x in 0..width {
            let fx = x as f64 / cell;
            let (ix, tx) = (fx.floor() as usize, smooth(fx.fract()));
            let g = |i: usize, j: usize| grid[j * gw + i];
            let top = g(ix, iy) + (g(ix + 1, iy) - g(ix, iy)) * tx;
            let bot = g(ix, iy + 1) + (g(ix + 1, iy + 1) - g(ix, iy + 1)) * tx;
            out.push(top + (bot - top) * ty);
        }
    }
    out
}

/// Two-octave value noise spanning roughly 40..=200.
pub fn value_noise(width: usize, height: usize, cell: f64, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coarse = lattice(width, height, cell, &mut rng);
    let fine = lattice(width, height, cell / 2.0, &mut rng);
    let pixels = coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| 40.0 + 160.0 * (0.65 * c + 0.35 * f))
        .collect();
    Frame::new(width, height, pixels, 0).expect("non-empty canvas")
}
