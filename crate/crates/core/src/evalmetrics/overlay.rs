use std::path::Path;

use crate::error::{Error, Result};
use crate::imgcore::Frame;

const GT_COLOUR: [u8; 3] = [0, 255, 0];
const DET_COLOUR: [u8; 3] = [255, 0, 0];

fn put(rgb: &mut [u8], w: usize, h: usize, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
        let i = 3 * (y as usize * w + x as usize);
        rgb[i..i + 3].copy_from_slice(&c);
    }
}

/// Grey frame as RGB with ground truth as green crosses and detections as
/// red 7x7 squares.
pub fn render_overlay(frame: &Frame, dets: &[(f64, f64)], gt: &[(f64, f64)]) -> Vec<u8> {
    let (w, h) = (frame.width(), frame.height());
    let mut rgb: Vec<u8> = frame
        .pixels()
        .iter()
        .flat_map(|&v| {
            let g = v.round().clamp(0.0, 255.0) as u8;
            [g, g, g]
        })
        .collect();
    for &(x, y) in gt {
        let (x, y) = (x.round() as i64, y.round() as i64);
        for d in -3..=3 {
            put(&mut rgb, w, h, x + d, y, GT_COLOUR);
            put(&mut rgb, w, h, x, y + d, GT_COLOUR);
        }
    }
    for &(x, y) in dets {
        let (x, y) = (x.round() as i64, y.round() as i64);
        for d in -3..=3 {
            put(&mut rgb, w, h, x + d, y - 3, DET_COLOUR);
            put(&mut rgb, w, h, x + d, y + 3, DET_COLOUR);
            put(&mut rgb, w, h, x - 3, y + d, DET_COLOUR);
            put(&mut rgb, w, h, x + 3, y + d, DET_COLOUR);
        }
    }
    rgb
}

pub fn write_overlay(path: &Path, frame: &Frame, dets: &[(f64, f64)], gt: &[(f64, f64)]) -> Result<()> {
    let rgb = render_overlay(frame, dets, gt);
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut enc = png::Encoder::new(file, frame.width() as u32, frame.height() as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| Error::Format(format!("png: {e}"));
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(&rgb).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(())
}
