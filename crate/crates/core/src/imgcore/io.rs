//! Frame and mask persistence: binary PGM (P5, maxval 255) and 8-bit
//! grayscale PNG. Intensities are rounded and clamped to 0..=255 on write.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::image::{BinaryMask, Frame};
use crate::error::{Error, Result};

fn to_bytes(frame: &Frame) -> Vec<u8> {
    frame
        .pixels()
        .iter()
        .map(|&v| v.round().clamp(0.0, 255.0) as u8)
        .collect()
}

pub fn encode_pgm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(&to_bytes(frame));
    out
}

/// Parses a binary PGM. Comments (`#` to end of line) are allowed in the
/// header; only maxval 255 is accepted.
pub fn decode_pgm(bytes: &[u8], index: i64) -> Result<Frame> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else if bytes[pos].is_ascii_whitespace() {
                pos += 1;
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Truncated("PGM header ended early".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or("").to_string());
    }
    if fields[0] != "P5" {
        return Err(Error::Format(format!("expected P5 magic, found {:?}", fields[0])));
    }
    let num = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM {what}: {s:?}")))
    };
    let width = num(&fields[1], "width")?;
    let height = num(&fields[2], "height")?;
    let maxval = num(&fields[3], "maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(Error::Truncated(format!(
            "PGM raster needs {need} bytes, found {}",
            bytes.len().saturating_sub(pos)
        )));
    }
    let pixels = bytes[pos..pos + need].iter().map(|&b| b as f64).collect();
    Frame::new(width, height, pixels, index)
}

pub fn encode_png(frame: &Frame) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, frame.width() as u32, frame.height() as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Format(format!("png: {e}")))?;
        writer
            .write_image_data(&to_bytes(frame))
            .map_err(|e| Error::Format(format!("png: {e}")))?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8], index: i64) -> Result<Frame> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("png: {e}")))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format(format!(
            "expected 8-bit grayscale png, found {:?} {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let frame_info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("png: {e}")))?;
    let (w, h) = (frame_info.width as usize, frame_info.height as usize);
    let stride = frame_info.line_size;
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        pixels.extend(buf[y * stride..y * stride + w].iter().map(|&b| b as f64));
    }
    Frame::new(w, h, pixels, index)
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Reads a frame, choosing the codec from the file extension.
pub fn read_frame(path: &Path, index: i64) -> Result<Frame> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if is_png(path) {
        decode_png(&bytes, index)
    } else {
        decode_pgm(&bytes, index)
    }
}

pub fn write_frame(path: &Path, frame: &Frame) -> Result<()> {
    let bytes = if is_png(path) {
        encode_png(frame)?
    } else {
        encode_pgm(frame)
    };
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Masks are stored as frames with values {0, 255}.
pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    write_frame(path, &mask.to_frame())
}
