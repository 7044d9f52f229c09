//! Binary PPM (P6, 8-bit) images.

use crate::attention::FeatureGrid;
use crate::error::{Error, Result};
use crate::linalg::Real;
use std::fs;
use std::path::Path;

/// Decodes a P6 image into a 3-channel grid with values in `[0, 1]`.
pub fn decode_ppm<T: Real>(bytes: &[u8]) -> Result<FeatureGrid<T>> {
    let mut p = Header { bytes, pos: 0 };
    if bytes.get(..2) != Some(b"P6") {
        return Err(parse_err(0, "missing P6 magic number"));
    }
    p.pos = 2;
    let width = p.number("width")?;
    let height = p.number("height")?;
    let maxval = p.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(parse_err(p.pos, "image has zero size"));
    }
    if !(1..=255).contains(&maxval) {
        return Err(parse_err(p.pos, format!("maxval {maxval} is not 8-bit")));
    }
    match bytes.get(p.pos) {
        Some(b) if b.is_ascii_whitespace() => p.pos += 1,
        _ => return Err(parse_err(p.pos, "expected whitespace after maxval")),
    }
    let need = width * height * 3;
    let payload = &bytes[p.pos..];
    if payload.len() < need {
        return Err(parse_err(
            bytes.len(),
            format!("truncated payload: {} of {need} bytes", payload.len()),
        ));
    }
    let scale = T::lit(maxval as f64);
    let data = payload[..need].iter().map(|&b| T::lit(b as f64) / scale).collect();
    FeatureGrid::new(3, height, width, data)
}

/// Encodes a 3-channel grid; values are clamped to `[0, 1]`, scaled to
/// `[0, 255]` and rounded half to even.
pub fn encode_ppm<T: Real>(grid: &FeatureGrid<T>) -> Result<Vec<u8>> {
    if grid.channels() != 3 {
        return Err(Error::domain(format!(
            "PPM needs 3 channels, grid has {}",
            grid.channels()
        )));
    }
    let mut out = format!("P6\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    out.extend(grid.data().iter().map(|&v| to_byte(v.to_f64())));
    Ok(out)
}

fn to_byte(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0).round_ties_even() as u8
}

pub fn load_image<T: Real>(path: impl AsRef<Path>) -> Result<FeatureGrid<T>> {
    decode_ppm(&fs::read(path)?)
}

pub fn save_image<T: Real>(grid: &FeatureGrid<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_ppm(grid)?)?;
    Ok(())
}

/// Snaps every value to the nearest 8-bit level, i.e. what a save/load
/// roundtrip would produce.
pub fn quantize<T: Real>(grid: &FeatureGrid<T>) -> FeatureGrid<T> {
    grid.map(|v| T::lit(to_byte(v.to_f64()) as f64) / T::lit(255.0))
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let before = self.pos;
        self.skip_space();
        if self.pos == before {
            return Err(parse_err(self.pos, format!("expected whitespace before {what}")));
        }
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(parse_err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(start, format!("{what} out of range")))
    }
}
