//! Binary PGM (P5) and PPM (P6) reading and writing, 8-bit.
//!
//! Pixel `(i, j)` (column `i`, row `j`) sits at the centre of cell `(i, j)` of
//! a uniform grid over the domain's local frame; row 0 is at `v = 0`.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Domain2, Image, Raster};
use crate::linalg::Vec2;
use crate::{Error, Result};

pub fn read_raster(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

/// Loads a PGM/PPM file. Without an explicit domain the image gets unit
/// height and width equal to its aspect ratio, with origin at zero.
pub fn load_image(path: &Path, domain: Option<Domain2>) -> Result<Image> {
    let raster = read_raster(path)?;
    let domain = match domain {
        Some(d) => d,
        None => Domain2::rect(
            Vec2::zeros(),
            raster.width() as f64 / raster.height() as f64,
            1.0,
        )?,
    };
    Image::from_raster(domain, raster)
}

fn decode(bytes: &[u8]) -> std::result::Result<Raster, String> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos).ok_or("missing magic number")?;
    let channels = match magic.as_slice() {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(format!(
                "unsupported magic `{}` (expected P5 or P6)",
                String::from_utf8_lossy(other)
            ))
        }
    };
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let tok = next_token(bytes, &mut pos).ok_or(format!("missing {name}"))?;
        *slot = std::str::from_utf8(&tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(format!("malformed {name}"))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err("zero image dimension".into());
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("maxval {maxval} not supported (8-bit only)"));
    }
    // exactly one whitespace byte separates the header from the pixels
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err("missing whitespace after header".into());
    }
    pos += 1;
    let n = width * height * channels;
    let body = bytes.get(pos..pos + n).ok_or(format!(
        "truncated pixel data: expected {n} bytes, found {}",
        bytes.len().saturating_sub(pos)
    ))?;
    let scale = maxval as f64;
    let data = body.iter().map(|&b| (b as f64 / scale).min(1.0)).collect();
    Raster::new(width, height, channels, data).map_err(|e| e.to_string())
}

/// Next whitespace-delimited header token, skipping `#` comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Option<Vec<u8>> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| bytes[start..*pos].to_vec())
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes as P5 (one channel) or P6 (three channels).
pub fn encode(raster: &Raster) -> Vec<u8> {
    let magic = if raster.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", raster.width(), raster.height()).into_bytes();
    out.extend(raster.data().iter().map(|&v| quantize(v)));
    out
}

pub fn write_raster(path: &Path, raster: &Raster) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(raster)).map_err(|e| Error::io(path, e))
}
