//! Binary PPM (P6, maxval 255) reading and writing.

use super::{CodecError, RgbImage};

fn skip_space_and_comments(data: &[u8], pos: &mut usize) {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            return;
        }
    }
}

fn header_number(data: &[u8], pos: &mut usize, what: &str) -> Result<usize, CodecError> {
    skip_space_and_comments(data, pos);
    let start = *pos;
    while *pos < data.len() && data[*pos].is_ascii_digit() {
        *pos += 1;
    }
    std::str::from_utf8(&data[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CodecError::Ppm(format!("missing or invalid {what}")))
}

pub fn decode_ppm(data: &[u8]) -> Result<RgbImage, CodecError> {
    if data.len() < 2 || &data[..2] != b"P6" {
        return Err(CodecError::Ppm("not a binary PPM (expected P6 magic)".into()));
    }
    let mut pos = 2;
    let width = header_number(data, &mut pos, "width")?;
    let height = header_number(data, &mut pos, "height")?;
    let maxval = header_number(data, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(CodecError::Ppm(format!("maxval {maxval} unsupported (need 255)")));
    }
    if width == 0 || height == 0 {
        return Err(CodecError::Ppm(format!("zero dimension {width}x{height}")));
    }
    if !data.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(CodecError::Ppm("header not terminated by whitespace".into()));
    }
    pos += 1;
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| CodecError::Ppm("dimensions overflow".into()))?;
    let pixels = data
        .get(pos..pos + need)
        .ok_or_else(|| CodecError::Ppm(format!("expected {need} pixel bytes, found {}", data.len() - pos)))?;
    RgbImage::new(width, height, pixels.to_vec())
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}
