//! Binary PPM (P6) and PGM (P5) reading and writing, 8-bit only.
//!
//! Quantization from the internal `[0, 1]` representation is
//! `byte = floor(clamp(v, 0, 1) * 255 + 0.5)`; bytes map back as `v / 255`.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

/// `floor(clamp(v, 0, 1) * 255 + 0.5)`.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Encodes an image as binary PPM (3 channels) or PGM (1 channel).
pub fn encode(image: &Image) -> Result<Vec<u8>> {
    let magic = match image.channels() {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(Error::Shape(format!(
                "netpbm supports 1 or 3 channels, image has {c}"
            )))
        }
    };
    let mut out = Vec::with_capacity(image.pixel_count() + 32);
    write!(out, "{magic}\n{} {}\n255\n", image.width(), image.height())
        .expect("write to Vec cannot fail");
    out.extend(image.data().iter().map(|&v| quantize(v)));
    Ok(out)
}

pub fn write_file(image: &Image, path: &Path) -> Result<()> {
    crate::fsio::write_atomic(path, &encode(image)?)
}

/// Decodes a binary P5/P6 file with max value 255.
pub fn decode(bytes: &[u8], path: &str) -> Result<Image> {
    let mut cursor = 0usize;
    let magic = read_token(bytes, &mut cursor)
        .ok_or_else(|| Error::malformed(path, "missing magic"))?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        _ => {
            return Err(Error::BadMagic {
                path: path.to_string(),
                expected: "P5 or P6".to_string(),
            })
        }
    };
    let width = read_number(bytes, &mut cursor, path, "width")?;
    let height = read_number(bytes, &mut cursor, path, "height")?;
    let maxval = read_number(bytes, &mut cursor, path, "maxval")?;
    if maxval != 255 {
        return Err(Error::malformed(
            path,
            format!("only 8-bit images supported (maxval 255), got {maxval}"),
        ));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if cursor >= bytes.len() || !bytes[cursor].is_ascii_whitespace() {
        return Err(Error::malformed(path, "missing raster separator"));
    }
    cursor += 1;

    let expected = width * height * channels;
    let raster = &bytes[cursor..];
    if raster.len() < expected {
        return Err(Error::Truncated {
            path: path.to_string(),
            expected: (cursor + expected) as u64,
            actual: bytes.len() as u64,
        });
    }
    let data: Vec<f64> = raster[..expected].iter().map(|&b| b as f64 / 255.0).collect();
    Image::from_vec(height, width, channels, data)
}

pub fn read_file(path: &Path) -> Result<Image> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode(&bytes, &path.display().to_string())
}

fn skip_whitespace_and_comments(bytes: &[u8], cursor: &mut usize) {
    loop {
        while *cursor < bytes.len() && bytes[*cursor].is_ascii_whitespace() {
            *cursor += 1;
        }
        if *cursor < bytes.len() && bytes[*cursor] == b'#' {
            while *cursor < bytes.len() && bytes[*cursor] != b'\n' {
                *cursor += 1;
            }
        } else {
            return;
        }
    }
}

fn read_token<'a>(bytes: &'a [u8], cursor: &mut usize) -> Option<&'a [u8]> {
    skip_whitespace_and_comments(bytes, cursor);
    let start = *cursor;
    while *cursor < bytes.len() && !bytes[*cursor].is_ascii_whitespace() {
        *cursor += 1;
    }
    if *cursor > start {
        Some(&bytes[start..*cursor])
    } else {
        None
    }
}

fn read_number(bytes: &[u8], cursor: &mut usize, path: &str, what: &str) -> Result<usize> {
    let token = read_token(bytes, cursor)
        .ok_or_else(|| Error::malformed(path, format!("missing {what}")))?;
    std::str::from_utf8(token)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::malformed(path, format!("unparseable {what}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_rounds_to_nearest() {
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(-0.5), 0);
        assert_eq!(quantize(2.0), 255);
        assert_eq!(quantize(0.5), 128); // 127.5 + 0.5 floors to 128
        assert_eq!(quantize(1.0 / 255.0), 1);
    }

    #[test]
    fn ppm_round_trip_preserves_quantized_values() {
        let img = Image::from_vec(
            2,
            2,
            3,
            (0..12).map(|i| i as f64 / 11.0).collect(),
        )
        .unwrap();
        let bytes = encode(&img).unwrap();
        let back = decode(&bytes, "mem").unwrap();
        assert_eq!(back.height(), 2);
        assert_eq!(back.width(), 2);
        assert_eq!(back.channels(), 3);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((quantize(*a) as f64 / 255.0 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pgm_header_and_comments_are_parsed() {
        let bytes = b"P5\n# a comment\n2 1\n255\n\x00\xff";
        let img = decode(bytes, "mem").unwrap();
        assert_eq!(img.channels(), 1);
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn truncated_raster_is_reported_with_byte_counts() {
        let bytes = b"P5\n2 2\n255\n\x00\x01"; // 11 header bytes, 2 of 4 raster bytes
        match decode(bytes, "mem").unwrap_err() {
            Error::Truncated { expected, actual, .. } => {
                assert_eq!(expected, 11 + 4);
                assert_eq!(actual, 11 + 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn wrong_magic_is_reported() {
        let bytes = b"P4\n2 2\n255\n";
        assert!(matches!(
            decode(bytes, "mem").unwrap_err(),
            Error::BadMagic { .. }
        ));
    }
}
