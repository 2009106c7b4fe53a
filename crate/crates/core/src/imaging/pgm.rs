//! Binary PGM (P5) reading and writing.

use std::fs;
use std::path::Path;

use super::image::GrayImage;
use crate::error::{Error, Result};

/// Decodes a P5 byte stream. 8-bit files map straight to `[0, 255]`;
/// 16-bit files are rescaled into the same range.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P5" {
        return Err(Error::format("PGM", "expected P5 magic"));
    }
    let width = parse_uint(next_token(bytes, &mut pos)?)?;
    let height = parse_uint(next_token(bytes, &mut pos)?)?;
    let maxval = parse_uint(next_token(bytes, &mut pos)?)?;
    if !(1..=65535).contains(&maxval) {
        return Err(Error::format(
            "PGM",
            format!("maxval {maxval} out of range"),
        ));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let n = width * height;
    let raster = bytes.get(pos..).unwrap_or(&[]);
    let data: Vec<f64> = if maxval < 256 {
        if raster.len() < n {
            return Err(Error::format("PGM", "truncated raster"));
        }
        let scale = 255.0 / maxval as f64;
        raster[..n]
            .iter()
            .map(|&b| {
                if maxval == 255 {
                    b as f64
                } else {
                    b as f64 * scale
                }
            })
            .collect()
    } else {
        if raster.len() < 2 * n {
            return Err(Error::format("PGM", "truncated raster"));
        }
        let scale = 255.0 / maxval as f64;
        raster[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
            .collect()
    };
    GrayImage::new(width, height, data)
}

/// Encodes as 8-bit P5, rounding and clamping to `[0, 255]`.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(
        img.data()
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8),
    );
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|e| match e {
        Error::Format { what, reason } => Error::Format {
            what,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    })
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::format("PGM", "truncated header")),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    Ok(&bytes[start..*pos])
}

fn parse_uint(tok: &[u8]) -> Result<usize> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format("PGM", "bad header number"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let pixels: Vec<u8> = (0..=255).collect();
        let img = GrayImage::from_u8(16, 16, &pixels).unwrap();
        let bytes = encode_pgm(&img);
        assert_eq!(&bytes[..15], b"P5\n16 16\n255\n\x00\x01");
        let back = decode_pgm(&bytes).unwrap();
        assert_eq!(back, img);
        assert_eq!(encode_pgm(&back), bytes);
    }

    #[test]
    fn header_comments_and_whitespace() {
        let mut bytes = b"P5 # comment\n# another\n3\t2\n255\n".to_vec();
        bytes.extend([1, 2, 3, 4, 5, 6]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.dims(), (3, 2));
        assert_eq!(img.data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn sixteen_bit_is_rescaled() {
        let mut bytes = b"P5\n2 1\n65535\n".to_vec();
        bytes.extend([0xff, 0xff, 0, 0]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.data(), &[255.0, 0.0]);
    }

    #[test]
    fn rejects_malformed() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n4 4\n255\n\x00\x00").is_err());
        assert!(decode_pgm(b"P5\n0 4\n255\n").is_err());
        assert!(decode_pgm(b"P5\n4").is_err());
    }
}
