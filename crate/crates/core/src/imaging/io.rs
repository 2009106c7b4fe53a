//! Frame loading by file signature: binary PGM or PNG.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use super::image::GrayImage;
use super::pgm::decode_pgm;
use crate::error::{Error, Result};

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Decodes a PNG into gray levels in `[0, 255]`. Color images are reduced
/// with Rec. 601 luma weights; alpha is ignored.
pub fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let bad = |e: png::DecodingError| Error::format("PNG", e.to_string());
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(bad)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format("PNG", "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(bad)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    let data: Vec<f64> = buf[..info.buffer_size()]
        .chunks_exact(info.line_size)
        .flat_map(|row| row[..w * channels].chunks_exact(channels))
        .map(|px| match px.len() {
            1 | 2 => px[0] as f64,
            _ => 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64,
        })
        .collect();
    GrayImage::new(w, h, data)
}

/// Reads a PGM (P5) or PNG frame, chosen by the file's leading bytes.
pub fn read_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(&bytes)
    } else if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else {
        Err(Error::format("image", "unrecognized file signature"))
    };
    decoded.map_err(|e| match e {
        Error::Format { what, reason } => Error::Format {
            what,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    })
}
