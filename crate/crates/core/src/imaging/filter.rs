//! Separable spatial filters with replicate borders.

use super::image::RealField;
use crate::error::{Error, Result};

/// Mean over the `k x k` neighborhood of every element.
pub fn box_filter(field: &RealField, k: usize) -> Result<RealField> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::param(
            "k",
            format!("window size must be odd, got {k}"),
        ));
    }
    if k > field.width().min(field.height()) {
        return Err(Error::param(
            "k",
            format!(
                "window {k} exceeds field {}x{}",
                field.width(),
                field.height()
            ),
        ));
    }
    let taps = vec![1.0 / k as f64; k];
    Ok(convolve_separable(field, &taps))
}

/// Normalized Gaussian taps with radius `ceil(3 * sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::param(
            "sigma",
            format!("must be positive, got {sigma}"),
        ));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    Ok(taps)
}

pub fn gaussian_filter(field: &RealField, sigma: f64) -> Result<RealField> {
    let taps = gaussian_kernel(sigma)?;
    Ok(convolve_separable(field, &taps))
}

/// Applies the same odd-length symmetric kernel along rows then columns.
pub(crate) fn convolve_separable(field: &RealField, taps: &[f64]) -> RealField {
    debug_assert!(taps.len() % 2 == 1);
    let (w, h) = field.dims();
    let r = (taps.len() / 2) as isize;
    let src = field.data();

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out = &mut tmp[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (t, &k) in taps.iter().enumerate() {
                let sx = (x as isize + t as isize - r).clamp(0, w as isize - 1) as usize;
                acc += row[sx] * k;
            }
            *o = acc;
        }
    }

    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (t, &k) in taps.iter().enumerate() {
            let sy = (y as isize + t as isize - r).clamp(0, h as isize - 1) as usize;
            let src_row = &tmp[sy * w..(sy + 1) * w];
            let dst_row = &mut out[y * w..(y + 1) * w];
            for (d, &s) in dst_row.iter_mut().zip(src_row) {
                *d += s * k;
            }
        }
    }
    RealField::from_parts(w, h, out)
}
