//! Canny edge detection: Gaussian smoothing, Sobel gradients, non-maximum
//! suppression over four direction bins and hysteresis linking.

use super::components::BinaryMask;
use super::filter::gaussian_filter;
use super::image::GrayImage;
use crate::error::{Error, Result};

const SMOOTHING_SIGMA: f64 = 1.4;

pub fn canny_edges(img: &GrayImage, low: f64, high: f64) -> Result<BinaryMask> {
    if !(low > 0.0 && low < high) || !high.is_finite() {
        return Err(Error::param(
            "canny thresholds",
            format!("need 0 < low < high, got low={low} high={high}"),
        ));
    }
    let (w, h) = img.dims();
    let smooth = gaussian_filter(img, SMOOTHING_SIGMA)?;

    let mut mag = vec![0.0; w * h];
    let mut bin = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = |dx: isize, dy: isize| smooth.get_clamped(x as isize + dx, y as isize + dy);
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            mag[y * w + x] = gx.hypot(gy);
            bin[y * w + x] = direction_bin(gx, gy);
        }
    }

    // Ties along the gradient keep the pixel on the positive side only, so a
    // symmetric ridge yields a one-pixel line.
    let at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let mut thin = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let m = mag[y * w + x];
            if m < low {
                continue;
            }
            let (dx, dy) = match bin[y * w + x] {
                0 => (1, 0),
                1 => (1, 1),
                2 => (0, 1),
                _ => (-1, 1),
            };
            let (xi, yi) = (x as isize, y as isize);
            if m >= at(xi - dx, yi - dy) && m > at(xi + dx, yi + dy) {
                thin[y * w + x] = m;
            }
        }
    }

    let mut edges = BinaryMask::new(w, h);
    let mut stack: Vec<usize> = (0..w * h).filter(|&i| thin[i] >= high).collect();
    for &i in &stack {
        edges.set(i % w, i / w, true);
    }
    while let Some(i) = stack.pop() {
        let (x, y) = (i % w, i / w);
        for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
            for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                let j = ny * w + nx;
                if thin[j] >= low && !edges.get(nx, ny) {
                    edges.set(nx, ny, true);
                    stack.push(j);
                }
            }
        }
    }
    Ok(edges)
}

// 0: horizontal gradient, 1: 45 deg, 2: vertical, 3: 135 deg (image y down).
fn direction_bin(gx: f64, gy: f64) -> u8 {
    let mut a = gy.atan2(gx).to_degrees();
    if a < 0.0 {
        a += 180.0;
    }
    if !(22.5..157.5).contains(&a) {
        0
    } else if a < 67.5 {
        1
    } else if a < 112.5 {
        2
    } else {
        3
    }
}
