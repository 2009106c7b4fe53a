//! Independent reference implementations shared by the integration tests.
//! They are deliberately naive: direct sums with no FFTs and no shortcuts.

#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use salient_loop::{BBox, GrayImage, RealField};

/// O(N^2) 2-D DFT, row-major, with the `exp(-2 pi i (ux/w + vy/h))` convention.
pub fn naive_dft(img: &GrayImage) -> Vec<Complex64> {
    let (w, h) = img.dims();
    let mut out = vec![Complex64::new(0.0, 0.0); w * h];
    for v in 0..h {
        for u in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let angle = -2.0 * PI * ((u * x) as f64 / w as f64 + (v * y) as f64 / h as f64);
                    acc += Complex64::from_polar(img.get(x, y), angle);
                }
            }
            out[v * w + u] = acc;
        }
    }
    out
}

/// Gaussian kernel between `x` shifted cyclically by every offset and `z`,
/// evaluated pixel by pixel:
/// `k(i, j) = exp(-sum((x[u + i, v + j] - z[u, v])^2) / N / sigma^2)`.
pub fn direct_kernel(x: &RealField, z: &RealField, sigma_k: f64) -> RealField {
    let (w, h) = x.dims();
    let n = (w * h) as f64;
    RealField::from_fn(w, h, |i, j| {
        let mut d = 0.0;
        for v in 0..h {
            for u in 0..w {
                let diff = x.get((u + i) % w, (v + j) % h) - z.get(u, v);
                d += diff * diff;
            }
        }
        (-d / n / (sigma_k * sigma_k)).exp()
    })
}

pub fn random_image(w: usize, h: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| rng.random_range(lo..hi))
}

/// A bright `side x side` square at `(x0, y0)` over a dim, seeded noisy
/// background. Returns the image and the planted box.
pub fn square_stimulus(
    size: usize,
    x0: usize,
    y0: usize,
    side: usize,
    seed: u64,
) -> (GrayImage, BBox) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = GrayImage::from_fn(size, size, |x, y| {
        let bg = 60.0 + rng.random_range(-20.0..=20.0);
        if (x0..x0 + side).contains(&x) && (y0..y0 + side).contains(&y) {
            230.0
        } else {
            bg
        }
    });
    (img, BBox::new(x0, y0, side, side))
}

/// Dense 2-D Gaussian blur with replicated borders, normalized over the
/// full `(2r+1)^2` window with `r = ceil(3 sigma)`.
pub fn dense_gaussian(field: &RealField, sigma: f64) -> RealField {
    let r = (3.0 * sigma).ceil() as isize;
    let mut weights = Vec::new();
    for j in -r..=r {
        for i in -r..=r {
            weights.push((
                i,
                j,
                (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp(),
            ));
        }
    }
    let total: f64 = weights.iter().map(|w| w.2).sum();
    let (w, h) = (field.width() as isize, field.height() as isize);
    RealField::from_fn(field.width(), field.height(), |x, y| {
        weights
            .iter()
            .map(|&(i, j, k)| {
                let sx = (x as isize + i).clamp(0, w - 1) as usize;
                let sy = (y as isize + j).clamp(0, h - 1) as usize;
                field.get(sx, sy) * k
            })
            .sum::<f64>()
            / total
    })
}

/// 8-connected components by breadth-first flood fill, each as a sorted
/// pixel list; the list of components is sorted too.
pub fn flood_fill_components(mask: &salient_loop::BinaryMask) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if seen[start] || !mask.get(start % w, start / w) {
            continue;
        }
        seen[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        let mut comp = Vec::new();
        while let Some(p) = queue.pop_front() {
            let (x, y) = (p % w, p / w);
            comp.push((x, y));
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if !seen[q] && mask.get(nx as usize, ny as usize) {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        comp.sort();
        out.push(comp);
    }
    out.sort();
    out
}
