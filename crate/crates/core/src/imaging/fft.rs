//! Two-dimensional discrete Fourier transforms over arbitrary sizes.
//!
//! Row and column passes are delegated to `rustfft`, which handles
//! non-power-of-two lengths with mixed-radix and Bluestein plans. The
//! forward transform is unnormalized; the inverse carries the `1/(m*n)`
//! factor.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::image::{GrayImage, RealField};
use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Complex raster in row-major order, typically the spectrum of a [`GrayImage`].
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrum {
    width: usize,
    height: usize,
    data: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn new(width: usize, height: usize, data: Vec<Complex64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage { width, height });
        }
        if data.len() != width * height {
            return Err(Error::BufferLength {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub(crate) fn from_parts(width: usize, height: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    /// Sum of squared magnitudes, `||x_hat||^2`.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Builds `magnitude * exp(j * phase)` element-wise.
    pub fn from_polar(magnitude: &RealField, phase: &RealField) -> Result<Self> {
        if magnitude.dims() != phase.dims() {
            return Err(Error::DimensionMismatch {
                expected: magnitude.dims(),
                actual: phase.dims(),
            });
        }
        let data = magnitude
            .data()
            .iter()
            .zip(phase.data())
            .map(|(&r, &t)| Complex64::from_polar(r, t))
            .collect();
        Ok(Self::from_parts(
            magnitude.width(),
            magnitude.height(),
            data,
        ))
    }
}

/// Reusable 2-D transform plan for one raster size.
pub struct Fft2d {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2d {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage { width, height });
        }
        PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            Ok(Self {
                width,
                height,
                row_fwd: p.plan_fft_forward(width),
                row_inv: p.plan_fft_inverse(width),
                col_fwd: p.plan_fft_forward(height),
                col_inv: p.plan_fft_inverse(height),
            })
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// In-place unnormalized forward transform.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.forward_with(buf, &mut FftWork::default());
    }

    /// In-place inverse transform including the `1/(m*n)` normalization.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse_with(buf, &mut FftWork::default());
    }

    /// [`Fft2d::forward`] with caller-provided scratch space.
    pub fn forward_with(&self, buf: &mut [Complex64], work: &mut FftWork) {
        self.run(buf, &self.row_fwd, &self.col_fwd, work);
    }

    /// [`Fft2d::inverse`] with caller-provided scratch space.
    pub fn inverse_with(&self, buf: &mut [Complex64], work: &mut FftWork) {
        self.run(buf, &self.row_inv, &self.col_inv, work);
        let scale = 1.0 / (self.width * self.height) as f64;
        for c in buf.iter_mut() {
            *c *= scale;
        }
    }

    /// Inverse transform without the `1/(m*n)` factor, for callers that fold
    /// the normalization into later arithmetic.
    pub(crate) fn inverse_unscaled_with(&self, buf: &mut [Complex64], work: &mut FftWork) {
        self.run(buf, &self.row_inv, &self.col_inv, work);
    }

    fn run(
        &self,
        buf: &mut [Complex64],
        rows: &Arc<dyn Fft<f64>>,
        cols: &Arc<dyn Fft<f64>>,
        work: &mut FftWork,
    ) {
        let (w, h) = (self.width, self.height);
        assert_eq!(buf.len(), w * h, "buffer does not match plan size");
        let scratch_len = rows
            .get_inplace_scratch_len()
            .max(cols.get_inplace_scratch_len());
        if work.scratch.len() < scratch_len {
            work.scratch.resize(scratch_len, Complex64::default());
        }
        if w > 1 {
            rows.process_with_scratch(buf, &mut work.scratch[..rows.get_inplace_scratch_len()]);
        }
        if h > 1 {
            work.transposed.resize(w * h, Complex64::default());
            transpose::transpose(buf, &mut work.transposed, w, h);
            cols.process_with_scratch(
                &mut work.transposed,
                &mut work.scratch[..cols.get_inplace_scratch_len()],
            );
            transpose::transpose(&work.transposed, buf, h, w);
        }
    }
}

/// Reusable scratch buffers for [`Fft2d`].
#[derive(Default)]
pub struct FftWork {
    scratch: Vec<Complex64>,
    transposed: Vec<Complex64>,
}

/// Unnormalized forward 2-D DFT of a real raster.
pub fn dft2d(img: &GrayImage) -> Result<ComplexSpectrum> {
    let plan = Fft2d::new(img.width(), img.height())?;
    let mut data: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan.forward(&mut data);
    Ok(ComplexSpectrum::from_parts(img.width(), img.height(), data))
}

/// Normalized inverse 2-D DFT keeping the full complex result.
pub fn idft2d_complex(spec: &ComplexSpectrum) -> Result<ComplexSpectrum> {
    let plan = Fft2d::new(spec.width, spec.height)?;
    let mut data = spec.data.clone();
    plan.inverse(&mut data);
    Ok(ComplexSpectrum::from_parts(spec.width, spec.height, data))
}

/// Normalized inverse 2-D DFT returning the real part. For spectra of real
/// data the discarded imaginary residue is at round-off level.
pub fn idft2d(spec: &ComplexSpectrum) -> Result<RealField> {
    let out = idft2d_complex(spec)?;
    Ok(GrayImage::from_parts(
        spec.width,
        spec.height,
        out.data.iter().map(|c| c.re).collect(),
    ))
}

/// Splits a spectrum into magnitude `|c|` and phase `atan2(im, re)`.
pub fn magnitude_phase(spec: &ComplexSpectrum) -> (RealField, RealField) {
    let (w, h) = spec.dims();
    let mag = spec.data.iter().map(|c| c.norm()).collect();
    let phase = spec.data.iter().map(|c| c.im.atan2(c.re)).collect();
    (
        GrayImage::from_parts(w, h, mag),
        GrayImage::from_parts(w, h, phase),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(w, h, |_, _| rng.random_range(0.0..255.0))
    }

    // Direct O(N^2) evaluation of the DFT definition.
    fn naive_dft(img: &GrayImage) -> Vec<Complex64> {
        let (w, h) = img.dims();
        let mut out = vec![Complex64::default(); w * h];
        for v in 0..h {
            for u in 0..w {
                let mut acc = Complex64::default();
                for y in 0..h {
                    for x in 0..w {
                        let ang = -2.0
                            * std::f64::consts::PI
                            * ((u * x) as f64 / w as f64 + (v * y) as f64 / h as f64);
                        acc += Complex64::from_polar(img.get(x, y), ang);
                    }
                }
                out[v * w + u] = acc;
            }
        }
        out
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let img = GrayImage::new(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let s = dft2d(&img).unwrap();
        for c in s.data() {
            assert!((c - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
        let back = idft2d(&s).unwrap();
        assert_eq!(back.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_is_pure_dc() {
        let c = 3.5;
        let s = dft2d(&GrayImage::filled(4, 4, c)).unwrap();
        assert!((s.data()[0] - Complex64::new(16.0 * c, 0.0)).norm() < 1e-12);
        assert!(s.data()[1..].iter().all(|v| v.norm() < 1e-12));
        let back = idft2d(&s).unwrap();
        assert!(back.data().iter().all(|v| (v - c).abs() < 1e-12));
    }

    #[test]
    fn matches_naive_dft_on_odd_sizes() {
        for &(w, h) in &[(5, 3), (7, 7), (6, 9), (1, 4)] {
            let img = random_image(w, h, (w * 31 + h) as u64);
            let fast = dft2d(&img).unwrap();
            let slow = naive_dft(&img);
            for (a, b) in fast.data().iter().zip(&slow) {
                assert!((a - b).norm() < 1e-8 * (1.0 + b.norm()));
            }
        }
    }

    #[test]
    fn roundtrip_random() {
        for &(w, h, seed) in &[(8, 8, 1), (16, 16, 2), (12, 5, 3)] {
            let img = random_image(w, h, seed);
            let back = idft2d(&dft2d(&img).unwrap()).unwrap();
            for (a, b) in img.data().iter().zip(back.data()) {
                assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn imaginary_residue_is_negligible() {
        let img = random_image(16, 16, 9);
        let out = idft2d_complex(&dft2d(&img).unwrap()).unwrap();
        assert!(out.data().iter().all(|c| c.im.abs() < 1e-9));
    }

    #[test]
    fn magnitude_phase_cases() {
        let s = ComplexSpectrum::new(
            3,
            1,
            vec![
                Complex64::new(3.0, 4.0),
                Complex64::new(-1.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        )
        .unwrap();
        let (m, p) = magnitude_phase(&s);
        assert_eq!(m.data(), &[5.0, 1.0, 0.0]);
        assert_eq!(p.data()[0], 4f64.atan2(3.0));
        assert_eq!(p.data()[1], std::f64::consts::PI);
        assert_eq!(p.data()[2], 0.0);
    }

    #[test]
    fn polar_reconstruction() {
        let s = dft2d(&random_image(9, 7, 5)).unwrap();
        let (m, p) = magnitude_phase(&s);
        let r = ComplexSpectrum::from_polar(&m, &p).unwrap();
        for (a, b) in s.data().iter().zip(r.data()) {
            assert!((a - b).norm() <= 1e-9 * a.norm().max(1.0));
        }
    }

    #[test]
    fn rejects_empty() {
        assert!(ComplexSpectrum::new(0, 2, vec![]).is_err());
        assert!(Fft2d::new(3, 0).is_err());
    }
}
