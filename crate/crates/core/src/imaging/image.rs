use crate::error::{Error, Result};

/// Single-channel real-valued raster in row-major order.
///
/// Pixel intensities live in `[0, 255]` for images loaded from disk, but the
/// same type also carries intermediate real fields (log spectra, saliency
/// maps, kernel responses) where any finite value is allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

/// A real-valued field with the same layout as [`GrayImage`].
pub type RealField = GrayImage;

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
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
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Constant image. Panics on zero dimensions.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "zero-sized image");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "zero-sized image");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_u8(width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        Self::new(width, height, pixels.iter().map(|&p| p as f64).collect())
    }

    // Internal constructor for buffers whose shape is already known to be valid.
    pub(crate) fn from_parts(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel access with coordinates clamped to the border (replicate policy).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Position of the maximum value; the first occurrence wins on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(
            self.width,
            self.height,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Copies the pixels covered by `bbox`, which must lie inside the image.
    pub fn crop(&self, bbox: BBox) -> Result<Self> {
        if bbox.w == 0 || bbox.h == 0 {
            return Err(Error::EmptyImage {
                width: bbox.w,
                height: bbox.h,
            });
        }
        if bbox.x + bbox.w > self.width || bbox.y + bbox.h > self.height {
            return Err(Error::param(
                "bbox",
                format!("{bbox:?} exceeds {}x{}", self.width, self.height),
            ));
        }
        let mut data = Vec::with_capacity(bbox.w * bbox.h);
        for y in bbox.y..bbox.y + bbox.h {
            let row = y * self.width;
            data.extend_from_slice(&self.data[row + bbox.x..row + bbox.x + bbox.w]);
        }
        Ok(Self::from_parts(bbox.w, bbox.h, data))
    }

    /// Rotates the raster by 90 degrees clockwise.
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        Self::from_fn(h, w, |x, y| self.get(y, h - 1 - x))
    }

    /// Cyclic translation: output(x, y) = input(x - dx, y - dy) modulo the size.
    pub fn shift_cyclic(&self, dx: isize, dy: isize) -> Self {
        let (w, h) = (self.width as isize, self.height as isize);
        Self::from_fn(self.width, self.height, |x, y| {
            let sx = (x as isize - dx).rem_euclid(w) as usize;
            let sy = (y as isize - dy).rem_euclid(h) as usize;
            self.get(sx, sy)
        })
    }

    /// Bilinear resampling to the requested size, pixel centers aligned.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "zero-sized resize target");
        if (width, height) == self.dims() {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let xs: Vec<(usize, usize, f64)> = (0..width)
            .map(|x| axis_sample((x as f64 + 0.5) * sx - 0.5, self.width))
            .collect();
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            let (y0, y1, fy) = axis_sample((y as f64 + 0.5) * sy - 0.5, self.height);
            let r0 = &self.data[y0 * self.width..(y0 + 1) * self.width];
            let r1 = &self.data[y1 * self.width..(y1 + 1) * self.width];
            for &(x0, x1, fx) in &xs {
                let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
                let bottom = r1[x0] + (r1[x1] - r1[x0]) * fx;
                data.push(top + (bottom - top) * fy);
            }
        }
        Self::from_parts(width, height, data)
    }

    /// Area-averaging downscale. Each output pixel is the coverage-weighted
    /// mean of the input pixels under its footprint. Falls back to bilinear
    /// when either axis is enlarged.
    pub fn resize_area(&self, width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "zero-sized resize target");
        if width > self.width || height > self.height {
            return self.resize_bilinear(width, height);
        }
        if (width, height) == self.dims() {
            return self.clone();
        }
        let wx = area_weights(self.width, width);
        let wy = area_weights(self.height, height);
        // Horizontal pass into a width x self.height buffer, then vertical.
        let mut tmp = vec![0.0; width * self.height];
        for y in 0..self.height {
            let row = &self.data[y * self.width..(y + 1) * self.width];
            for (ox, taps) in wx.iter().enumerate() {
                tmp[y * width + ox] = taps.iter().map(|&(i, w)| row[i] * w).sum();
            }
        }
        let mut data = vec![0.0; width * height];
        for (oy, taps) in wy.iter().enumerate() {
            for x in 0..width {
                data[oy * width + x] = taps.iter().map(|&(i, w)| tmp[i * width + x] * w).sum();
            }
        }
        Self::from_parts(width, height, data)
    }
}

fn axis_sample(pos: f64, len: usize) -> (usize, usize, f64) {
    let p = pos.clamp(0.0, (len - 1) as f64);
    let i0 = p.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, p - i0 as f64)
}

fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let start = o as f64 * scale;
            let end = start + scale;
            let mut taps = Vec::new();
            let mut i = start.floor() as usize;
            while (i as f64) < end && i < src {
                let lo = start.max(i as f64);
                let hi = end.min(i as f64 + 1.0);
                if hi > lo {
                    taps.push((i, (hi - lo) / scale));
                }
                i += 1;
            }
            taps
        })
        .collect()
}

/// Axis-aligned pixel box: top-left corner plus extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BBox {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }

    pub fn intersection(&self, other: &BBox) -> usize {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.w).min(other.x + other.w);
        let y1 = (self.y + self.h).min(other.y + other.h);
        x1.saturating_sub(x0) * y1.saturating_sub(y0)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection(other) as f64;
        let union = (self.area() + other.area()) as f64 - inter;
        if union == 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.w > 0 && self.h > 0 && self.x + self.w <= width && self.y + self.h <= height
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid_buffers() {
        assert!(matches!(
            GrayImage::new(0, 3, vec![]),
            Err(Error::EmptyImage { .. })
        ));
        assert!(matches!(
            GrayImage::new(2, 2, vec![0.0; 3]),
            Err(Error::BufferLength { .. })
        ));
        assert!(matches!(
            GrayImage::new(2, 1, vec![0.0, f64::NAN]),
            Err(Error::NonFinite(1))
        ));
    }

    #[test]
    fn area_resize_preserves_mean() {
        let img = GrayImage::from_fn(640, 480, |x, y| ((x * 7 + y * 13) % 255) as f64);
        let small = img.resize_area(256, 192);
        assert_eq!(small.dims(), (256, 192));
        assert!((small.mean() - img.mean()).abs() < 1e-9);
    }

    #[test]
    fn bilinear_identity_and_constant() {
        let img = GrayImage::from_fn(5, 4, |x, y| (x + 10 * y) as f64);
        assert_eq!(img.resize_bilinear(5, 4), img);
        let c = GrayImage::filled(7, 3, 42.0).resize_bilinear(64, 64);
        assert!(c.data().iter().all(|&v| (v - 42.0).abs() < 1e-12));
    }

    #[test]
    fn rotate_four_times_is_identity() {
        let img = GrayImage::from_fn(5, 3, |x, y| (x * 3 + y) as f64);
        let r = img.rotate90();
        assert_eq!(r.dims(), (3, 5));
        assert_eq!(r.rotate90().rotate90().rotate90(), img);
    }

    #[test]
    fn bbox_iou() {
        let a = BBox::new(0, 0, 10, 10);
        let b = BBox::new(5, 5, 10, 10);
        assert!((a.iou(&b) - 25.0 / 175.0).abs() < 1e-12);
        assert_eq!(a.iou(&BBox::new(20, 20, 2, 2)), 0.0);
    }
}
