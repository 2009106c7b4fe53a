//! Salient-region detection with the log-spectral residual.
//!
//! A frame is reduced to the detection resolution, its log-amplitude
//! spectrum is compared against a local average, and the residual is
//! transformed back with the original phase. The squared reconstruction,
//! smoothed, is the saliency map. Regions are the connected components of
//! the map above a multiple of its mean, then screened by contrast density
//! (intensity variance) and edge complexity (Canny edge fraction).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::imaging::{
    box_filter, canny_edges, connected_components, dft2d, gaussian_filter, idft2d_complex, BBox,
    BinaryMask, ComplexSpectrum, GrayImage, RealField,
};

#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyParams {
    /// Side of the averaging window applied to the log spectrum (odd).
    pub avg_filter_size: usize,
    /// Standard deviation of the Gaussian smoothing the saliency map.
    pub gaussian_sigma: f64,
    /// Mask threshold as a multiple of the mean saliency.
    pub mask_threshold_factor: f64,
    /// Minimum component size at detection resolution.
    pub min_region_pixels: usize,
    /// Minimum contrast density (intensity variance).
    pub contrast_threshold: f64,
    /// Maximum edge complexity (edge pixels per region pixel).
    pub edge_threshold: f64,
    /// Frames wider than this are area-downscaled before detection.
    pub detection_width: usize,
    pub log_epsilon: f64,
    pub canny_low: f64,
    pub canny_high: f64,
    /// Accepted range of mean patch intensity.
    pub low_lum: f64,
    pub high_lum: f64,
}

impl Default for SaliencyParams {
    fn default() -> Self {
        Self {
            avg_filter_size: 7,
            gaussian_sigma: 2.0,
            mask_threshold_factor: 3.0,
            min_region_pixels: 64,
            contrast_threshold: 58.0,
            edge_threshold: 0.5,
            detection_width: 256,
            log_epsilon: 1e-8,
            canny_low: 40.0,
            canny_high: 120.0,
            low_lum: 20.0,
            high_lum: 235.0,
        }
    }
}

impl SaliencyParams {
    pub fn validate(&self) -> Result<()> {
        if self.avg_filter_size.is_multiple_of(2) {
            return Err(Error::param("avg_filter_size", "must be odd"));
        }
        let positive = [
            ("gaussian_sigma", self.gaussian_sigma),
            ("mask_threshold_factor", self.mask_threshold_factor),
            ("contrast_threshold", self.contrast_threshold),
            ("edge_threshold", self.edge_threshold),
            ("log_epsilon", self.log_epsilon),
            ("canny_low", self.canny_low),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if self.detection_width == 0 {
            return Err(Error::param("detection_width", "must be positive"));
        }
        if self.canny_high <= self.canny_low {
            return Err(Error::param("canny_high", "must exceed canny_low"));
        }
        if self.high_lum < self.low_lum {
            return Err(Error::param("high_lum", "must be at least low_lum"));
        }
        Ok(())
    }
}

/// Non-negative saliency field at detection resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    pub values: RealField,
}

impl SaliencyMap {
    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }
}

/// A detected region of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SalientRegion {
    pub frame_id: u64,
    /// Box in original-frame coordinates.
    pub bbox: BBox,
    /// Original-resolution pixels under `bbox`.
    pub patch: GrayImage,
    pub contrast_density: f64,
    pub edge_complexity: f64,
    pub mean_intensity: f64,
    /// Component size at detection resolution.
    pub pixel_count: usize,
    /// Peak saliency inside the component; used for ranking.
    pub saliency: f64,
}

/// Result of running the detector on one frame.
#[derive(Clone, Debug)]
pub struct Detection {
    pub map: SaliencyMap,
    /// Regions that survived [`filter_regions`], strongest first.
    pub regions: Vec<SalientRegion>,
}

/// Downscales `img` to the detection width, preserving aspect ratio.
/// Narrower frames are used as they are.
pub fn to_detection_resolution(img: &GrayImage, p: &SaliencyParams) -> GrayImage {
    if img.width() <= p.detection_width {
        return img.clone();
    }
    let h = ((img.height() as f64 * p.detection_width as f64 / img.width() as f64).round()
        as usize)
        .max(1);
    img.resize_area(p.detection_width, h)
}

fn log_residual(spec: &ComplexSpectrum, p: &SaliencyParams) -> Result<RealField> {
    let (w, h) = spec.dims();
    let log_amp = RealField::from_parts(
        w,
        h,
        spec.data()
            .iter()
            .map(|c| (c.norm() + p.log_epsilon).ln())
            .collect(),
    );
    // Tiny frames cannot host the full window; fall back to the largest odd one.
    let side = w.min(h);
    let k = if p.avg_filter_size <= side {
        p.avg_filter_size
    } else {
        side - (1 - side % 2)
    };
    let avg = box_filter(&log_amp, k)?;
    Ok(RealField::from_parts(
        w,
        h,
        log_amp
            .data()
            .iter()
            .zip(avg.data())
            .map(|(l, a)| (l - a).exp())
            .collect(),
    ))
}

/// Spectral residual `exp(L - mean_k(L))` with `L = log(|F(img)| + eps)`,
/// laid out like the unshifted spectrum.
pub fn spectral_residual(img: &GrayImage, p: &SaliencyParams) -> Result<RealField> {
    log_residual(&dft2d(img)?, p)
}

/// Saliency map of an image already at detection resolution.
pub fn saliency_map(img: &GrayImage, p: &SaliencyParams) -> Result<SaliencyMap> {
    let spec = dft2d(img)?;
    let residual = log_residual(&spec, p)?;
    // Unit phasor of each bin; bins with exactly zero amplitude carry no
    // phase and contribute nothing.
    let data = spec
        .data()
        .iter()
        .zip(residual.data())
        .map(|(c, &r)| {
            let a = c.norm();
            if a > 0.0 {
                c * (r / a)
            } else {
                Complex64::default()
            }
        })
        .collect();
    let rebuilt = idft2d_complex(&ComplexSpectrum::from_parts(
        img.width(),
        img.height(),
        data,
    ))?;
    let power = RealField::from_parts(
        img.width(),
        img.height(),
        rebuilt.data().iter().map(|c| c.norm_sqr()).collect(),
    );
    Ok(SaliencyMap {
        values: gaussian_filter(&power, p.gaussian_sigma)?,
    })
}

/// Mean squared deviation from the mean intensity.
pub fn contrast_density(patch: &GrayImage) -> f64 {
    let m = patch.mean();
    patch.data().iter().map(|v| (v - m) * (v - m)).sum::<f64>() / patch.data().len() as f64
}

/// Fraction of patch pixels marked by the Canny detector.
pub fn edge_complexity(patch: &GrayImage, p: &SaliencyParams) -> Result<f64> {
    let edges = canny_edges(patch, p.canny_low, p.canny_high)?;
    Ok(edges.count() as f64 / patch.data().len() as f64)
}

/// Thresholds `map`, labels the mask and measures every large-enough
/// component on the original frame. Regions are ordered by peak saliency.
pub fn extract_regions(
    map: &SaliencyMap,
    original: &GrayImage,
    frame_id: u64,
    p: &SaliencyParams,
) -> Result<Vec<SalientRegion>> {
    let values = &map.values;
    let tau = p.mask_threshold_factor * values.mean();
    let mask = BinaryMask::threshold(values, tau);
    let sx = original.width() as f64 / values.width() as f64;
    let sy = original.height() as f64 / values.height() as f64;

    let mut regions = Vec::new();
    for comp in connected_components(&mask) {
        if comp.pixel_count() < p.min_region_pixels {
            continue;
        }
        let b = comp.bbox;
        let x0 = ((b.x as f64 * sx).floor() as usize).min(original.width() - 1);
        let y0 = ((b.y as f64 * sy).floor() as usize).min(original.height() - 1);
        let x1 = (((b.x + b.w) as f64 * sx).ceil() as usize).clamp(x0 + 1, original.width());
        let y1 = (((b.y + b.h) as f64 * sy).ceil() as usize).clamp(y0 + 1, original.height());
        let bbox = BBox::new(x0, y0, x1 - x0, y1 - y0);
        let patch = original.crop(bbox)?;
        let saliency = comp
            .pixels
            .iter()
            .map(|&(x, y)| values.get(x, y))
            .fold(0.0, f64::max);
        regions.push(SalientRegion {
            frame_id,
            bbox,
            contrast_density: contrast_density(&patch),
            edge_complexity: edge_complexity(&patch, p)?,
            mean_intensity: patch.mean(),
            pixel_count: comp.pixel_count(),
            saliency,
            patch,
        });
    }
    regions.sort_by(|a, b| {
        b.saliency
            .total_cmp(&a.saliency)
            .then_with(|| a.bbox.cmp(&b.bbox))
    });
    Ok(regions)
}

/// Keeps high-contrast, moderately edged, reasonably exposed regions.
pub fn filter_regions(regions: Vec<SalientRegion>, p: &SaliencyParams) -> Vec<SalientRegion> {
    regions
        .into_iter()
        .filter(|r| {
            r.contrast_density >= p.contrast_threshold
                && r.edge_complexity <= p.edge_threshold
                && (p.low_lum..=p.high_lum).contains(&r.mean_intensity)
        })
        .collect()
}

/// Full detector: downscale, saliency map, extraction, filtering.
pub fn detect(img: &GrayImage, frame_id: u64, p: &SaliencyParams) -> Result<Detection> {
    let small = to_detection_resolution(img, p);
    let map = saliency_map(&small, p)?;
    let regions = filter_regions(extract_regions(&map, img, frame_id, p)?, p);
    Ok(Detection { map, regions })
}
