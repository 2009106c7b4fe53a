//! Seeded synthetic loop sequences.
//!
//! Each scene is a smooth background field carrying a few blocky,
//! high-contrast landmarks. The first `scenes` frames show distinct scenes
//! along a straight path; the following `revisits` frames return to scenes
//! `0..revisits` with fresh sensor noise, a small translation and a small
//! scale change. Ground truth places revisit frames at their scene's pose.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::eval::config::{parse_key_values, parse_value};
use crate::eval::manifest::{write_ground_truth, GroundTruthPose, SequenceManifest};
use crate::imaging::{write_pgm, GrayImage};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub scenes: usize,
    pub revisits: usize,
    pub width: usize,
    pub height: usize,
    /// Standard deviation of additive intensity noise, on every frame.
    pub noise_sigma: f64,
    /// Largest revisit translation per axis, in pixels.
    pub max_shift: f64,
    /// Largest relative revisit scale change.
    pub scale_jitter: f64,
    pub landmarks_min: usize,
    pub landmarks_max: usize,
    pub landmark_size_min: usize,
    pub landmark_size_max: usize,
    pub block_size_min: usize,
    pub block_size_max: usize,
    /// Distance between consecutive scene poses in meters.
    pub step_m: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            scenes: 250,
            revisits: 50,
            width: 640,
            height: 480,
            noise_sigma: 2.0,
            max_shift: 4.0,
            scale_jitter: 0.05,
            landmarks_min: 2,
            landmarks_max: 5,
            landmark_size_min: 70,
            landmark_size_max: 140,
            block_size_min: 8,
            block_size_max: 14,
            step_m: 5.0,
        }
    }
}

const WHAT: &str = "synth spec";

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.scenes == 0 {
            return Err(Error::param("scenes", "must be positive"));
        }
        if self.revisits > self.scenes {
            return Err(Error::param("revisits", "cannot exceed scenes"));
        }
        if self.landmarks_min > self.landmarks_max
            || self.landmark_size_min == 0
            || self.landmark_size_min > self.landmark_size_max
            || self.block_size_min == 0
            || self.block_size_min > self.block_size_max
        {
            return Err(Error::param("landmarks", "ranges must be non-empty"));
        }
        if self.width < self.landmark_size_max + 32 || self.height < self.landmark_size_max + 32 {
            return Err(Error::param("width/height", "too small for the landmarks"));
        }
        let non_negative = [
            ("noise_sigma", self.noise_sigma),
            ("max_shift", self.max_shift),
            ("scale_jitter", self.scale_jitter),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(name, "must be non-negative"));
            }
        }
        if self.scale_jitter >= 0.5 {
            return Err(Error::param("scale_jitter", "must be below 0.5"));
        }
        if !(self.step_m > 0.0) {
            return Err(Error::param("step_m", "must be positive"));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Self::default();
        for kv in parse_key_values(text, WHAT)? {
            let v = &kv;
            match kv.key.as_str() {
                "scenes" => s.scenes = parse_value(v, WHAT)?,
                "revisits" => s.revisits = parse_value(v, WHAT)?,
                "width" => s.width = parse_value(v, WHAT)?,
                "height" => s.height = parse_value(v, WHAT)?,
                "noise_sigma" => s.noise_sigma = parse_value(v, WHAT)?,
                "max_shift" => s.max_shift = parse_value(v, WHAT)?,
                "scale_jitter" => s.scale_jitter = parse_value(v, WHAT)?,
                "landmarks_min" => s.landmarks_min = parse_value(v, WHAT)?,
                "landmarks_max" => s.landmarks_max = parse_value(v, WHAT)?,
                "landmark_size_min" => s.landmark_size_min = parse_value(v, WHAT)?,
                "landmark_size_max" => s.landmark_size_max = parse_value(v, WHAT)?,
                "block_size_min" => s.block_size_min = parse_value(v, WHAT)?,
                "block_size_max" => s.block_size_max = parse_value(v, WHAT)?,
                "step_m" => s.step_m = parse_value(v, WHAT)?,
                other => {
                    return Err(Error::format(
                        WHAT,
                        format!("line {}: unknown key {other:?}", kv.line),
                    ))
                }
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn frame_count(&self) -> usize {
        self.scenes + self.revisits
    }

    /// Scene shown by frame `i`.
    pub fn scene_of(&self, frame: usize) -> usize {
        if frame < self.scenes {
            frame
        } else {
            frame - self.scenes
        }
    }

    // Border around the visible frame so that shifted or zoomed-out
    // revisits still sample rendered content.
    fn margin(&self) -> usize {
        let zoom = self.scale_jitter * self.width.max(self.height) as f64 / 2.0;
        (self.max_shift + zoom).ceil() as usize + 2
    }
}

#[derive(Clone, Copy)]
struct Rect {
    x: usize,
    y: usize,
    w: usize,
    h: usize,
}

impl Rect {
    fn overlaps(&self, o: &Rect, gap: usize) -> bool {
        self.x < o.x + o.w + gap
            && o.x < self.x + self.w + gap
            && self.y < o.y + o.h + gap
            && o.y < self.y + self.h + gap
    }
}

fn stream_rng(seed: u64, kind: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((kind << 32) | index as u64);
    rng
}

/// Renders the scene raster, including the margin on every side.
pub fn render_scene(spec: &SynthSpec, seed: u64, scene: usize) -> GrayImage {
    let mut rng = stream_rng(seed, 1, scene);
    let m = spec.margin();
    let (rw, rh) = (spec.width + 2 * m, spec.height + 2 * m);

    // Smooth background: a coarse random grid, bilinearly interpolated.
    let (gw, gh) = (7, 5);
    let grid: Vec<f64> = (0..gw * gh)
        .map(|_| rng.random_range(70.0..180.0))
        .collect();
    let grid = GrayImage::new(gw, gh, grid).expect("grid is valid");
    let mut raster = GrayImage::from_fn(rw, rh, |x, y| {
        let gx = x as f64 / (rw - 1) as f64 * (gw - 1) as f64;
        let gy = y as f64 / (rh - 1) as f64 * (gh - 1) as f64;
        bilinear(&grid, gx, gy)
    });

    let count = rng.random_range(spec.landmarks_min..=spec.landmarks_max);
    let mut placed: Vec<Rect> = Vec::new();
    let edge = 12;
    for _ in 0..count {
        for _attempt in 0..200 {
            let w = rng.random_range(spec.landmark_size_min..=spec.landmark_size_max);
            let h = rng.random_range(spec.landmark_size_min..=spec.landmark_size_max);
            let x = m + rng.random_range(edge..=spec.width - w - edge);
            let y = m + rng.random_range(edge..=spec.height - h - edge);
            let r = Rect { x, y, w, h };
            if placed.iter().any(|p| p.overlaps(&r, 16)) {
                continue;
            }
            let block = rng.random_range(spec.block_size_min..=spec.block_size_max);
            let bw = w.div_ceil(block);
            let levels: Vec<f64> = (0..bw * h.div_ceil(block))
                .map(|_| rng.random_range(25.0..230.0))
                .collect();
            for yy in 0..h {
                for xx in 0..w {
                    raster.set(x + xx, y + yy, levels[(yy / block) * bw + xx / block]);
                }
            }
            placed.push(r);
            break;
        }
    }
    raster
}

fn bilinear(img: &GrayImage, x: f64, y: f64) -> f64 {
    let (w, h) = img.dims();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = img.get(x0, y0) + (img.get(x1, y0) - img.get(x0, y0)) * fx;
    let bottom = img.get(x0, y1) + (img.get(x1, y1) - img.get(x0, y1)) * fx;
    top + (bottom - top) * fy
}

/// Renders frame `frame` of the sequence, noise included, without clamping.
pub fn render_frame(spec: &SynthSpec, seed: u64, frame: usize) -> GrayImage {
    let scene = spec.scene_of(frame);
    let raster = render_scene(spec, seed, scene);
    let m = spec.margin() as f64;
    let (scale, dx, dy) = if frame < spec.scenes {
        (1.0, 0.0, 0.0)
    } else {
        let mut rng = stream_rng(seed, 2, frame);
        let j = spec.scale_jitter;
        let s = if j > 0.0 {
            1.0 + rng.random_range(-j..=j)
        } else {
            1.0
        };
        let t = spec.max_shift;
        let (dx, dy) = if t > 0.0 {
            (rng.random_range(-t..=t), rng.random_range(-t..=t))
        } else {
            (0.0, 0.0)
        };
        (s, dx, dy)
    };
    let (cx, cy) = (spec.width as f64 / 2.0, spec.height as f64 / 2.0);
    let mut noise_rng = stream_rng(seed, 3, frame);
    let normal = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    GrayImage::from_fn(spec.width, spec.height, |x, y| {
        let u = m + cx + (x as f64 + 0.5 - cx) * scale + dx - 0.5;
        let v = m + cy + (y as f64 + 0.5 - cy) * scale + dy - 0.5;
        let n = if spec.noise_sigma > 0.0 {
            normal.sample(&mut noise_rng)
        } else {
            0.0
        };
        bilinear(&raster, u, v) + n
    })
}

/// Ground-truth poses: scene `i` sits at `i * step_m` along the x axis.
pub fn synthetic_poses(spec: &SynthSpec) -> Vec<GroundTruthPose> {
    (0..spec.frame_count())
        .map(|f| GroundTruthPose {
            frame_id: f as u64,
            x: spec.scene_of(f) as f64 * spec.step_m,
            y: 0.0,
            z: None,
        })
        .collect()
}

/// Writes `frames/NNNNN.pgm`, `ground_truth.csv` and `manifest.txt` into
/// `out_dir` and returns the manifest.
pub fn generate_synthetic(
    seed: u64,
    spec: &SynthSpec,
    out_dir: impl AsRef<Path>,
) -> Result<SequenceManifest> {
    spec.validate()?;
    let dir = out_dir.as_ref();
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;

    let mut frames = Vec::with_capacity(spec.frame_count());
    for f in 0..spec.frame_count() {
        let path = frames_dir.join(format!("{f:05}.pgm"));
        write_pgm(&path, &render_frame(spec, seed, f))?;
        frames.push((f as u64, path));
    }
    let gt = dir.join("ground_truth.csv");
    write_ground_truth(&gt, &synthetic_poses(spec))?;
    let manifest = SequenceManifest {
        frames,
        ground_truth: Some(gt),
        dataset: Some(format!("synthetic-seed-{seed}")),
    };
    manifest.write(dir.join("manifest.txt"))?;
    Ok(manifest)
}
