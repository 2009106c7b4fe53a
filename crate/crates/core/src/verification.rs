//! Descriptor-count verification of loop candidates.
//!
//! Corners come from a FAST-9 segment test; each corner gets a 256-bit
//! intensity-comparison descriptor sampled from a fixed pattern over a
//! box-smoothed 31x31 neighborhood. Two frames agree when enough descriptor
//! pairs survive brute-force Hamming matching with a distance cap, a ratio
//! test and a mutual nearest-neighbor check.
//!
//! Extraction is reached through [`FeatureExtractor`] so that a different
//! binary descriptor can replace the default [`FastBrief`].

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::imaging::{box_filter, GrayImage};
use crate::recognition::LoopCandidate;

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationParams {
    pub max_features: usize,
    /// Largest accepted Hamming distance, out of 256 bits.
    pub hamming_threshold: u32,
    pub min_matched_pairs: usize,
    /// Nearest must be below `ratio_test` times second-nearest. Values of
    /// 1.0 or more switch the test off.
    pub ratio_test: f64,
    pub cross_check: bool,
    /// Intensity margin of the FAST segment test.
    pub fast_threshold: f64,
}

impl Default for VerificationParams {
    fn default() -> Self {
        Self {
            max_features: 1000,
            hamming_threshold: 64,
            min_matched_pairs: 80,
            ratio_test: 0.8,
            cross_check: true,
            fast_threshold: 20.0,
        }
    }
}

impl VerificationParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_features == 0 {
            return Err(Error::param("max_features", "must be positive"));
        }
        if self.hamming_threshold == 0 || self.hamming_threshold >= 256 {
            return Err(Error::param("hamming_threshold", "must lie in 1..256"));
        }
        if self.min_matched_pairs == 0 {
            return Err(Error::param("min_matched_pairs", "must be positive"));
        }
        if !(self.ratio_test > 0.0) {
            return Err(Error::param("ratio_test", "must be positive"));
        }
        if !(self.fast_threshold > 0.0) {
            return Err(Error::param("fast_threshold", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub x: usize,
    pub y: usize,
    pub score: f64,
}

/// 256 comparison bits packed into four words.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BinaryDescriptor {
    pub bits: [u64; 4],
}

impl BinaryDescriptor {
    pub fn hamming(&self, other: &Self) -> u32 {
        self.bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Feature {
    pub keypoint: Keypoint,
    pub descriptor: BinaryDescriptor,
}

/// Outcome of verifying one candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopDecision {
    pub query_frame: u64,
    pub match_frame: u64,
    pub similarity: f64,
    pub accepted: bool,
    pub match_count: usize,
}

/// Source of binary features for verification.
pub trait FeatureExtractor {
    fn extract(&self, img: &GrayImage) -> Result<Vec<Feature>>;
}

/// FAST-9 corners with fixed-pattern 256-bit descriptors.
#[derive(Clone, Debug, Default)]
pub struct FastBrief {
    pub params: VerificationParams,
}

impl FeatureExtractor for FastBrief {
    fn extract(&self, img: &GrayImage) -> Result<Vec<Feature>> {
        detect_and_describe(img, &self.params)
    }
}

const PATCH_RADIUS: usize = 15;
const SMOOTHING_WINDOW: usize = 5;
// Keypoints keep the full sampling window inside the frame.
const MARGIN: usize = PATCH_RADIUS + 1;

const CIRCLE: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

type PointPair = ((i8, i8), (i8, i8));

/// The 256 point pairs compared by the descriptor: isotropic Gaussian
/// offsets with standard deviation 31/5, clipped to the 31x31 window.
/// Fixed by a constant seed, so every run and every image shares them.
fn sampling_pattern() -> &'static [PointPair; 256] {
    static PATTERN: OnceLock<[PointPair; 256]> = OnceLock::new();
    PATTERN.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_B121);
        let normal = Normal::<f64>::new(0.0, 31.0 / 5.0).expect("valid normal");
        let r = PATCH_RADIUS as f64;
        let mut draw = || normal.sample(&mut rng).round().clamp(-r, r) as i8;
        let mut out = [((0, 0), (0, 0)); 256];
        for pair in out.iter_mut() {
            loop {
                let p = ((draw(), draw()), (draw(), draw()));
                if p.0 != p.1 {
                    *pair = p;
                    break;
                }
            }
        }
        out
    })
}

fn segment_test(img: &GrayImage, x: usize, y: usize, t: f64) -> Option<f64> {
    let w = img.width() as isize;
    let data = img.data();
    let center = y as isize * w + x as isize;
    let c = data[center as usize];
    let at = |k: usize| data[(center + CIRCLE[k].1 * w + CIRCLE[k].0) as usize];

    // Any run of 9 covers at least two of the four compass points.
    let mut bright = 0;
    let mut dark = 0;
    for k in [0, 4, 8, 12] {
        let v = at(k);
        bright += (v > c + t) as u32;
        dark += (v < c - t) as u32;
    }
    if bright < 2 && dark < 2 {
        return None;
    }

    let mut bright_mask = 0u32;
    let mut dark_mask = 0u32;
    for k in 0..16 {
        let v = at(k);
        bright_mask |= ((v > c + t) as u32) << k;
        dark_mask |= ((v < c - t) as u32) << k;
    }
    let has_run = |m: u32| {
        let mut r = m | (m << 16);
        for _ in 0..8 {
            r &= r >> 1;
        }
        r & 0xFFFF != 0
    };
    let mask = if has_run(bright_mask) {
        bright_mask
    } else if has_run(dark_mask) {
        dark_mask
    } else {
        return None;
    };
    let score = (0..16)
        .filter(|&k| mask & (1 << k) != 0)
        .map(|k| (at(k) - c).abs() - t)
        .sum();
    Some(score)
}

/// FAST-9 corners with 3x3 non-maximum suppression, strongest first.
pub fn detect_corners(img: &GrayImage, threshold: f64, max_features: usize) -> Vec<Keypoint> {
    let (w, h) = img.dims();
    if w < 2 * MARGIN || h < 2 * MARGIN {
        return Vec::new();
    }
    let mut scores = vec![0.0f64; w * h];
    for y in MARGIN..h - MARGIN {
        for x in MARGIN..w - MARGIN {
            if let Some(s) = segment_test(img, x, y, threshold) {
                scores[y * w + x] = s;
            }
        }
    }
    let mut kps = Vec::new();
    for y in MARGIN..h - MARGIN {
        for x in MARGIN..w - MARGIN {
            let s = scores[y * w + x];
            if s <= 0.0 {
                continue;
            }
            // Ties go to the first pixel in raster order.
            let mut is_max = true;
            'nbr: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let n = ((y as isize + dy) as usize) * w + (x as isize + dx) as usize;
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if scores[n] > s || (earlier && scores[n] == s) {
                        is_max = false;
                        break 'nbr;
                    }
                }
            }
            if is_max {
                kps.push(Keypoint { x, y, score: s });
            }
        }
    }
    kps.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
    });
    kps.truncate(max_features);
    kps
}

fn describe(smoothed: &GrayImage, kp: &Keypoint) -> BinaryDescriptor {
    let mut bits = [0u64; 4];
    let px = |(dx, dy): (i8, i8)| {
        smoothed.get(
            (kp.x as isize + dx as isize) as usize,
            (kp.y as isize + dy as isize) as usize,
        )
    };
    for (i, &(a, b)) in sampling_pattern().iter().enumerate() {
        if px(a) < px(b) {
            bits[i / 64] |= 1 << (i % 64);
        }
    }
    BinaryDescriptor { bits }
}

/// Corners plus descriptors. Images smaller than the sampling window give
/// an empty list.
pub fn detect_and_describe(img: &GrayImage, p: &VerificationParams) -> Result<Vec<Feature>> {
    p.validate()?;
    let kps = detect_corners(img, p.fast_threshold, p.max_features);
    if kps.is_empty() {
        return Ok(Vec::new());
    }
    let smoothed = box_filter(img, SMOOTHING_WINDOW)?;
    Ok(kps
        .into_iter()
        .map(|keypoint| Feature {
            descriptor: describe(&smoothed, &keypoint),
            keypoint,
        })
        .collect())
}

#[derive(Clone, Copy)]
struct Nearest {
    best: u32,
    second: u32,
    index: usize,
}

impl Nearest {
    const EMPTY: Self = Self {
        best: u32::MAX,
        second: u32::MAX,
        index: usize::MAX,
    };

    fn offer(&mut self, d: u32, index: usize) {
        if d < self.best {
            self.second = self.best;
            self.best = d;
            self.index = index;
        } else if d < self.second {
            self.second = d;
        }
    }

    fn passes_ratio(&self, ratio: f64) -> bool {
        ratio >= 1.0 || self.second == u32::MAX || (self.best as f64) < ratio * self.second as f64
    }
}

/// Counts accepted descriptor pairs between two lists. With cross-checking
/// on, a pair must be each other's nearest neighbor and pass the ratio test
/// in both directions, which makes the count symmetric in its arguments.
pub fn brute_force_match(
    a: &[BinaryDescriptor],
    b: &[BinaryDescriptor],
    p: &VerificationParams,
) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut rows = vec![Nearest::EMPTY; a.len()];
    let mut cols = vec![Nearest::EMPTY; b.len()];
    for (i, da) in a.iter().enumerate() {
        let row = &mut rows[i];
        for (j, db) in b.iter().enumerate() {
            let d = da.hamming(db);
            row.offer(d, j);
            cols[j].offer(d, i);
        }
    }
    rows.iter()
        .enumerate()
        .filter(|(i, r)| {
            if r.best > p.hamming_threshold || !r.passes_ratio(p.ratio_test) {
                return false;
            }
            if !p.cross_check {
                return true;
            }
            let c = &cols[r.index];
            c.index == *i && c.passes_ratio(p.ratio_test)
        })
        .count()
}

fn descriptors(features: &[Feature]) -> Vec<BinaryDescriptor> {
    features.iter().map(|f| f.descriptor).collect()
}

/// Verifies a candidate from already extracted features.
pub fn verify_features(
    candidate: &LoopCandidate,
    query: &[Feature],
    matched: &[Feature],
    p: &VerificationParams,
) -> LoopDecision {
    let count = brute_force_match(&descriptors(query), &descriptors(matched), p);
    LoopDecision {
        query_frame: candidate.query_frame,
        match_frame: candidate.match_frame,
        similarity: candidate.similarity,
        accepted: count >= p.min_matched_pairs,
        match_count: count,
    }
}

/// Accepts the candidate when at least `min_matched_pairs` descriptor pairs
/// match. Extraction failures reject with a count of zero.
pub fn verify(
    candidate: &LoopCandidate,
    query_img: &GrayImage,
    match_img: &GrayImage,
    p: &VerificationParams,
) -> LoopDecision {
    let extracted =
        detect_and_describe(query_img, p).and_then(|q| Ok((q, detect_and_describe(match_img, p)?)));
    match extracted {
        Ok((q, m)) => verify_features(candidate, &q, &m, p),
        Err(_) => LoopDecision {
            query_frame: candidate.query_frame,
            match_frame: candidate.match_frame,
            similarity: candidate.similarity,
            accepted: false,
            match_count: 0,
        },
    }
}
