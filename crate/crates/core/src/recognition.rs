//! Online place-recognition database.
//!
//! Every registered region trains one correlator. A query evaluates each
//! query region against every stored correlator outside the temporal
//! exclusion window and reports, per matching frame, the strongest region
//! pair whose similarity clears the threshold.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::imaging::BBox;
use crate::kcc::{self, Correlator, KernelParams, Patch, ResponseWorkspace};
use crate::saliency::SalientRegion;
use crate::timing::TimingSummary;

#[derive(Clone, Debug, PartialEq)]
pub struct RecognitionParams {
    /// Minimum similarity for a region pair to count as a match.
    pub eta_th: f64,
    /// Entries from the last `exclusion_window` frames are never matched.
    pub exclusion_window: u64,
    /// Region pairs above threshold needed before a frame is proposed.
    pub min_votes: usize,
    /// Regions per frame that are stored, and queried, largest box first.
    pub max_entries_per_frame: usize,
}

impl Default for RecognitionParams {
    fn default() -> Self {
        Self {
            eta_th: 0.4,
            exclusion_window: 100,
            min_votes: 1,
            max_entries_per_frame: 4,
        }
    }
}

impl RecognitionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_th > 0.0 && self.eta_th < 1.0) {
            return Err(Error::param("eta_th", "must lie in (0, 1)"));
        }
        if self.min_votes == 0 {
            return Err(Error::param("min_votes", "must be at least 1"));
        }
        if self.max_entries_per_frame == 0 {
            return Err(Error::param("max_entries_per_frame", "must be at least 1"));
        }
        Ok(())
    }
}

/// Region metadata kept alongside a correlator. The pixels themselves are
/// not retained; the correlator spectrum replaces them.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionSummary {
    pub bbox: BBox,
    pub contrast_density: f64,
    pub edge_complexity: f64,
    pub mean_intensity: f64,
    pub pixel_count: usize,
    pub saliency: f64,
}

impl From<&SalientRegion> for RegionSummary {
    fn from(r: &SalientRegion) -> Self {
        Self {
            bbox: r.bbox,
            contrast_density: r.contrast_density,
            edge_complexity: r.edge_complexity,
            mean_intensity: r.mean_intensity,
            pixel_count: r.pixel_count,
            saliency: r.saliency,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatabaseEntry {
    pub frame_id: u64,
    pub region: RegionSummary,
    pub correlator: Correlator,
}

/// A proposed loop between the query frame and an earlier frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopCandidate {
    pub query_frame: u64,
    pub match_frame: u64,
    /// Similarity of the strongest region pair.
    pub similarity: f64,
    pub query_region_bbox: BBox,
    pub match_region_bbox: BBox,
    /// Region pairs between the two frames at or above the threshold.
    pub votes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatabaseStats {
    pub entries: usize,
    pub frames: usize,
    /// Approximate heap footprint of the stored entries in bytes.
    pub memory_bytes: usize,
    /// Correlator evaluations performed by all queries so far.
    pub responds_evaluated: u64,
    pub query_timing: TimingSummary,
    pub register_timing: TimingSummary,
}

#[derive(Default)]
struct Timings {
    query: Vec<Duration>,
    register: Vec<Duration>,
}

/// Append-only store of trained correlators, ordered by frame id.
pub struct Database {
    kernel: KernelParams,
    entries: Vec<DatabaseEntry>,
    responds: AtomicU64,
    timings: Mutex<Timings>,
}

impl Database {
    pub fn new(kernel: KernelParams) -> Result<Self> {
        kernel.validate()?;
        Ok(Self {
            kernel,
            entries: Vec::new(),
            responds: AtomicU64::new(0),
            timings: Mutex::new(Timings::default()),
        })
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn entries(&self) -> &[DatabaseEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries_for_frame(&self, frame_id: u64) -> &[DatabaseEntry] {
        let lo = self.entries.partition_point(|e| e.frame_id < frame_id);
        let hi = self.entries.partition_point(|e| e.frame_id <= frame_id);
        &self.entries[lo..hi]
    }

    /// Trains and stores correlators for up to `max_entries_per_frame`
    /// regions, largest bounding box first. Regions whose training fails are
    /// skipped. Frames must be registered in non-decreasing id order.
    pub fn register_frame(
        &mut self,
        frame_id: u64,
        regions: &[SalientRegion],
        p: &RecognitionParams,
    ) -> Result<usize> {
        if let Some(last) = self.entries.last() {
            if frame_id < last.frame_id {
                return Err(Error::param(
                    "frame_id",
                    format!("{frame_id} registered after {}", last.frame_id),
                ));
            }
        }
        let start = Instant::now();
        let mut stored = 0;
        for r in select_regions(regions, p.max_entries_per_frame) {
            let trained = kcc::preprocess(&r.patch, self.kernel.patch_side)
                .and_then(|z| kcc::train(&z, &self.kernel));
            if let Ok(correlator) = trained {
                self.entries.push(DatabaseEntry {
                    frame_id,
                    region: RegionSummary::from(r),
                    correlator,
                });
                stored += 1;
            }
        }
        self.lock_timings().register.push(start.elapsed());
        Ok(stored)
    }

    /// Matches the query regions against all entries at least
    /// `exclusion_window` frames older than `frame_id`.
    pub fn query(
        &self,
        frame_id: u64,
        regions: &[SalientRegion],
        p: &RecognitionParams,
    ) -> Vec<LoopCandidate> {
        let start = Instant::now();
        let out = self.query_inner(frame_id, regions, p);
        self.lock_timings().query.push(start.elapsed());
        out
    }

    fn query_inner(
        &self,
        frame_id: u64,
        regions: &[SalientRegion],
        p: &RecognitionParams,
    ) -> Vec<LoopCandidate> {
        let Some(limit) = frame_id.checked_sub(p.exclusion_window) else {
            return Vec::new();
        };
        let eligible = &self.entries[..self.entries.partition_point(|e| e.frame_id <= limit)];
        if eligible.is_empty() {
            return Vec::new();
        }
        let side = self.kernel.patch_side;
        let queries: Vec<(BBox, Patch)> = select_regions(regions, p.max_entries_per_frame)
            .filter_map(|r| kcc::preprocess(&r.patch, side).ok().map(|x| (r.bbox, x)))
            .collect();
        let Ok(mut ws) = ResponseWorkspace::new(side, side) else {
            return Vec::new();
        };

        let mut per_frame: BTreeMap<u64, LoopCandidate> = BTreeMap::new();
        let mut evaluated = 0u64;
        for (qbox, x) in &queries {
            let mut record = |entry: &DatabaseEntry, zeta: f64| {
                if zeta < p.eta_th {
                    return;
                }
                let c = per_frame.entry(entry.frame_id).or_insert(LoopCandidate {
                    query_frame: frame_id,
                    match_frame: entry.frame_id,
                    similarity: f64::NEG_INFINITY,
                    query_region_bbox: *qbox,
                    match_region_bbox: entry.region.bbox,
                    votes: 0,
                });
                c.votes += 1;
                if zeta > c.similarity {
                    c.similarity = zeta;
                    c.query_region_bbox = *qbox;
                    c.match_region_bbox = entry.region.bbox;
                }
            };
            let mut pairs = eligible.chunks_exact(2);
            for pair in &mut pairs {
                if let Ok((ra, rb)) = ws.respond_pair(&pair[0].correlator, &pair[1].correlator, x) {
                    record(&pair[0], ra.zeta);
                    record(&pair[1], rb.zeta);
                }
            }
            if let [last] = pairs.remainder() {
                if let Ok(r) = ws.respond(&last.correlator, x) {
                    record(last, r.zeta);
                }
            }
            evaluated += eligible.len() as u64;
        }
        self.responds.fetch_add(evaluated, Ordering::Relaxed);

        let mut out: Vec<LoopCandidate> = per_frame
            .into_values()
            .filter(|c| c.votes >= p.min_votes)
            .collect();
        out.sort_by(|a, b| {
            b.similarity
                .total_cmp(&a.similarity)
                .then(a.match_frame.cmp(&b.match_frame))
        });
        out
    }

    pub fn stats(&self) -> DatabaseStats {
        let mut frames = 0;
        let mut prev = None;
        for e in &self.entries {
            if prev != Some(e.frame_id) {
                frames += 1;
                prev = Some(e.frame_id);
            }
        }
        let memory_bytes = self
            .entries
            .iter()
            .map(|e| e.correlator.serialized_len() + std::mem::size_of::<DatabaseEntry>())
            .sum();
        let t = self.lock_timings();
        DatabaseStats {
            entries: self.entries.len(),
            frames,
            memory_bytes,
            responds_evaluated: self.responds.load(Ordering::Relaxed),
            query_timing: TimingSummary::from_samples(&t.query),
            register_timing: TimingSummary::from_samples(&t.register),
        }
    }

    fn lock_timings(&self) -> std::sync::MutexGuard<'_, Timings> {
        self.timings.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Writes one correlator file per entry plus `manifest.tsv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::new();
        let k = &self.kernel;
        manifest.push_str(&format!(
            "{KERNEL_TAG}\t{}\t{}\t{}\n",
            k.sigma_k, k.lambda, k.patch_side
        ));
        for (i, e) in self.entries.iter().enumerate() {
            let file = format!("entry_{i:06}.kcc");
            e.correlator.save(dir.join(&file))?;
            let r = &e.region;
            manifest.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                e.frame_id,
                r.bbox.x,
                r.bbox.y,
                r.bbox.w,
                r.bbox.h,
                r.contrast_density,
                r.edge_complexity,
                r.mean_intensity,
                r.pixel_count,
                r.saliency,
                file
            ));
        }
        let path = dir.join(MANIFEST);
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(manifest.as_bytes())
            .map_err(|e| Error::io(&path, e))
    }

    /// Restores a database written by [`Database::save`].
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::format("database manifest", "empty file"))?
            .split('\t')
            .collect();
        if header.len() != 4 || header[0] != KERNEL_TAG {
            return Err(Error::format("database manifest", "missing kernel header"));
        }
        let kernel = KernelParams {
            sigma_k: parse_field(header[1], "sigma_k")?,
            lambda: parse_field(header[2], "lambda")?,
            patch_side: parse_field(header[3], "patch_side")?,
        };
        let mut db = Self::new(kernel)?;
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 11 {
                return Err(Error::format(
                    "database manifest",
                    format!("line {}: expected 11 fields, found {}", n + 2, f.len()),
                ));
            }
            let region = RegionSummary {
                bbox: BBox::new(
                    parse_field(f[1], "x")?,
                    parse_field(f[2], "y")?,
                    parse_field(f[3], "w")?,
                    parse_field(f[4], "h")?,
                ),
                contrast_density: parse_field(f[5], "contrast_density")?,
                edge_complexity: parse_field(f[6], "edge_complexity")?,
                mean_intensity: parse_field(f[7], "mean_intensity")?,
                pixel_count: parse_field(f[8], "pixel_count")?,
                saliency: parse_field(f[9], "saliency")?,
            };
            let frame_id: u64 = parse_field(f[0], "frame_id")?;
            if db.entries.last().is_some_and(|e| e.frame_id > frame_id) {
                return Err(Error::format("database manifest", "frame ids out of order"));
            }
            let correlator = Correlator::load(dir.join(f[10]))?;
            if correlator.side() != db.kernel.patch_side {
                return Err(Error::format(
                    "database manifest",
                    "correlator side mismatch",
                ));
            }
            db.entries.push(DatabaseEntry {
                frame_id,
                region,
                correlator,
            });
        }
        Ok(db)
    }
}

const MANIFEST: &str = "manifest.tsv";
const KERNEL_TAG: &str = "#kernel";

fn parse_field<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format("database manifest", format!("bad {what}: {s:?}")))
}

/// The `cap` regions with the largest boxes; detection order breaks ties.
fn select_regions(regions: &[SalientRegion], cap: usize) -> impl Iterator<Item = &SalientRegion> {
    let mut order: Vec<&SalientRegion> = regions.iter().collect();
    order.sort_by_key(|r| std::cmp::Reverse(r.bbox.area()));
    order.truncate(cap);
    order.into_iter()
}
