//! Frame-by-frame driver: load, detect, query, verify, register.

use std::collections::HashMap;
use std::rc::Rc;
use std::time::{Duration, Instant};

use crate::error::Result;
use crate::eval::config::PipelineConfig;
use crate::eval::manifest::SequenceManifest;
use crate::imaging::{read_image, GrayImage};
use crate::recognition::{Database, DatabaseStats, LoopCandidate, RecognitionParams};
use crate::saliency::{detect, Detection};
use crate::timing::TimingSummary;
use crate::verification::{verify_features, FastBrief, Feature, FeatureExtractor, LoopDecision};

/// Stage names in report order. `total` spans the whole frame.
pub const STAGES: [&str; 6] = [
    "load",
    "saliency",
    "retrieval",
    "verification",
    "registration",
    "total",
];

#[derive(Clone, Debug)]
pub struct RunOutput {
    /// Every verified candidate, accepted or not, in processing order.
    pub decisions: Vec<LoopDecision>,
    /// Per-frame wall-clock summaries keyed by the names in [`STAGES`].
    pub stage_timings: Vec<(String, TimingSummary)>,
    pub frames: usize,
    /// Candidates proposed by retrieval, before verification.
    pub candidates: usize,
    pub database: DatabaseStats,
}

impl RunOutput {
    pub fn stage(&self, name: &str) -> Option<&TimingSummary> {
        self.stage_timings
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    /// Decisions accepted at the configured similarity threshold.
    pub fn accepted(&self, eta_th: f64) -> impl Iterator<Item = &LoopDecision> {
        self.decisions
            .iter()
            .filter(move |d| d.accepted && d.similarity >= eta_th)
    }
}

/// What the pipeline saw for one frame, handed to observers.
pub struct FrameObservation<'a> {
    pub frame_id: u64,
    pub image: &'a GrayImage,
    pub detection: &'a Detection,
    pub candidates: &'a [LoopCandidate],
    pub decisions: &'a [LoopDecision],
}

/// Runs the full pipeline with the default feature extractor.
pub fn run_sequence(manifest: &SequenceManifest, cfg: &PipelineConfig) -> Result<RunOutput> {
    let extractor = FastBrief {
        params: cfg.verification.clone(),
    };
    run_sequence_observed(manifest, cfg, &extractor, &mut |_| Ok(()))
}

/// Runs the pipeline and reports every frame to `observer`. Observer time
/// is excluded from the stage timings.
pub fn run_sequence_observed(
    manifest: &SequenceManifest,
    cfg: &PipelineConfig,
    extractor: &dyn FeatureExtractor,
    observer: &mut dyn FnMut(&FrameObservation) -> Result<()>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let mut db = Database::new(cfg.kernel.clone())?;
    // Retrieval runs at the lowest swept threshold so that the PR sweep can
    // re-threshold recorded similarities afterwards.
    let retrieval = RecognitionParams {
        eta_th: cfg.recognition.eta_th.min(cfg.eval.eta_sweep[0]),
        ..cfg.recognition.clone()
    };
    let paths: HashMap<u64, &std::path::PathBuf> =
        manifest.frames.iter().map(|(id, p)| (*id, p)).collect();
    let mut features: HashMap<u64, Rc<Vec<Feature>>> = HashMap::new();
    let mut extract = |id: u64, img: Option<&GrayImage>| -> Result<Rc<Vec<Feature>>> {
        if let Some(f) = features.get(&id) {
            return Ok(f.clone());
        }
        let loaded;
        let img = match img {
            Some(i) => i,
            None => {
                loaded = read_image(paths[&id])?;
                &loaded
            }
        };
        // A failed extraction verifies as zero matches.
        let f = Rc::new(extractor.extract(img).unwrap_or_default());
        features.insert(id, f.clone());
        Ok(f)
    };

    let mut samples: Vec<Vec<Duration>> = vec![Vec::new(); STAGES.len()];
    let mut decisions = Vec::new();
    let mut candidates_total = 0;
    for (frame_id, path) in &manifest.frames {
        let frame_id = *frame_id;
        let start = Instant::now();

        let t = Instant::now();
        let image = read_image(path)?;
        let load = t.elapsed();

        let t = Instant::now();
        let detection = detect(&image, frame_id, &cfg.saliency)?;
        let saliency = t.elapsed();

        let t = Instant::now();
        let candidates = db.query(frame_id, &detection.regions, &retrieval);
        let retrieval_time = t.elapsed();
        candidates_total += candidates.len();

        let t = Instant::now();
        let mut frame_decisions = Vec::new();
        if !candidates.is_empty() {
            let query = extract(frame_id, Some(&image))?;
            for c in candidates.iter().take(cfg.max_verified_candidates) {
                let matched = extract(c.match_frame, None)?;
                let d = verify_features(c, &query, &matched, &cfg.verification);
                let accepted = d.accepted;
                frame_decisions.push(d);
                if accepted {
                    break;
                }
            }
        }
        let verification = t.elapsed();

        let t = Instant::now();
        db.register_frame(frame_id, &detection.regions, &cfg.recognition)?;
        let registration = t.elapsed();
        let total = start.elapsed();

        for (s, d) in samples.iter_mut().zip([
            load,
            saliency,
            retrieval_time,
            verification,
            registration,
            total,
        ]) {
            s.push(d);
        }
        observer(&FrameObservation {
            frame_id,
            image: &image,
            detection: &detection,
            candidates: &candidates,
            decisions: &frame_decisions,
        })?;
        decisions.extend(frame_decisions);
    }

    Ok(RunOutput {
        decisions,
        stage_timings: STAGES
            .iter()
            .zip(&samples)
            .map(|(name, s)| (name.to_string(), TimingSummary::from_samples(s)))
            .collect(),
        frames: manifest.frames.len(),
        candidates: candidates_total,
        database: db.stats(),
    })
}
