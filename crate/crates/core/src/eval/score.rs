//! Precision/recall scoring of loop decisions against ground-truth poses.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::eval::manifest::GroundTruthPose;
use crate::verification::LoopDecision;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalParams {
    /// Two frames are the same place when their poses are this close.
    pub loop_distance_m: f64,
    /// A loop must span at least this many frames.
    pub loop_min_frame_gap: u64,
    /// Similarity thresholds of the precision/recall curve, ascending.
    pub eta_sweep: Vec<f64>,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            loop_distance_m: 10.0,
            loop_min_frame_gap: 100,
            eta_sweep: (0..12).map(|i| (40 + 5 * i) as f64 / 100.0).collect(),
        }
    }
}

impl EvalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.loop_distance_m > 0.0) || !self.loop_distance_m.is_finite() {
            return Err(Error::param("loop_distance_m", "must be positive"));
        }
        if self.eta_sweep.is_empty() {
            return Err(Error::param("eta_sweep", "needs at least one threshold"));
        }
        if self.eta_sweep.iter().any(|t| !t.is_finite()) {
            return Err(Error::param("eta_sweep", "thresholds must be finite"));
        }
        if self.eta_sweep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param(
                "eta_sweep",
                "thresholds must strictly increase",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PRPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl PRPoint {
    fn new(threshold: f64, tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                1.0
            } else {
                num as f64 / den as f64
            }
        };
        Self {
            threshold,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            tp,
            fp,
            fn_,
        }
    }
}

/// Frames that have an earlier frame at most `loop_distance_m` away and at
/// least `loop_min_frame_gap` frames back.
pub fn ground_truth_positives(poses: &[GroundTruthPose], p: &EvalParams) -> Vec<u64> {
    let mut sorted: Vec<&GroundTruthPose> = poses.iter().collect();
    sorted.sort_by_key(|g| g.frame_id);
    sorted
        .iter()
        .filter(|q| {
            sorted.iter().any(|m| {
                m.frame_id + p.loop_min_frame_gap <= q.frame_id
                    && q.distance(m) <= p.loop_distance_m
            })
        })
        .map(|q| q.frame_id)
        .collect()
}

/// Scores accepted decisions at every threshold of `p.eta_sweep`.
///
/// A query frame contributes at most one detection per threshold: its
/// accepted decision with the highest similarity at or above the threshold.
/// That detection is a true positive when the two poses are within
/// `loop_distance_m` and the frames at least `loop_min_frame_gap` apart.
/// Recall is frame-level: each ground-truth positive frame counts once.
/// With no detections precision is 1; with no positives recall is 1.
pub fn score(
    decisions: &[LoopDecision],
    poses: &[GroundTruthPose],
    p: &EvalParams,
) -> Result<Vec<PRPoint>> {
    p.validate()?;
    let by_id: HashMap<u64, &GroundTruthPose> = poses.iter().map(|g| (g.frame_id, g)).collect();
    let pose = |id: u64| by_id.get(&id).copied().ok_or(Error::MissingPose(id));
    for d in decisions {
        pose(d.query_frame)?;
        pose(d.match_frame)?;
    }
    let positives = ground_truth_positives(poses, p).len();

    let mut out = Vec::with_capacity(p.eta_sweep.len());
    for &eta in &p.eta_sweep {
        let mut best: BTreeMap<u64, &LoopDecision> = BTreeMap::new();
        for d in decisions
            .iter()
            .filter(|d| d.accepted && d.similarity >= eta)
        {
            best.entry(d.query_frame)
                .and_modify(|b| {
                    let better = d.similarity > b.similarity
                        || (d.similarity == b.similarity && d.match_frame < b.match_frame);
                    if better {
                        *b = d;
                    }
                })
                .or_insert(d);
        }
        let mut tp = 0;
        let mut fp = 0;
        for d in best.values() {
            let correct = d.query_frame >= d.match_frame + p.loop_min_frame_gap
                && pose(d.query_frame)?.distance(pose(d.match_frame)?) <= p.loop_distance_m;
            if correct {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        out.push(PRPoint::new(eta, tp, fp, positives - tp));
    }
    Ok(out)
}
