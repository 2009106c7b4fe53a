//! Sequence-level driver, synthetic data and scoring.

pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod score;
pub mod synth;

pub use config::PipelineConfig;
pub use manifest::{read_ground_truth, write_ground_truth, GroundTruthPose, SequenceManifest};
pub use pipeline::{run_sequence, RunOutput};
pub use report::emit_reports;
pub use score::{ground_truth_positives, score, EvalParams, PRPoint};
pub use synth::{generate_synthetic, SynthSpec};
