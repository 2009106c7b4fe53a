//! Visual place recognition by re-identifying salient regions.
//!
//! Each frame is searched for salient regions with a log-spectral residual
//! detector ([`saliency`]). Every region trains a kernel cross-correlator in
//! the frequency domain ([`kcc`]), and later regions are tested against the
//! stored correlators to propose loop-closure candidates ([`recognition`]).
//! Candidates are confirmed by brute-force binary descriptor matching
//! ([`verification`]). [`eval`] drives whole sequences and scores them
//! against ground-truth poses.

pub mod error;
pub mod eval;
pub mod imaging;
pub mod kcc;
pub mod recognition;
pub mod saliency;
pub mod timing;
pub mod verification;

pub use error::{Error, Result};
pub use imaging::{BBox, BinaryMask, ComplexSpectrum, GrayImage, RealField};
pub use kcc::{Correlator, KernelParams, Patch};
pub use recognition::{Database, LoopCandidate, RecognitionParams};
pub use saliency::{SaliencyMap, SaliencyParams, SalientRegion};
pub use timing::TimingSummary;
pub use verification::{LoopDecision, VerificationParams};
