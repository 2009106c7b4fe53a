//! Flat `key = value` configuration covering every tunable of the pipeline.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are rejected so
//! that typos do not silently fall back to defaults.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::score::EvalParams;
use crate::kcc::KernelParams;
use crate::recognition::RecognitionParams;
use crate::saliency::SaliencyParams;
use crate::verification::VerificationParams;

/// One `key = value` line with its 1-based line number.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyValue {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Splits configuration text into key/value pairs.
pub fn parse_key_values(text: &str, what: &'static str) -> Result<Vec<KeyValue>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(what, format!("line {}: expected key = value", i + 1)))?;
        out.push(KeyValue {
            key: k.trim().to_string(),
            value: v.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

pub(crate) fn parse_value<T: std::str::FromStr>(kv: &KeyValue, what: &'static str) -> Result<T> {
    kv.value.parse().map_err(|_| {
        Error::format(
            what,
            format!(
                "line {}: invalid value {:?} for {}",
                kv.line, kv.value, kv.key
            ),
        )
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub saliency: SaliencyParams,
    pub kernel: KernelParams,
    pub recognition: RecognitionParams,
    pub verification: VerificationParams,
    pub eval: EvalParams,
    /// Candidates verified per query frame, strongest first. Verification
    /// stops at the first acceptance.
    pub max_verified_candidates: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            saliency: SaliencyParams::default(),
            kernel: KernelParams::default(),
            recognition: RecognitionParams::default(),
            verification: VerificationParams::default(),
            eval: EvalParams::default(),
            max_verified_candidates: 3,
        }
    }
}

const WHAT: &str = "config";

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.saliency.validate()?;
        self.kernel.validate()?;
        self.recognition.validate()?;
        self.verification.validate()?;
        self.eval.validate()?;
        if self.max_verified_candidates == 0 {
            return Err(Error::param("max_verified_candidates", "must be positive"));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Defaults overridden by the keys present in `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for kv in parse_key_values(text, WHAT)? {
            c.set(&kv)?;
        }
        c.validate()?;
        Ok(c)
    }

    fn set(&mut self, kv: &KeyValue) -> Result<()> {
        let s = &mut self.saliency;
        match kv.key.as_str() {
            "gaussian_sigma" | "sigma" => s.gaussian_sigma = parse_value(kv, WHAT)?,
            "avg_filter_size" | "n" => s.avg_filter_size = parse_value(kv, WHAT)?,
            "contrast_threshold" | "phi_th" => s.contrast_threshold = parse_value(kv, WHAT)?,
            "edge_threshold" | "rho_th" => s.edge_threshold = parse_value(kv, WHAT)?,
            "mask_threshold_factor" => s.mask_threshold_factor = parse_value(kv, WHAT)?,
            "min_region_pixels" => s.min_region_pixels = parse_value(kv, WHAT)?,
            "detection_width" => s.detection_width = parse_value(kv, WHAT)?,
            "log_epsilon" => s.log_epsilon = parse_value(kv, WHAT)?,
            "canny_low" => s.canny_low = parse_value(kv, WHAT)?,
            "canny_high" => s.canny_high = parse_value(kv, WHAT)?,
            "low_lum" => s.low_lum = parse_value(kv, WHAT)?,
            "high_lum" => s.high_lum = parse_value(kv, WHAT)?,
            "sigma_k" => self.kernel.sigma_k = parse_value(kv, WHAT)?,
            "lambda" => self.kernel.lambda = parse_value(kv, WHAT)?,
            "patch_side" => self.kernel.patch_side = parse_value(kv, WHAT)?,
            "eta_th" => self.recognition.eta_th = parse_value(kv, WHAT)?,
            "exclusion_window" => self.recognition.exclusion_window = parse_value(kv, WHAT)?,
            "min_votes" => self.recognition.min_votes = parse_value(kv, WHAT)?,
            "max_entries_per_frame" => {
                self.recognition.max_entries_per_frame = parse_value(kv, WHAT)?
            }
            "max_features" => self.verification.max_features = parse_value(kv, WHAT)?,
            "hamming_threshold" => self.verification.hamming_threshold = parse_value(kv, WHAT)?,
            "min_matched_pairs" => self.verification.min_matched_pairs = parse_value(kv, WHAT)?,
            "ratio_test" => self.verification.ratio_test = parse_value(kv, WHAT)?,
            "cross_check" => self.verification.cross_check = parse_value(kv, WHAT)?,
            "fast_threshold" => self.verification.fast_threshold = parse_value(kv, WHAT)?,
            "loop_distance_m" => self.eval.loop_distance_m = parse_value(kv, WHAT)?,
            "loop_min_frame_gap" => self.eval.loop_min_frame_gap = parse_value(kv, WHAT)?,
            "eta_sweep" => {
                self.eval.eta_sweep = kv
                    .value
                    .split(',')
                    .map(|t| {
                        t.trim().parse::<f64>().map_err(|_| {
                            Error::format(
                                WHAT,
                                format!("line {}: bad eta_sweep entry {t:?}", kv.line),
                            )
                        })
                    })
                    .collect::<Result<_>>()?
            }
            "max_verified_candidates" => self.max_verified_candidates = parse_value(kv, WHAT)?,
            other => {
                return Err(Error::format(
                    WHAT,
                    format!("line {}: unknown key {other:?}", kv.line),
                ))
            }
        }
        Ok(())
    }

    /// Canonical text form; [`PipelineConfig::parse`] reads it back exactly.
    pub fn to_text(&self) -> String {
        let s = &self.saliency;
        let k = &self.kernel;
        let r = &self.recognition;
        let v = &self.verification;
        let e = &self.eval;
        let sweep: Vec<String> = e.eta_sweep.iter().map(|t| t.to_string()).collect();
        // Entries without a value are section headings.
        let entries: Vec<(&str, Option<String>)> = vec![
            ("saliency", None),
            ("gaussian_sigma", Some(s.gaussian_sigma.to_string())),
            ("avg_filter_size", Some(s.avg_filter_size.to_string())),
            ("contrast_threshold", Some(s.contrast_threshold.to_string())),
            ("edge_threshold", Some(s.edge_threshold.to_string())),
            (
                "mask_threshold_factor",
                Some(s.mask_threshold_factor.to_string()),
            ),
            ("min_region_pixels", Some(s.min_region_pixels.to_string())),
            ("detection_width", Some(s.detection_width.to_string())),
            ("log_epsilon", Some(s.log_epsilon.to_string())),
            ("canny_low", Some(s.canny_low.to_string())),
            ("canny_high", Some(s.canny_high.to_string())),
            ("low_lum", Some(s.low_lum.to_string())),
            ("high_lum", Some(s.high_lum.to_string())),
            ("correlator", None),
            ("sigma_k", Some(k.sigma_k.to_string())),
            ("lambda", Some(k.lambda.to_string())),
            ("patch_side", Some(k.patch_side.to_string())),
            ("recognition", None),
            ("eta_th", Some(r.eta_th.to_string())),
            ("exclusion_window", Some(r.exclusion_window.to_string())),
            ("min_votes", Some(r.min_votes.to_string())),
            (
                "max_entries_per_frame",
                Some(r.max_entries_per_frame.to_string()),
            ),
            ("verification", None),
            ("max_features", Some(v.max_features.to_string())),
            ("hamming_threshold", Some(v.hamming_threshold.to_string())),
            ("min_matched_pairs", Some(v.min_matched_pairs.to_string())),
            ("ratio_test", Some(v.ratio_test.to_string())),
            ("cross_check", Some(v.cross_check.to_string())),
            ("fast_threshold", Some(v.fast_threshold.to_string())),
            (
                "max_verified_candidates",
                Some(self.max_verified_candidates.to_string()),
            ),
            ("evaluation", None),
            ("loop_distance_m", Some(e.loop_distance_m.to_string())),
            ("loop_min_frame_gap", Some(e.loop_min_frame_gap.to_string())),
            ("eta_sweep", Some(sweep.join(","))),
        ];
        let mut out = String::new();
        for (key, value) in entries {
            let _ = match value {
                Some(v) => writeln!(out, "{key} = {v}"),
                None => writeln!(out, "# {key}"),
            };
        }
        out
    }
}
