//! Sequence manifests and ground-truth pose files.
//!
//! A manifest lists one frame per line as `frame_id<TAB>path`, with paths
//! relative to the manifest's directory. Two optional directives may appear
//! as comments: `# dataset: <name>` and `# ground_truth: <path>`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceManifest {
    /// Frames in strictly increasing id order, paths already resolved.
    pub frames: Vec<(u64, PathBuf)>,
    pub ground_truth: Option<PathBuf>,
    pub dataset: Option<String>,
}

const WHAT: &str = "manifest";

impl SequenceManifest {
    /// Reads a manifest and checks that every referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let m = Self::parse(&text, base)?;
        for p in m.frames.iter().map(|(_, p)| p).chain(&m.ground_truth) {
            if !p.is_file() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "listed in manifest"),
                ));
            }
        }
        Ok(m)
    }

    /// Parses manifest text, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut frames: Vec<(u64, PathBuf)> = Vec::new();
        let mut ground_truth = None;
        let mut dataset = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((k, v)) = comment.split_once(':') {
                    match k.trim() {
                        "ground_truth" => ground_truth = Some(base.join(v.trim())),
                        "dataset" => dataset = Some(v.trim().to_string()),
                        _ => {}
                    }
                }
                continue;
            }
            let (id, rel) = line.split_once('\t').ok_or_else(|| {
                Error::format(WHAT, format!("line {}: expected frame_id<TAB>path", i + 1))
            })?;
            let id: u64 = id
                .trim()
                .parse()
                .map_err(|_| Error::format(WHAT, format!("line {}: bad frame id {id:?}", i + 1)))?;
            if frames.last().is_some_and(|(prev, _)| *prev >= id) {
                return Err(Error::format(
                    WHAT,
                    format!("line {}: frame ids must strictly increase", i + 1),
                ));
            }
            frames.push((id, base.join(rel.trim())));
        }
        Ok(Self {
            frames,
            ground_truth,
            dataset,
        })
    }

    /// Writes the manifest with paths relative to `dir` where possible.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
        let mut out = String::new();
        if let Some(d) = &self.dataset {
            out.push_str(&format!("# dataset: {d}\n"));
        }
        if let Some(g) = &self.ground_truth {
            out.push_str(&format!("# ground_truth: {}\n", rel(g)));
        }
        for (id, p) in &self.frames {
            out.push_str(&format!("{id}\t{}\n", rel(p)));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Planar position of a frame in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruthPose {
    pub frame_id: u64,
    pub x: f64,
    pub y: f64,
    pub z: Option<f64>,
}

impl GroundTruthPose {
    /// Euclidean distance, including height when both poses carry it.
    pub fn distance(&self, other: &Self) -> f64 {
        let dz = match (self.z, other.z) {
            (Some(a), Some(b)) => a - b,
            _ => 0.0,
        };
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + dz * dz).sqrt()
    }
}

/// Reads `frame_id,x,y[,z]` rows. A header row is optional.
pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthPose>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
    let mut poses = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        if rec.iter().all(|f| f.is_empty()) || rec.get(0).is_some_and(|f| f.starts_with('#')) {
            continue;
        }
        let bad = |what: &str| {
            Error::format(
                "ground truth",
                format!("{}: row {}: {what}", path.display(), i + 1),
            )
        };
        let Ok(frame_id) = rec[0].parse::<u64>() else {
            if i == 0 {
                continue; // header
            }
            return Err(bad("bad frame id"));
        };
        if !(3..=4).contains(&rec.len()) {
            return Err(bad("expected 3 or 4 columns"));
        }
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad("non-numeric or non-finite coordinate"))
        };
        poses.push(GroundTruthPose {
            frame_id,
            x: num(1)?,
            y: num(2)?,
            z: if rec.len() == 4 { Some(num(3)?) } else { None },
        });
    }
    Ok(poses)
}

pub fn write_ground_truth(path: impl AsRef<Path>, poses: &[GroundTruthPose]) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let with_z = poses.iter().any(|p| p.z.is_some());
    if with_z {
        w.write_record(["frame_id", "x", "y", "z"])
            .map_err(csv_err)?;
    } else {
        w.write_record(["frame_id", "x", "y"]).map_err(csv_err)?;
    }
    for p in poses {
        let mut row = vec![p.frame_id.to_string(), p.x.to_string(), p.y.to_string()];
        if with_z {
            row.push(p.z.unwrap_or(0.0).to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
