//! CSV and SVG report files.
//!
//! Numbers are written with fixed precision so that identical runs produce
//! identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::score::PRPoint;
use crate::timing::TimingSummary;
use crate::verification::LoopDecision;

pub const LOOPS_CSV: &str = "loops.csv";
pub const PR_CURVE_CSV: &str = "pr_curve.csv";
pub const TIMING_CSV: &str = "timing.csv";
pub const PR_CURVE_SVG: &str = "pr_curve.svg";

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_loops_csv(path: impl AsRef<Path>, decisions: &[LoopDecision]) -> Result<()> {
    write_rows(
        path.as_ref(),
        &[
            "query_frame",
            "match_frame",
            "zeta",
            "verified",
            "match_count",
        ],
        decisions.iter().map(|d| {
            [
                d.query_frame.to_string(),
                d.match_frame.to_string(),
                format!("{:.6}", d.similarity),
                d.accepted.to_string(),
                d.match_count.to_string(),
            ]
        }),
    )
}

/// Reads a file written by [`write_loops_csv`].
pub fn read_loops_csv(path: impl AsRef<Path>) -> Result<Vec<LoopDecision>> {
    let path = path.as_ref();
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = || Error::format("loops csv", format!("{}: row {}", path.display(), i + 2));
        if rec.len() != 5 {
            return Err(bad());
        }
        out.push(LoopDecision {
            query_frame: rec[0].parse().map_err(|_| bad())?,
            match_frame: rec[1].parse().map_err(|_| bad())?,
            similarity: rec[2].parse().map_err(|_| bad())?,
            accepted: rec[3].parse().map_err(|_| bad())?,
            match_count: rec[4].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

pub fn write_pr_csv(path: impl AsRef<Path>, points: &[PRPoint]) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["threshold", "precision", "recall", "tp", "fp", "fn"],
        points.iter().map(|p| {
            [
                format!("{:.4}", p.threshold),
                format!("{:.6}", p.precision),
                format!("{:.6}", p.recall),
                p.tp.to_string(),
                p.fp.to_string(),
                p.fn_.to_string(),
            ]
        }),
    )
}

pub fn write_timing_csv(path: impl AsRef<Path>, stages: &[(String, TimingSummary)]) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["stage", "mean_ms", "p95_ms", "total_ms"],
        stages.iter().map(|(name, t)| {
            [
                name.clone(),
                format!("{:.4}", t.mean_ms),
                format!("{:.4}", t.p95_ms),
                format!("{:.4}", t.total_ms),
            ]
        }),
    )
}

/// Recall on the horizontal axis, precision on the vertical, both in [0, 1].
pub fn pr_curve_svg(points: &[PRPoint], title: &str) -> String {
    const W: f64 = 480.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    let px = |r: f64| PAD + r.clamp(0.0, 1.0) * (W - 2.0 * PAD);
    let py = |p: f64| H - PAD - p.clamp(0.0, 1.0) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="25" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#ddd"/>"##,
            py(0.0),
            py(1.0),
            x = px(v)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/>"##,
            px(0.0),
            px(1.0),
            y = py(v)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{v:.1}</text>"#,
            px(v),
            py(0.0) + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{v:.1}</text>"#,
            px(0.0) - 6.0,
            py(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        px(0.0),
        py(1.0),
        px(1.0) - px(0.0),
        py(0.0) - py(1.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">recall</text>"#,
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 14 {})">precision</text>"#,
        H / 2.0,
        H / 2.0
    );
    if !points.is_empty() {
        let pts: Vec<String> = points
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.recall), py(p.precision)))
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
            pts.join(" ")
        );
        for p in points {
            let _ = writeln!(
                s,
                r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f77b4"><title>eta {:.2}</title></circle>"##,
                px(p.recall),
                py(p.precision),
                p.threshold
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Writes all report files into `out_dir`, creating it if needed.
pub fn emit_reports(
    out_dir: impl AsRef<Path>,
    decisions: &[LoopDecision],
    points: &[PRPoint],
    timing: &[(String, TimingSummary)],
    title: &str,
) -> Result<()> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_loops_csv(dir.join(LOOPS_CSV), decisions)?;
    write_pr_csv(dir.join(PR_CURVE_CSV), points)?;
    write_timing_csv(dir.join(TIMING_CSV), timing)?;
    let svg = dir.join(PR_CURVE_SVG);
    fs::write(&svg, pr_curve_svg(points, title)).map_err(|e| Error::io(&svg, e))
}
