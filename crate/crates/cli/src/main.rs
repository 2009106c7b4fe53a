use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use salient_loop::eval::pipeline::{run_sequence_observed, FrameObservation};
use salient_loop::eval::report::{read_loops_csv, write_pr_csv, PR_CURVE_CSV, PR_CURVE_SVG};
use salient_loop::eval::{
    emit_reports, generate_synthetic, read_ground_truth, score, PipelineConfig, SequenceManifest,
    SynthSpec,
};
use salient_loop::imaging::write_pgm;
use salient_loop::verification::FastBrief;
use salient_loop::GrayImage;

const CONFIG_USED: &str = "config_used.txt";
const DEBUG_DIR: &str = "saliency";
const REGIONS_TXT: &str = "regions.txt";

#[derive(Parser)]
#[command(
    name = "salient-loop",
    version,
    about = "Saliency-guided loop closure detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline over a frame manifest and write reports.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// key=value parameter file; missing keys keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write per-frame saliency maps and region boxes.
        #[arg(long)]
        debug_saliency: bool,
    },
    /// Render a reproducible synthetic sequence with ground truth.
    Synth {
        #[arg(long)]
        seed: u64,
        /// key=value synthesis spec; missing keys keep their defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-score an existing loops.csv against ground truth.
    Score {
        #[arg(long)]
        loops: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Supplies the evaluation keys (loop distance, gap, sweep).
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render_chain(&e));
            ExitCode::FAILURE
        }
    }
}

/// Joins the error chain, skipping causes whose text the message above
/// them already contains.
fn render_chain(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    let mut last = out.clone();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !last.contains(&text) {
            out.push_str(": ");
            out.push_str(&text);
        }
        last = text;
    }
    out
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run {
            manifest,
            out,
            config,
            debug_saliency,
        } => run(&manifest, &out, config.as_deref(), debug_saliency),
        Command::Synth { seed, spec, out } => synth(seed, spec.as_deref(), &out),
        Command::Score {
            loops,
            gt,
            out,
            config,
        } => rescore(&loops, &gt, &out, config.as_deref()),
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    Ok(match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    })
}

fn run(manifest: &Path, out: &Path, config: Option<&Path>, debug: bool) -> Result<()> {
    let cfg = load_config(config)?;
    let manifest = SequenceManifest::load(manifest)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let used = out.join(CONFIG_USED);
    fs::write(&used, cfg.to_text()).with_context(|| format!("writing {}", used.display()))?;

    let mut debug_sink = if debug {
        Some(DebugSink::create(&out.join(DEBUG_DIR))?)
    } else {
        None
    };
    let extractor = FastBrief {
        params: cfg.verification.clone(),
    };
    let output = run_sequence_observed(&manifest, &cfg, &extractor, &mut |obs| {
        if let Some(sink) = debug_sink.as_mut() {
            sink.record(obs)?;
        }
        Ok(())
    })?;
    if let Some(sink) = debug_sink {
        sink.finish()?;
    }

    let points = match &manifest.ground_truth {
        Some(gt) => score(&output.decisions, &read_ground_truth(gt)?, &cfg.eval)?,
        None => Vec::new(),
    };
    let title = manifest.dataset.as_deref().unwrap_or("sequence");
    emit_reports(
        out,
        &output.decisions,
        &points,
        &output.stage_timings,
        title,
    )?;

    let accepted = output.accepted(cfg.recognition.eta_th).count();
    println!(
        "{} frames, {} candidates, {} accepted loops at eta {}",
        output.frames, output.candidates, accepted, cfg.recognition.eta_th
    );
    if let Some(p) = points
        .iter()
        .find(|p| (p.threshold - cfg.recognition.eta_th).abs() < 1e-12)
    {
        println!("precision {:.3}, recall {:.3}", p.precision, p.recall);
    }
    if let Some(t) = output.stage("total") {
        println!("mean {:.1} ms/frame", t.mean_ms);
    }
    println!("reports in {}", out.display());
    Ok(())
}

/// Writes one PGM per frame with the saliency map stretched to 0..255, and
/// collects every kept region for a single text file written at the end.
struct DebugSink {
    dir: PathBuf,
    regions: String,
}

impl DebugSink {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            regions: String::from("frame_id x y w h phi rho\n"),
        })
    }

    fn record(&mut self, obs: &FrameObservation) -> salient_loop::Result<()> {
        let values = &obs.detection.map.values;
        let peak = values.data().iter().cloned().fold(0.0f64, f64::max);
        let scale = if peak > 0.0 { 255.0 / peak } else { 0.0 };
        let img = GrayImage::from_fn(values.width(), values.height(), |x, y| {
            (values.get(x, y) * scale).round()
        });
        write_pgm(self.dir.join(format!("{:06}.pgm", obs.frame_id)), &img)?;
        for r in &obs.detection.regions {
            let b = r.bbox;
            let _ = writeln!(
                self.regions,
                "{} {} {} {} {} {:.3} {:.4}",
                obs.frame_id, b.x, b.y, b.w, b.h, r.contrast_density, r.edge_complexity
            );
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        let path = self.dir.join(REGIONS_TXT);
        fs::write(&path, self.regions).with_context(|| format!("writing {}", path.display()))
    }
}

fn synth(seed: u64, spec: Option<&Path>, out: &Path) -> Result<()> {
    let spec = match spec {
        Some(p) => SynthSpec::load(p)?,
        None => SynthSpec::default(),
    };
    let manifest = generate_synthetic(seed, &spec, out)?;
    println!(
        "wrote {} frames ({} scenes, {} revisits) to {}",
        manifest.frames.len(),
        spec.scenes,
        spec.revisits,
        out.display()
    );
    Ok(())
}

fn rescore(loops: &Path, gt: &Path, out: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let decisions = read_loops_csv(loops)?;
    let poses = read_ground_truth(gt)?;
    let points = score(&decisions, &poses, &cfg.eval)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_pr_csv(out.join(PR_CURVE_CSV), &points)?;
    let svg = out.join(PR_CURVE_SVG);
    let title = loops.display().to_string();
    fs::write(
        &svg,
        salient_loop::eval::report::pr_curve_svg(&points, &title),
    )
    .with_context(|| format!("writing {}", svg.display()))?;
    for p in &points {
        println!(
            "eta {:.2}: precision {:.3} recall {:.3} (tp {} fp {} fn {})",
            p.threshold, p.precision, p.recall, p.tp, p.fp, p.fn_
        );
    }
    Ok(())
}
