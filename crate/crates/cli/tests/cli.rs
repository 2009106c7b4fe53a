use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_salient-loop"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

/// Synthesizes a short sequence with revisits and a config whose gaps fit it.
fn small_sequence(dir: &Path) {
    fs::write(dir.join("spec.txt"), "scenes=12\nrevisits=4\n").unwrap();
    fs::write(
        dir.join("cfg.txt"),
        "exclusion_window=8\nloop_min_frame_gap=8\n",
    )
    .unwrap();
    ok(&bin(
        &["synth", "--seed", "3", "--spec", "spec.txt", "--out", "seq"],
        dir,
    ));
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    small_sequence(dir.path());
    ok(&bin(
        &[
            "synth", "--seed", "3", "--spec", "spec.txt", "--out", "again",
        ],
        dir.path(),
    ));
    for name in ["frames/00000.pgm", "frames/00015.pgm", "ground_truth.csv"] {
        assert_eq!(
            fs::read(dir.path().join("seq").join(name)).unwrap(),
            fs::read(dir.path().join("again").join(name)).unwrap(),
            "{name}"
        );
    }
    assert_eq!(
        read(dir.path().join("seq/manifest.txt"))
            .lines()
            .filter(|l| !l.starts_with('#'))
            .count(),
        16
    );
}

#[test]
fn run_writes_reports_and_rescoring_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_sequence(d);
    let run = bin(
        &[
            "run",
            "--manifest",
            "seq/manifest.txt",
            "--out",
            "out",
            "--config",
            "cfg.txt",
        ],
        d,
    );
    ok(&run);
    assert!(String::from_utf8_lossy(&run.stdout).contains("16 frames"));

    for f in [
        "loops.csv",
        "pr_curve.csv",
        "timing.csv",
        "pr_curve.svg",
        "config_used.txt",
    ] {
        assert!(d.join("out").join(f).is_file(), "{f} missing");
    }
    let used = read(d.join("out/config_used.txt"));
    assert!(used.contains("exclusion_window = 8"), "{used}");
    assert!(used.contains("eta_th = 0.4"), "{used}");
    assert!(read(d.join("out/loops.csv"))
        .starts_with("query_frame,match_frame,zeta,verified,match_count"));

    ok(&bin(
        &[
            "score",
            "--loops",
            "out/loops.csv",
            "--gt",
            "seq/ground_truth.csv",
            "--out",
            "scored",
            "--config",
            "cfg.txt",
        ],
        d,
    ));
    assert_eq!(
        read(d.join("out/pr_curve.csv")),
        read(d.join("scored/pr_curve.csv"))
    );
    assert!(d.join("scored/pr_curve.svg").is_file());
}

#[test]
fn debug_saliency_writes_maps_and_regions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_sequence(d);
    ok(&bin(
        &[
            "run",
            "--manifest",
            "seq/manifest.txt",
            "--out",
            "out",
            "--config",
            "cfg.txt",
            "--debug-saliency",
        ],
        d,
    ));
    let maps = fs::read_dir(d.join("out/saliency"))
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "pgm")
        })
        .count();
    assert_eq!(maps, 16);
    let regions = read(d.join("out/saliency/regions.txt"));
    let mut lines = regions.lines();
    assert_eq!(lines.next(), Some("frame_id x y w h phi rho"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(' ').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(!rows.is_empty());
    for r in rows {
        assert_eq!(r.len(), 7);
        assert!(r[5] >= 58.0 && r[6] <= 0.5, "{r:?}");
    }
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = bin(&["run", "--manifest", "absent.txt", "--out", "out"], d);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("absent.txt"));

    fs::write(d.join("bad.txt"), "eta_th=2.5\n").unwrap();
    small_sequence(d);
    let bad = bin(
        &[
            "run",
            "--manifest",
            "seq/manifest.txt",
            "--out",
            "out",
            "--config",
            "bad.txt",
        ],
        d,
    );
    assert!(!bad.status.success());
    assert!(
        String::from_utf8_lossy(&bad.stderr).contains("eta_th"),
        "{}",
        String::from_utf8_lossy(&bad.stderr)
    );

    let usage = bin(&["frobnicate"], d);
    assert!(!usage.status.success());
}
