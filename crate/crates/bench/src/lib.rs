//! Seeded inputs shared by the benchmarks, so every group measures the same
//! data from run to run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use salient_loop::eval::synth::render_frame;
use salient_loop::eval::SynthSpec;
use salient_loop::kcc::preprocess;
use salient_loop::{GrayImage, Patch, SalientRegion};

/// Uniform noise in `[0, 255)`.
pub fn noise_image(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayImage::from_fn(width, height, |_, _| rng.random_range(0.0..255.0))
}

/// A preprocessed `side x side` patch cut from noise.
pub fn noise_patch(side: usize, seed: u64) -> Patch {
    preprocess(&noise_image(side, side, seed), side).expect("square noise preprocesses")
}

/// One 640x480 frame of the default synthetic sequence.
pub fn synthetic_frame(seed: u64, frame: usize) -> GrayImage {
    render_frame(&SynthSpec::default(), seed, frame)
}

/// The filtered saliency regions of a synthetic frame.
pub fn synthetic_regions(seed: u64, frame: usize) -> Vec<SalientRegion> {
    let img = synthetic_frame(seed, frame);
    salient_loop::saliency::detect(&img, frame as u64, &Default::default())
        .expect("synthetic frames detect")
        .regions
}
