mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{direct_kernel, naive_dft, random_image, square_stimulus};
use salient_loop::eval::{score, EvalParams, GroundTruthPose};
use salient_loop::imaging::{
    box_filter, connected_components, dft2d, gaussian_filter, gaussian_kernel, idft2d,
};
use salient_loop::kcc::{self, kernel_correlation, preprocess, respond, train};
use salient_loop::saliency::{detect, filter_regions};
use salient_loop::verification::{
    brute_force_match, verify_features, BinaryDescriptor, Feature, Keypoint,
};
use salient_loop::{
    BBox, BinaryMask, Database, GrayImage, KernelParams, LoopCandidate, LoopDecision, Patch,
    RecognitionParams, SaliencyParams, SalientRegion, VerificationParams,
};

fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

// ---------------------------------------------------------------- imaging

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dft_is_linear(w in 1usize..12, h in 1usize..12, a in -3.0f64..3.0, b in -3.0f64..3.0, seed: u64) {
        let mut rng = seeded(seed);
        let x = random_image(w, h, -50.0, 50.0, &mut rng);
        let y = random_image(w, h, -50.0, 50.0, &mut rng);
        let mix = GrayImage::from_fn(w, h, |i, j| a * x.get(i, j) + b * y.get(i, j));
        let (fx, fy, fm) = (dft2d(&x).unwrap(), dft2d(&y).unwrap(), dft2d(&mix).unwrap());
        for ((m, p), q) in fm.data().iter().zip(fx.data()).zip(fy.data()) {
            let expect = p * a + q * b;
            prop_assert!((m - expect).norm() <= 1e-9 * (1.0 + expect.norm()));
        }
    }

    #[test]
    fn dft_matches_naive_and_roundtrips(w in 1usize..10, h in 1usize..10, seed: u64) {
        let x = random_image(w, h, 0.0, 255.0, &mut seeded(seed));
        let spec = dft2d(&x).unwrap();
        for (got, want) in spec.data().iter().zip(naive_dft(&x)) {
            prop_assert!((got - want).norm() <= 1e-8 * (1.0 + want.norm()));
        }
        let back = idft2d(&spec).unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            prop_assert!((a - b).abs() <= 1e-9 * 255.0);
        }
    }

    #[test]
    fn parseval_holds(w in 1usize..40, h in 1usize..40, seed: u64) {
        let x = random_image(w, h, -1.0, 1.0, &mut seeded(seed));
        let energy: f64 = x.data().iter().map(|v| v * v).sum();
        let spec = dft2d(&x).unwrap();
        prop_assert!(close(energy, spec.energy() / (w * h) as f64, 1e-6));
    }

    #[test]
    fn filters_commute_with_interior_shifts(
        dx in 0usize..6, dy in 0usize..6, k in prop::sample::select(vec![1usize, 3, 5, 7]),
        sigma in 0.5f64..2.5, seed: u64,
    ) {
        let (w, h) = (40, 36);
        let img = random_image(w, h, 0.0, 255.0, &mut seeded(seed));
        let shifted = img.shift_cyclic(dx as isize, dy as isize);
        let g_radius = gaussian_kernel(sigma).unwrap().len() / 2;
        for (r, f) in [
            (k / 2, Box::new(|i: &GrayImage| box_filter(i, k).unwrap()) as Box<dyn Fn(&GrayImage) -> GrayImage>),
            (g_radius, Box::new(move |i: &GrayImage| gaussian_filter(i, sigma).unwrap())),
        ] {
            let (a, b) = (f(&img), f(&shifted));
            // Pixels whose footprint avoids the borders and the wrapped seam
            // in both images.
            for y in (r + dy)..h.saturating_sub(r) {
                for x in (r + dx)..w.saturating_sub(r) {
                    prop_assert!(close(b.get(x, y), a.get(x - dx, y - dy), 1e-9));
                }
            }
        }
    }

    #[test]
    fn components_partition_the_foreground(w in 1usize..30, h in 1usize..30, density in 0.0f64..1.0, seed: u64) {
        use rand::Rng;
        let mut rng = seeded(seed);
        let mask = BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density));
        let comps = connected_components(&mask);
        let mut seen = HashSet::new();
        let mut label = vec![usize::MAX; w * h];
        for (c, comp) in comps.iter().enumerate() {
            for &(x, y) in &comp.pixels {
                prop_assert!(mask.get(x, y));
                prop_assert!(seen.insert((x, y)), "pixel in two components");
                prop_assert!(x >= comp.bbox.x && x < comp.bbox.x + comp.bbox.w);
                prop_assert!(y >= comp.bbox.y && y < comp.bbox.y + comp.bbox.h);
                label[y * w + x] = c;
            }
        }
        prop_assert_eq!(seen.len(), mask.count());
        // Maximality: 8-neighbours in the foreground share a label.
        for y in 0..h {
            for x in 0..w {
                if !mask.get(x, y) { continue; }
                for (nx, ny) in [(x + 1, y), (x, y + 1), (x + 1, y + 1)] {
                    if nx < w && ny < h && mask.get(nx, ny) {
                        prop_assert_eq!(label[y * w + x], label[ny * w + nx]);
                    }
                }
                if x > 0 && y + 1 < h && mask.get(x - 1, y + 1) {
                    prop_assert_eq!(label[y * w + x], label[(y + 1) * w + x - 1]);
                }
            }
        }
    }
}

// --------------------------------------------------------------- saliency

fn top_box(img: &GrayImage) -> Option<BBox> {
    detect(img, 0, &SaliencyParams::default())
        .unwrap()
        .regions
        .first()
        .map(|r| r.bbox)
}

// Bounding box of every detected region that lies within `target` grown by
// `HALO` pixels. A large bright square is salient along its outline, and
// the mask around it sometimes splits into two components, so the object's
// extent is the union of its fragments. Restricting to the grown target
// keeps the cyclic frame seam and other background regions out.
const HALO: usize = 8;

fn stimulus_extent(img: &GrayImage, target: BBox) -> Option<BBox> {
    detect(img, 0, &SaliencyParams::default())
        .unwrap()
        .regions
        .into_iter()
        .map(|r| r.bbox)
        .filter(|b| {
            b.x + HALO >= target.x
                && b.y + HALO >= target.y
                && b.x + b.w <= target.x + target.w + HALO
                && b.y + b.h <= target.y + target.h + HALO
        })
        .reduce(|a, b| {
            let (x, y) = (a.x.min(b.x), a.y.min(b.y));
            BBox::new(
                x,
                y,
                (a.x + a.w).max(b.x + b.w) - x,
                (a.y + a.h).max(b.y + b.h) - y,
            )
        })
}

// Area of the extent of a 16 px square after upscaling the frame by `s`,
// relative to its extent at native size.
fn area_growth(x0: usize, y0: usize, s: f64, seed: u64) -> f64 {
    let (a, planted) = square_stimulus(128, x0, y0, 16, seed);
    let side = (128.0 * s) as usize;
    let b = a.resize_bilinear(side, side);
    let scaled = BBox::new(
        (planted.x as f64 * s) as usize,
        (planted.y as f64 * s) as usize,
        (planted.w as f64 * s) as usize,
        (planted.h as f64 * s) as usize,
    );
    let extent = |img, t| stimulus_extent(img, t).expect("stimulus detected").area() as f64;
    extent(&b, scaled) / extent(&a, planted)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn detection_follows_translation(x0 in 20usize..60, y0 in 20usize..60, dx in -12isize..12, dy in -12isize..12, seed: u64) {
        let (a, _) = square_stimulus(128, x0, y0, 16, seed);
        let b = a.shift_cyclic(dx, dy);
        let (ca, cb) = (top_box(&a).unwrap().center(), top_box(&b).unwrap().center());
        prop_assert!((cb.0 - ca.0 - dx as f64).abs() <= 2.0, "{:?} -> {:?}", ca, cb);
        prop_assert!((cb.1 - ca.1 - dy as f64).abs() <= 2.0, "{:?} -> {:?}", ca, cb);
    }

    #[test]
    fn detection_follows_quarter_turns(x0 in 16usize..90, y0 in 16usize..90, seed: u64) {
        let (a, _) = square_stimulus(128, x0, y0, 20, seed);
        let b = a.rotate90();
        let (ba, bb) = (top_box(&a).unwrap(), top_box(&b).unwrap());
        // Clockwise turn: (u, v) -> (h - 1 - v, u).
        let turned = BBox::new(a.height() - ba.y - ba.h, ba.x, ba.h, ba.w);
        for (got, want) in [(bb.x, turned.x), (bb.y, turned.y), (bb.w, turned.w), (bb.h, turned.h)] {
            prop_assert!((got as isize - want as isize).abs() <= 2, "{:?} vs {:?}", bb, turned);
        }
    }

    #[test]
    fn detection_area_scales_quadratically(x0 in 16usize..90, y0 in 16usize..90, seed: u64) {
        let s = 1.5;
        let growth = area_growth(x0, y0, s, seed);
        prop_assert!((0.7..=1.3).contains(&(growth / (s * s))), "area grew {}x", growth);
    }

    // Map blur and mask threshold add a halo of fixed width in pixels, so
    // at twice the size the box grows by clearly less than s^2.
    #[test]
    fn doubling_grows_area_below_quadratic(x0 in 16usize..90, y0 in 16usize..90, seed: u64) {
        let growth = area_growth(x0, y0, 2.0, seed);
        prop_assert!((2.0..4.0).contains(&growth), "area grew {}x", growth);
    }

    #[test]
    fn boxes_stay_inside_the_frame(w in 40usize..300, h in 40usize..200, squares in 0usize..5, seed: u64) {
        use rand::Rng;
        let mut rng = seeded(seed);
        let mut img = random_image(w, h, 40.0, 90.0, &mut rng);
        for _ in 0..squares {
            let side = rng.random_range(4..24.min(w.min(h)));
            let (x0, y0) = (rng.random_range(0..w - side), rng.random_range(0..h - side));
            let v = rng.random_range(150.0..255.0);
            for y in y0..y0 + side {
                for x in x0..x0 + side {
                    img.set(x, y, v);
                }
            }
        }
        for r in detect(&img, 0, &SaliencyParams::default()).unwrap().regions {
            prop_assert!(r.bbox.fits_in(w, h), "{:?} outside {}x{}", r.bbox, w, h);
            prop_assert_eq!(r.patch.dims(), (r.bbox.w, r.bbox.h));
        }
    }

    #[test]
    fn region_filter_is_a_subset_and_idempotent(
        attrs in prop::collection::vec((0.0f64..120.0, 0.0f64..1.0, 0.0f64..255.0), 0..20),
    ) {
        let p = SaliencyParams::default();
        let regions: Vec<SalientRegion> = attrs.iter().enumerate().map(|(i, &(phi, rho, lum))| SalientRegion {
            frame_id: 0,
            bbox: BBox::new(i, 0, 2, 2),
            patch: GrayImage::filled(2, 2, lum),
            contrast_density: phi,
            edge_complexity: rho,
            mean_intensity: lum,
            pixel_count: 4,
            saliency: 1.0,
        }).collect();
        let once = filter_regions(regions.clone(), &p);
        prop_assert!(once.iter().all(|r| regions.contains(r)));
        prop_assert_eq!(filter_regions(once.clone(), &p), once);
    }
}

// -------------------------------------------------------------------- kcc

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn kernel_matches_direct_shift_enumeration(w in 1usize..=16, h in 1usize..=16, sigma_k in 0.05f64..1.0, seed: u64) {
        let mut rng = seeded(seed);
        let x = random_image(w, h, -0.5, 0.5, &mut rng);
        let z = random_image(w, h, -0.5, 0.5, &mut rng);
        let (px, pz) = (Patch::from_field(x.clone()).unwrap(), Patch::from_field(z.clone()).unwrap());
        let kp = KernelParams { sigma_k, ..KernelParams::default() };
        let fast = kernel_correlation(&px, pz.spectrum(), pz.norm_sq(), &kp).unwrap();
        let slow = direct_kernel(&x, &z, sigma_k);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            prop_assert!((a - b).abs() <= 1e-6, "{} vs {}", a, b);
            prop_assert!(*a > 0.0 && *a <= 1.0);
        }
    }

    #[test]
    fn self_similarity_is_bounded(side in 24usize..160, seed: u64) {
        let raw = random_image(side, side, 0.0, 255.0, &mut seeded(seed));
        let z = preprocess(&raw, 64).unwrap();
        let c = train(&z, &KernelParams::default()).unwrap();
        let r = respond(&c, &z).unwrap();
        prop_assert_eq!(r.peak, (0, 0));
        prop_assert!(r.zeta > 0.9 && r.zeta <= 1.01, "zeta {}", r.zeta);
        // Pure: identical inputs give bit-identical outputs.
        prop_assert_eq!(respond(&c, &z).unwrap(), r);
        prop_assert_eq!(train(&z, &KernelParams::default()).unwrap().to_bytes().unwrap(), c.to_bytes().unwrap());
    }

    #[test]
    fn tiny_upsampled_crops_lose_self_similarity(seed: u64) {
        // An 8 px crop stretched to 64 px is so smooth that most kernel
        // frequencies fall under lambda, and the self response drops with them.
        let kp = KernelParams::default();
        let at = |side: usize| {
            let z = preprocess(&random_image(side, side, 0.0, 255.0, &mut seeded(seed)), 64).unwrap();
            respond(&train(&z, &kp).unwrap(), &z).unwrap().zeta
        };
        let (tiny, full) = (at(8), at(64));
        prop_assert!(tiny < full && full > 0.99, "{} vs {}", tiny, full);
    }

    #[test]
    fn response_peak_follows_cyclic_shift(dx in -8isize..=8, dy in -8isize..=8, seed: u64) {
        let raw = random_image(64, 64, 0.0, 255.0, &mut seeded(seed));
        let c = train(&preprocess(&raw, 64).unwrap(), &KernelParams::default()).unwrap();
        let r = respond(&c, &preprocess(&raw.shift_cyclic(dx, dy), 64).unwrap()).unwrap();
        prop_assert!((r.peak.0 - dx).abs() <= 1 && (r.peak.1 - dy).abs() <= 1, "{:?} for ({}, {})", r.peak, dx, dy);
    }
}

// ------------------------------------------------------------ recognition

fn random_region(frame_id: u64, k: usize, rng: &mut ChaCha8Rng) -> SalientRegion {
    use rand::Rng;
    let side = rng.random_range(20..60);
    let patch = random_image(side, side, 0.0, 255.0, rng);
    SalientRegion {
        frame_id,
        bbox: BBox::new(k * 60, 0, side, side),
        contrast_density: 80.0,
        edge_complexity: 0.2,
        mean_intensity: patch.mean(),
        pixel_count: side * side,
        saliency: 1.0,
        patch,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn queries_respect_window_order_and_threshold(
        frames in 3u64..10, window in 0u64..5, pick in 0u64..10, eta in 0.2f64..0.6, seed: u64,
    ) {
        let mut rng = seeded(seed);
        let p = RecognitionParams { eta_th: eta, exclusion_window: window, ..RecognitionParams::default() };
        let mut db = Database::new(KernelParams::default()).unwrap();
        let mut all = Vec::new();
        for f in 0..frames {
            let regions: Vec<_> = (0..2).map(|k| random_region(f, k, &mut rng)).collect();
            db.register_frame(f, &regions, &p).unwrap();
            all.push(regions);
        }
        let q = frames + pick % 3;
        let target = (pick % frames) as usize;
        let query: Vec<SalientRegion> = all[target].iter().map(|r| SalientRegion { frame_id: q, ..r.clone() }).collect();
        let found = db.query(q, &query, &p);
        prop_assert_eq!(&db.query(q, &query, &p), &found, "queries must be deterministic");
        for c in &found {
            prop_assert!(c.match_frame + window <= q);
            prop_assert!(c.similarity >= eta);
            prop_assert!(c.votes >= p.min_votes);
        }
        prop_assert!(found.windows(2).all(|w| w[0].similarity >= w[1].similarity));
        if target as u64 + window <= q {
            let first: &LoopCandidate = &found[0];
            prop_assert_eq!(first.match_frame, target as u64);
            prop_assert!(first.similarity >= 0.95);
        }
    }
}

// ----------------------------------------------------------- verification

fn descriptors(n: usize, rng: &mut ChaCha8Rng) -> Vec<BinaryDescriptor> {
    use rand::Rng;
    (0..n)
        .map(|_| BinaryDescriptor { bits: rng.random() })
        .collect()
}

fn perturbed(src: &[BinaryDescriptor], rng: &mut ChaCha8Rng) -> Vec<BinaryDescriptor> {
    use rand::Rng;
    src.iter()
        .map(|d| {
            let mut bits = d.bits;
            for _ in 0..rng.random_range(0..110) {
                let b = rng.random_range(0..256);
                bits[b / 64] ^= 1 << (b % 64);
            }
            BinaryDescriptor { bits }
        })
        .collect()
}

fn features(ds: &[BinaryDescriptor]) -> Vec<Feature> {
    ds.iter()
        .enumerate()
        .map(|(i, &descriptor)| Feature {
            keypoint: Keypoint {
                x: i,
                y: 0,
                score: 1.0,
            },
            descriptor,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cross_checked_matching_is_symmetric(n in 0usize..80, m in 0usize..80, ratio in 0.5f64..1.2, seed: u64) {
        let mut rng = seeded(seed);
        let a = descriptors(n, &mut rng);
        let mut b = perturbed(&a, &mut rng);
        b.truncate(m);
        b.extend(descriptors(m.saturating_sub(b.len()), &mut rng));
        let p = VerificationParams { ratio_test: ratio, ..VerificationParams::default() };
        prop_assert_eq!(brute_force_match(&a, &b, &p), brute_force_match(&b, &a, &p));
    }

    #[test]
    fn raising_min_pairs_never_accepts_more(n in 1usize..120, lo in 1usize..100, extra in 0usize..100, seed: u64) {
        let mut rng = seeded(seed);
        let a = descriptors(n, &mut rng);
        let b = perturbed(&a, &mut rng);
        let cand = LoopCandidate {
            query_frame: 200, match_frame: 10, similarity: 0.5,
            query_region_bbox: BBox::new(0, 0, 1, 1), match_region_bbox: BBox::new(0, 0, 1, 1), votes: 1,
        };
        let at = |min| verify_features(&cand, &features(&a), &features(&b), &VerificationParams { min_matched_pairs: min, ..VerificationParams::default() });
        let (low, high) = (at(lo), at(lo + extra));
        prop_assert_eq!(low.match_count, high.match_count);
        prop_assert!(!high.accepted || low.accepted);
    }
}

// ------------------------------------------------------------- evaluation

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pr_sweep_is_consistent_and_monotone(
        xs in prop::collection::vec(0.0f64..60.0, 2..60),
        picks in prop::collection::vec((0usize..60, 0usize..60, 0.3f64..1.0, any::<bool>()), 0..40),
        gap in 0u64..10,
    ) {
        let poses: Vec<GroundTruthPose> = xs.iter().enumerate()
            .map(|(i, &x)| GroundTruthPose { frame_id: i as u64, x, y: 0.0, z: None }).collect();
        let n = poses.len();
        let decisions: Vec<LoopDecision> = picks.iter().map(|&(q, m, s, acc)| LoopDecision {
            query_frame: (q % n) as u64, match_frame: (m % n) as u64, similarity: s, accepted: acc, match_count: 0,
        }).collect();
        let p = EvalParams { loop_distance_m: 5.0, loop_min_frame_gap: gap, ..EvalParams::default() };
        let pts = score(&decisions, &poses, &p).unwrap();
        prop_assert_eq!(pts.len(), p.eta_sweep.len());
        for pt in &pts {
            let prec = if pt.tp + pt.fp == 0 { 1.0 } else { pt.tp as f64 / (pt.tp + pt.fp) as f64 };
            let rec = if pt.tp + pt.fn_ == 0 { 1.0 } else { pt.tp as f64 / (pt.tp + pt.fn_) as f64 };
            prop_assert_eq!(pt.precision, prec);
            prop_assert_eq!(pt.recall, rec);
            prop_assert!((0.0..=1.0).contains(&pt.precision) && (0.0..=1.0).contains(&pt.recall));
        }
        for w in pts.windows(2) {
            prop_assert!(w[1].fp <= w[0].fp);
            prop_assert!(w[1].recall <= w[0].recall);
        }
    }
}

#[test]
fn kcc_serialized_size_is_fixed() {
    assert_eq!(kcc::Correlator::serialized_len_for(64), 36 + 32 * 64 * 64);
}
