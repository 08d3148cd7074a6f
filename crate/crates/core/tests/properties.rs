mod common;

use aquarender_core::evaluation::{
    baseline_histeq, color_consistency, intensity_normalize, rmse_depth_norm, rmse_rgb,
    tv_to_uniform, Normalization, TrackSet,
};
use aquarender_core::physics::{
    apply_vignette, attenuate, backscatter_mask, compose_scatter, render, sensor_gain,
    vignette_mask,
};
use aquarender_core::reparam::Theta;
use aquarender_core::{CameraParams, DepthMap, LinearImage, PixelMask, WaterParams};
use common::random_model;
use proptest::prelude::*;

fn image(w: usize, h: usize) -> impl Strategy<Value = LinearImage> {
    prop::collection::vec(0.0..=1.0f64, w * h * 3)
        .prop_map(move |d| LinearImage::new(w, h, d).unwrap())
}

fn depth(w: usize, h: usize) -> impl Strategy<Value = DepthMap> {
    prop::collection::vec(0.0..20.0f64, w * h).prop_map(move |d| DepthMap::new(w, h, d).unwrap())
}

fn water() -> impl Strategy<Value = WaterParams> {
    (
        prop::array::uniform3(1e-4..2.0f64),
        prop::array::uniform3(0.0..=1.0f64),
    )
        .prop_map(|(e, b)| WaterParams::new(e, b).unwrap())
}

/// Valid cameras: `b` sweeps the open interval allowed by the constraint.
fn camera() -> impl Strategy<Value = CameraParams> {
    (1e-3..2.0f64, -0.999..0.999f64, 0.0..2.0f64, 0.1..3.0f64).prop_filter_map(
        "strictly feasible camera",
        |(a, t, c, k)| CameraParams::new(a, t * (3.0 * a * c).sqrt(), c, k).ok(),
    )
}

fn color() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(0.0..1.0f64).prop_filter("nonzero", |c| c.iter().sum::<f64>() > 1e-6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn attenuation_never_brightens(img in image(5, 4), d in depth(5, 4), w in water()) {
        let out = attenuate(&img, &d, &w).unwrap();
        for (o, i) in out.as_slice().iter().zip(img.as_slice()) {
            prop_assert!(o <= i);
        }
    }

    #[test]
    fn backscatter_bounded_and_increasing(
        mut ranges in prop::collection::vec(1e-3..30.0f64, 2..40),
        w in water(),
    ) {
        ranges.sort_by(f64::total_cmp);
        ranges.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        let n = ranges.len();
        let d = DepthMap::new(n, 1, ranges).unwrap();
        let m = backscatter_mask(&d, &w).unwrap();
        for c in 0..3 {
            let beta = w.beta[c];
            for x in 0..n {
                let v = m.get(x, 0, c);
                prop_assert!(v >= 0.0);
                // Below eta·r = 30 the gap to beta is representable.
                if w.eta[c] * d.get(x, 0) < 30.0 {
                    prop_assert!(v < beta || beta == 0.0);
                } else {
                    prop_assert!(v <= beta);
                }
                if x > 0 && beta > 0.0 {
                    // Strict increase holds until the exponential underflows.
                    let prev = m.get(x - 1, 0, c);
                    prop_assert!(v > prev || (w.eta[c] * d.get(x - 1, 0)) > 30.0);
                }
            }
        }
    }

    #[test]
    fn valid_vignette_is_increasing_and_at_least_one(cam in camera()) {
        let mut prev = cam.vignette_at(0.0);
        prop_assert_eq!(prev, 1.0);
        for i in 1..=2000 {
            let v = cam.vignette_at(i as f64 / 2000.0);
            prop_assert!(v > prev, "V not increasing at r = {}", i as f64 / 2000.0);
            prop_assert!(v >= 1.0);
            prev = v;
        }
    }

    #[test]
    fn render_is_the_stage_chain(seed in 0u64..1000, sigma in prop_oneof![Just(0.0), 0.0..0.05f64]) {
        let mut model = random_model(seed);
        model.noise_sigma = sigma;
        let s = aquarender_core::synth::textured_scene(11, 7, 0.2, 9.0, seed);
        let g1 = attenuate(&s.image, &s.depth, &model.water).unwrap();
        let m2 = backscatter_mask(&s.depth, &model.water).unwrap();
        let g2 = compose_scatter(&g1, &m2, sigma, seed).unwrap();
        let v = vignette_mask(11, 7, &model.camera).unwrap();
        let g3 = apply_vignette(&g2, &v).unwrap();
        let chain = sensor_gain(&g3, model.camera.k).unwrap();
        let direct = render(&s.image, &s.depth, &model, seed).unwrap();
        prop_assert_eq!(chain.as_slice(), direct.as_slice());
        let again = render(&s.image, &s.depth, &model, seed).unwrap();
        prop_assert_eq!(again.as_slice(), direct.as_slice());
    }

    #[test]
    fn any_theta_gives_a_valid_model(t in prop::array::uniform10(-30.0..30.0f64)) {
        let base = random_model(0);
        let m = Theta(t).to_model(&base).unwrap();
        prop_assert!(m.validate().is_ok());
        let cam = m.camera;
        prop_assert!(4.0 * cam.b * cam.b - 12.0 * cam.a * cam.c < 0.0);
    }

    #[test]
    fn normalization_is_unit_and_scale_invariant(c in color(), s in 1e-3..1e3f64) {
        let a = intensity_normalize(c, Normalization::Euclidean).unwrap();
        let len = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((len - 1.0).abs() < 1e-9);
        let b = intensity_normalize(c.map(|v| v * s), Normalization::Euclidean).unwrap();
        for i in 0..3 {
            prop_assert!((a[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn consistency_ignores_per_observation_intensity(
        tracks in prop::collection::vec(prop::collection::vec((color(), 0.05..20.0f64), 2..6), 1..6),
    ) {
        let plain = TrackSet { tracks: tracks.iter().map(|t| t.iter().map(|o| o.0).collect()).collect() };
        let scaled = TrackSet {
            tracks: tracks.iter().map(|t| t.iter().map(|(c, s)| c.map(|v| v * s)).collect()).collect(),
        };
        for mode in [Normalization::Euclidean, Normalization::Chromaticity] {
            let a = color_consistency(&plain, mode).unwrap();
            let b = color_consistency(&scaled, mode).unwrap();
            for c in 0..3 {
                prop_assert!((a[c] - b[c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rmse_symmetric_and_zero_only_on_equal(a in image(4, 3), b in image(4, 3)) {
        prop_assert_eq!(rmse_rgb(&a, &b).unwrap(), rmse_rgb(&b, &a).unwrap());
        prop_assert_eq!(rmse_rgb(&a, &a).unwrap(), [0.0; 3]);
        let e = rmse_rgb(&a, &b).unwrap();
        for c in 0..3 {
            let equal = (0..12).all(|i| a.as_slice()[i * 3 + c] == b.as_slice()[i * 3 + c]);
            prop_assert_eq!(e[c] == 0.0, equal);
        }
    }

    #[test]
    fn depth_rmse_symmetric(a in depth(4, 3), b in depth(4, 3)) {
        let mask = PixelMask::filled(4, 3, true).unwrap();
        prop_assert_eq!(
            rmse_depth_norm(&a, &b, &mask).unwrap(),
            rmse_depth_norm(&b, &a, &mask).unwrap()
        );
        prop_assert_eq!(rmse_depth_norm(&a, &a, &mask).unwrap(), 0.0);
    }

    #[test]
    fn histeq_flattens_and_keeps_rank(levels in prop::collection::vec(0u8..=255, 2..200)) {
        prop_assume!(levels.iter().any(|&l| l != levels[0]));
        let n = levels.len();
        let data = levels.iter().flat_map(|&l| [l as f64 / 255.0, 0.5, (255 - l) as f64 / 255.0]).collect();
        let img = LinearImage::new(n, 1, data).unwrap();
        let out = baseline_histeq(&img);
        for c in [0, 2] {
            prop_assert!(tv_to_uniform(&out, c) <= tv_to_uniform(&img, c) + 1e-12);
            for i in 0..n {
                for j in 0..n {
                    let (a, b) = (img.get(i, 0, c), img.get(j, 0, c));
                    let (oa, ob) = (out.get(i, 0, c), out.get(j, 0, c));
                    prop_assert_eq!(a.partial_cmp(&b), oa.partial_cmp(&ob));
                }
            }
        }
    }
}
