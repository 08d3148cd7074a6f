#![allow(dead_code)]

use aquarender_core::{CameraParams, RenderModel, WaterParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A valid model drawn well inside the constraint set.
pub fn random_model(seed: u64) -> RenderModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eta = std::array::from_fn(|_| rng.gen_range(0.05..0.6));
    let beta = std::array::from_fn(|_| rng.gen_range(0.02..0.4));
    let a: f64 = rng.gen_range(0.05..0.5);
    let c: f64 = rng.gen_range(0.01..0.3);
    let b = rng.gen_range(-0.9..0.9) * (3.0 * a * c).sqrt();
    let k = rng.gen_range(0.8..1.3);
    RenderModel::new(
        WaterParams::new(eta, beta).unwrap(),
        CameraParams::new(a, b, c, k).unwrap(),
        0.0,
        10.0,
    )
    .unwrap()
}

/// `|a - b| <= rel * max(|a|, |b|) + abs`.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}

/// Central difference of `f` at offset 0, shrinking the step until the
/// forward and backward slopes agree (no kink inside the stencil). Returns
/// `None` when no step in the range is kink-free.
pub fn central_difference(f: impl Fn(f64) -> f64, h0: f64) -> Option<f64> {
    let f0 = f(0.0);
    let mut h = h0;
    for _ in 0..4 {
        let (fp, fm) = (f(h), f(-h));
        let (fwd, bwd) = ((fp - f0) / h, (f0 - fm) / h);
        if close(fwd, bwd, 1e-4, 1e-7) {
            return Some((fp - fm) / (2.0 * h));
        }
        h /= 10.0;
    }
    None
}
