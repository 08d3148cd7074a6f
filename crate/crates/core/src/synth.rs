//! Seeded synthetic scenes with known ground truth: textured RGB-D pairs,
//! gray-albedo scenes and a six-patch color board.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gan::Scene;
use crate::image::{DepthMap, LinearImage};
use crate::params::{CameraParams, RenderModel, WaterParams};

/// A fixed, moderately turbid water column and a mildly vignetting camera.
pub fn reference_model(max_altitude: f64) -> RenderModel {
    RenderModel {
        water: WaterParams {
            eta: [0.35, 0.18, 0.09],
            beta: [0.08, 0.18, 0.25],
        },
        camera: CameraParams {
            a: 0.3,
            b: 0.1,
            c: 0.05,
            k: 1.1,
        },
        noise_sigma: 0.0,
        max_altitude,
    }
}

/// Smooth random field in [0,1] built from a few random plane waves.
struct Field {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl Field {
    fn new(rng: &mut ChaCha8Rng, n: usize) -> Self {
        let waves = (0..n)
            .map(|_| {
                (
                    rng.gen_range(-6.0..6.0),
                    rng.gen_range(-6.0..6.0),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                    rng.gen_range(0.3..1.0),
                )
            })
            .collect();
        Self { waves }
    }

    fn at(&self, u: f64, v: f64) -> f64 {
        let total: f64 = self.waves.iter().map(|w| w.3).sum();
        let s: f64 = self
            .waves
            .iter()
            .map(|&(fx, fy, ph, amp)| amp * (fx * u + fy * v + ph).sin())
            .sum();
        0.5 + 0.5 * s / total
    }
}

/// Range map: a random tilted plane plus a smooth bump, spanning
/// `[near, far]` meters.
pub fn random_depth(width: usize, height: usize, near: f64, far: f64, seed: u64) -> DepthMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d0e5);
    let gx: f64 = rng.gen_range(-1.0..1.0);
    let gy: f64 = rng.gen_range(-1.0..1.0);
    let bump = Field::new(&mut rng, 2);
    let raw = |x: usize, y: usize| {
        let u = x as f64 / width.max(2) as f64;
        let v = y as f64 / height.max(2) as f64;
        0.5 + 0.25 * (gx * (u - 0.5) + gy * (v - 0.5)) + 0.5 * (bump.at(u, v) - 0.5)
    };
    let (mut lo, mut hi) = (f64::MAX, f64::MIN);
    for y in 0..height {
        for x in 0..width {
            let r = raw(x, y);
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    let span = (hi - lo).max(1e-12);
    DepthMap::from_fn(width, height, |x, y| near + (far - near) * (raw(x, y) - lo) / span)
        .expect("finite positive ranges")
}

/// Colorful smooth texture with channel values in [0.05, 0.95].
pub fn textured_image(width: usize, height: usize, seed: u64) -> LinearImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fields: Vec<Field> = (0..3).map(|_| Field::new(&mut rng, 4)).collect();
    LinearImage::from_fn(width, height, |x, y| {
        let u = x as f64 / width.max(2) as f64;
        let v = y as f64 / height.max(2) as f64;
        std::array::from_fn(|c| 0.05 + 0.9 * fields[c].at(u, v))
    })
    .expect("values in range")
}

/// Textured scene at ranges drawn within `[near, far]`.
pub fn textured_scene(width: usize, height: usize, near: f64, far: f64, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let a = rng.gen_range(near..far);
    let b = rng.gen_range(near..far);
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    Scene {
        image: textured_image(width, height, seed),
        depth: random_depth(width, height, lo, hi.max(lo + 0.1 * (far - near)), seed),
    }
}

/// Achromatic texture: equal channels with albedo in `[lo, hi]`.
pub fn gray_image(width: usize, height: usize, lo: f64, hi: f64, seed: u64) -> LinearImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = Field::new(&mut rng, 3);
    LinearImage::from_fn(width, height, |x, y| {
        let u = x as f64 / width.max(2) as f64;
        let v = y as f64 / height.max(2) as f64;
        [lo + (hi - lo) * f.at(u, v); 3]
    })
    .expect("values in range")
}

/// In-air reference colors of the six board patches.
pub const BOARD_PATCHES: [(&str, [f64; 3]); 6] = [
    ("blue", [0.10, 0.20, 0.75]),
    ("red", [0.75, 0.12, 0.10]),
    ("magenta", [0.70, 0.15, 0.60]),
    ("green", [0.15, 0.65, 0.20]),
    ("cyan", [0.15, 0.60, 0.70]),
    ("yellow", [0.80, 0.75, 0.15]),
];

/// A 3×2 grid of uniform color patches filling the image, with patch index
/// `row * 3 + col`.
pub fn color_board(width: usize, height: usize) -> (LinearImage, Vec<usize>) {
    let mut labels = Vec::with_capacity(width * height);
    let img = LinearImage::from_fn(width, height, |x, y| {
        let col = (x * 3 / width).min(2);
        let row = (y * 2 / height).min(1);
        let i = row * 3 + col;
        labels.push(i);
        BOARD_PATCHES[i].1
    })
    .expect("values in range");
    (img, labels)
}
