//! Forward image formation: range attenuation, additive backscatter, radial
//! vignetting and a linear sensor, with closed-form parameter derivatives.
//!
//! ```text
//! G1   = I_air · exp(−η r)
//! G2   = clamp(G1 + β (1 − exp(−η r)) + n)
//! G3   = G2 / V,   V = 1 + a r̂² + b r̂⁴ + c r̂⁶
//! Gout = clamp(k · G3)
//! ```
//!
//! `r` is range in meters, `r̂` the image radius normalized so that it is 0
//! at the center and exactly 1 at the corner pixel centers. Every stage
//! clamps its output to [0,1].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::{ensure_same, DepthMap, LinearImage, PixelMask, Plane};
use crate::params::{CameraParams, RenderModel, WaterParams, NUM_PARAMS};

/// Range attenuation. Pixels with missing depth pass through unchanged; use
/// [`DepthMap::missing_mask`] to recover which ones they were.
pub fn attenuate(img: &LinearImage, depth: &DepthMap, water: &WaterParams) -> Result<LinearImage> {
    ensure_same(img, depth, "image vs depth")?;
    water.validate()?;
    let r = depth.as_slice();
    let data = img
        .as_slice()
        .chunks_exact(3)
        .zip(r)
        .enumerate()
        .flat_map(|(i, (p, &d))| {
            let d = if depth.is_missing(i) { 0.0 } else { d };
            (0..3).map(move |c| p[c] * (-water.eta[c] * d).exp())
        })
        .collect();
    LinearImage::from_clamped(img.width(), img.height(), data)
}

/// Additive backscatter `β (1 − e^{−η r})`. Missing pixels get no haze.
pub fn backscatter_mask(depth: &DepthMap, water: &WaterParams) -> Result<LinearImage> {
    water.validate()?;
    let data = depth
        .as_slice()
        .iter()
        .enumerate()
        .flat_map(|(i, &d)| {
            let d = if depth.is_missing(i) { 0.0 } else { d };
            (0..3).map(move |c| water.beta[c] * (1.0 - (-water.eta[c] * d).exp()))
        })
        .collect();
    LinearImage::from_clamped(depth.width(), depth.height(), data)
}

/// `clamp(g1 + mask + n)` with `n ~ N(0, noise_sigma²)` drawn per value
/// from a generator seeded by `seed`.
pub fn compose_scatter(
    g1: &LinearImage,
    mask: &LinearImage,
    noise_sigma: f64,
    seed: u64,
) -> Result<LinearImage> {
    ensure_same(g1, mask, "attenuated image vs backscatter mask")?;
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::invalid(
            "noise_sigma",
            format!("must be >= 0, got {noise_sigma}"),
        ));
    }
    let sum = g1.as_slice().iter().zip(mask.as_slice()).map(|(a, b)| a + b);
    let data: Vec<f64> = if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sum.map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + noise_sigma * z
        })
        .collect()
    } else {
        sum.collect()
    };
    LinearImage::from_clamped(g1.width(), g1.height(), data)
}

/// Normalized radius of pixel (x, y): 0 at the image center, 1 at the
/// corner pixel centers.
#[inline]
pub fn normalized_radius(x: usize, y: usize, width: usize, height: usize) -> f64 {
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let corner = (cx * cx + cy * cy).sqrt();
    if corner == 0.0 {
        return 0.0;
    }
    let dx = x as f64 - cx;
    let dy = y as f64 - cy;
    (dx * dx + dy * dy).sqrt() / corner
}

/// Per-pixel V for the given image size.
pub fn vignette_mask(width: usize, height: usize, cam: &CameraParams) -> Result<Plane> {
    cam.validate_vignette()?;
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            data.push(cam.vignette_at(normalized_radius(x, y, width, height)));
        }
    }
    Plane::new(width, height, data)
}

/// Divides every channel by V.
pub fn apply_vignette(g2: &LinearImage, vmask: &Plane) -> Result<LinearImage> {
    ensure_same(g2, vmask, "image vs vignette mask")?;
    if let Some(v) = vmask.as_slice().iter().find(|v| !(**v >= 1.0)) {
        return Err(Error::invalid(
            "vignette",
            format!("mask values must be >= 1, found {v}"),
        ));
    }
    let data = g2
        .as_slice()
        .chunks_exact(3)
        .zip(vmask.as_slice())
        .flat_map(|(p, &v)| (0..3).map(move |c| p[c] / v))
        .collect();
    LinearImage::from_clamped(g2.width(), g2.height(), data)
}

/// `clamp(k · g3)`.
pub fn sensor_gain(g3: &LinearImage, k: f64) -> Result<LinearImage> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::invalid("k", format!("sensor gain must be > 0, got {k}")));
    }
    let data = g3.as_slice().iter().map(|v| k * v).collect();
    LinearImage::from_clamped(g3.width(), g3.height(), data)
}

/// Depth divided by the survey altitude, saturating at 1. Missing stays 0.
pub fn normalize_depth(depth: &DepthMap, max_altitude: f64) -> Result<DepthMap> {
    if !(max_altitude > 0.0 && max_altitude.is_finite()) {
        return Err(Error::invalid(
            "max_altitude",
            format!("must be > 0, got {max_altitude}"),
        ));
    }
    let data = depth
        .as_slice()
        .iter()
        .map(|&d| (d / max_altitude).min(1.0))
        .collect();
    Ok(DepthMap::new(depth.width(), depth.height(), data)?.with_zero(depth.zero_mode()))
}

/// Depth ready for rendering: missing pixels filled from their neighbors.
pub(crate) fn renderable_depth(depth: &DepthMap) -> Result<std::borrow::Cow<'_, DepthMap>> {
    if depth.has_missing() {
        Ok(std::borrow::Cow::Owned(depth.filled_nearest()?))
    } else {
        Ok(std::borrow::Cow::Borrowed(depth))
    }
}

/// Full generator: attenuation, backscatter (plus seeded noise), vignetting
/// and sensor gain, in that order.
pub fn render(
    scene: &LinearImage,
    depth: &DepthMap,
    model: &RenderModel,
    seed: u64,
) -> Result<LinearImage> {
    model.validate()?;
    ensure_same(scene, depth, "scene image vs scene depth")?;
    let depth = renderable_depth(depth)?;
    let g1 = attenuate(scene, &depth, &model.water)?;
    let m2 = backscatter_mask(&depth, &model.water)?;
    let g2 = compose_scatter(&g1, &m2, model.noise_sigma, seed)?;
    let vmask = vignette_mask(scene.width(), scene.height(), &model.camera)?;
    let g3 = apply_vignette(&g2, &vmask)?;
    sensor_gain(&g3, model.camera.k)
}

/// Noiseless forward value and parameter derivatives of one channel of one
/// pixel.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PixelEval {
    pub out: f64,
    /// Output clamp active: the pixel carries no gradient.
    pub saturated: bool,
    /// d out / d (eta_c, beta_c, a, b, c, k); the water derivatives apply to
    /// channel `c` only.
    pub d_eta: f64,
    pub d_beta: f64,
    pub d_a: f64,
    pub d_b: f64,
    pub d_c: f64,
    pub d_k: f64,
}

/// Radial powers and V for one pixel.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Radial {
    pub r2: f64,
    pub r4: f64,
    pub r6: f64,
    pub v: f64,
}

impl Radial {
    #[inline]
    pub fn new(rn: f64, cam: &CameraParams) -> Self {
        let r2 = rn * rn;
        let r4 = r2 * r2;
        Self {
            r2,
            r4,
            r6: r4 * r2,
            v: cam.vignette_at(rn),
        }
    }
}

#[inline]
pub(crate) fn eval_pixel(
    i_air: f64,
    range: f64,
    eta: f64,
    beta: f64,
    radial: &Radial,
    k: f64,
) -> PixelEval {
    let e = (-eta * range).exp();
    let g2_raw = i_air * e + beta * (1.0 - e);
    let g2_clamped = !(0.0..=1.0).contains(&g2_raw);
    let g2 = g2_raw.clamp(0.0, 1.0);
    let inv_v = 1.0 / radial.v;
    let g3 = g2 * inv_v;
    let out_raw = k * g3;
    let saturated = !(0.0..=1.0).contains(&out_raw);
    let out = out_raw.clamp(0.0, 1.0);
    if saturated {
        return PixelEval {
            out,
            saturated,
            d_eta: 0.0,
            d_beta: 0.0,
            d_a: 0.0,
            d_b: 0.0,
            d_c: 0.0,
            d_k: 0.0,
        };
    }
    let kv = k * inv_v;
    let (d_eta, d_beta) = if g2_clamped {
        (0.0, 0.0)
    } else {
        (kv * range * e * (beta - i_air), kv * (1.0 - e))
    };
    let dv = -k * g2 * inv_v * inv_v;
    PixelEval {
        out,
        saturated,
        d_eta,
        d_beta,
        d_a: dv * radial.r2,
        d_b: dv * radial.r4,
        d_c: dv * radial.r6,
        d_k: g3,
    }
}

/// ∂Gout/∂θ for θ = (eta[0..3], beta[0..3], a, b, c, k), each as an
/// H×W×3 array aligned with the image data.
#[derive(Debug, Clone)]
pub struct RenderGradients {
    pub width: usize,
    pub height: usize,
    /// Noiseless rendered output.
    pub output: Vec<f64>,
    pub d: [Vec<f64>; NUM_PARAMS],
    /// Pixels where any channel hit the output clamp.
    pub saturated: PixelMask,
}

/// Closed-form derivatives of the noiseless render. Values clamped at the
/// output carry zero gradient; a clamped backscatter sum zeroes the water
/// derivatives of that channel only.
pub fn render_gradients(
    scene: &LinearImage,
    depth: &DepthMap,
    model: &RenderModel,
) -> Result<RenderGradients> {
    model.validate()?;
    ensure_same(scene, depth, "scene image vs scene depth")?;
    let depth = renderable_depth(depth)?;
    let (w, h) = (scene.width(), scene.height());
    let n = w * h * 3;
    let mut d: [Vec<f64>; NUM_PARAMS] = std::array::from_fn(|_| vec![0.0; n]);
    let mut output = vec![0.0; n];
    let mut saturated = vec![false; w * h];
    let water = &model.water;
    let cam = &model.camera;
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let radial = Radial::new(normalized_radius(x, y, w, h), cam);
            let range = depth.as_slice()[p];
            for c in 0..3 {
                let i = p * 3 + c;
                let ev = eval_pixel(
                    scene.as_slice()[i],
                    range,
                    water.eta[c],
                    water.beta[c],
                    &radial,
                    cam.k,
                );
                output[i] = ev.out;
                saturated[p] |= ev.saturated;
                d[c][i] = ev.d_eta;
                d[3 + c][i] = ev.d_beta;
                d[6][i] = ev.d_a;
                d[7][i] = ev.d_b;
                d[8][i] = ev.d_c;
                d[9][i] = ev.d_k;
            }
        }
    }
    Ok(RenderGradients {
        width: w,
        height: h,
        output,
        d,
        saturated: PixelMask::new(w, h, saturated)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ZeroDepth;
    use approx::assert_abs_diff_eq;

    fn px(v: [f64; 3]) -> LinearImage {
        LinearImage::filled(1, 1, v).unwrap()
    }

    fn d1(r: f64) -> DepthMap {
        DepthMap::filled(1, 1, r).unwrap()
    }

    fn water(eta: [f64; 3], beta: [f64; 3]) -> WaterParams {
        WaterParams::new(eta, beta).unwrap()
    }

    #[test]
    fn attenuate_scalar_example() {
        let out = attenuate(&px([0.8, 0.8, 0.8]), &d1(2.0), &water([0.35; 3], [0.0; 3])).unwrap();
        // 0.8 · e^(−0.7), evaluated independently.
        assert_abs_diff_eq!(out.get(0, 0, 0), 0.397_268_243_033_127_6, epsilon = 1e-12);
        assert_abs_diff_eq!(out.get(0, 0, 0), 0.39728, epsilon = 2e-5);
    }

    #[test]
    fn attenuate_identities() {
        let img = LinearImage::from_fn(4, 3, |x, y| [x as f64 / 4.0, y as f64 / 3.0, 0.5]).unwrap();
        let zero = DepthMap::filled(4, 3, 0.0).unwrap();
        let w = water([0.5, 0.2, 0.1], [0.1; 3]);
        assert_eq!(attenuate(&img, &zero, &w).unwrap(), img);

        let far = DepthMap::filled(4, 3, 5.0).unwrap();
        let tiny = water([1e-12; 3], [0.0; 3]);
        let out = attenuate(&img, &far, &tiny).unwrap();
        for (a, b) in out.as_slice().iter().zip(img.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn attenuate_missing_passes_through() {
        let img = LinearImage::filled(2, 1, [0.6, 0.5, 0.4]).unwrap();
        let d = DepthMap::new(2, 1, vec![0.0, 3.0])
            .unwrap()
            .with_zero(ZeroDepth::Missing);
        let out = attenuate(&img, &d, &water([0.3; 3], [0.0; 3])).unwrap();
        assert_eq!(out.pixel(0, 0), [0.6, 0.5, 0.4]);
        assert!(out.get(1, 0, 0) < 0.6);
        assert_eq!(d.missing_mask().as_slice(), &[true, false]);
    }

    #[test]
    fn attenuate_errors() {
        let img = LinearImage::filled(2, 2, [0.5; 3]).unwrap();
        let d = DepthMap::filled(2, 1, 1.0).unwrap();
        let w = water([0.1; 3], [0.0; 3]);
        assert!(matches!(
            attenuate(&img, &d, &w),
            Err(Error::DimensionMismatch { .. })
        ));
        let bad = WaterParams {
            eta: [0.1, -0.1, 0.1],
            beta: [0.0; 3],
        };
        let d = DepthMap::filled(2, 2, 1.0).unwrap();
        assert!(matches!(
            attenuate(&img, &d, &bad),
            Err(Error::InvalidParameter { name: "eta", .. })
        ));
    }

    #[test]
    fn backscatter_examples() {
        let w = water([0.5, 0.3, 0.1], [0.2, 0.3, 0.4]);
        assert_eq!(backscatter_mask(&d1(0.0), &w).unwrap().pixel(0, 0), [0.0; 3]);
        let m = backscatter_mask(&d1(20.0), &w).unwrap();
        // 0.2 · (1 − e^(−10))
        assert_abs_diff_eq!(m.get(0, 0, 0), 0.199_990_9, epsilon = 1e-7);
        let none = water([0.5; 3], [0.0; 3]);
        let d = DepthMap::from_fn(3, 3, |x, y| (x + y) as f64).unwrap();
        assert!(backscatter_mask(&d, &none)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn compose_scatter_examples() {
        let g1 = LinearImage::from_fn(3, 2, |x, y| [0.1 * x as f64, 0.2 * y as f64, 0.3]).unwrap();
        let zero = LinearImage::filled(3, 2, [0.0; 3]).unwrap();
        assert_eq!(compose_scatter(&g1, &zero, 0.0, 7).unwrap(), g1);

        let out = compose_scatter(&px([0.9; 3]), &px([0.3; 3]), 0.0, 0).unwrap();
        assert_eq!(out.pixel(0, 0), [1.0; 3]);

        let a = compose_scatter(&g1, &zero, 0.01, 42).unwrap();
        let b = compose_scatter(&g1, &zero, 0.01, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, g1);
        let c = compose_scatter(&g1, &zero, 0.01, 43).unwrap();
        assert_ne!(a, c);

        assert!(compose_scatter(&g1, &zero, -0.1, 0).is_err());
        assert!(compose_scatter(&g1, &px([0.0; 3]), 0.0, 0).is_err());
    }

    #[test]
    fn vignette_examples() {
        let cam = CameraParams::new(0.1, 0.01, 0.001, 1.0).unwrap();
        let v = vignette_mask(5, 7, &cam).unwrap();
        assert_eq!(v.get(2, 3), 1.0);
        assert_abs_diff_eq!(v.get(0, 0), 1.111, epsilon = 1e-12);
        assert_abs_diff_eq!(v.get(4, 6), 1.111, epsilon = 1e-12);
        let bad = CameraParams {
            a: 0.1,
            b: 0.02,
            c: 0.001,
            k: 1.0,
        };
        let err = vignette_mask(5, 5, &bad).unwrap_err();
        assert!(err.to_string().contains("4b^2 = 0.0016"), "{err}");
    }

    #[test]
    fn radius_is_one_at_every_corner() {
        for (w, h) in [(64, 48), (5, 7), (2, 2), (1, 9)] {
            for (x, y) in [(0, 0), (w - 1, 0), (0, h - 1), (w - 1, h - 1)] {
                assert_abs_diff_eq!(normalized_radius(x, y, w, h), 1.0, epsilon = 1e-12);
            }
        }
        assert_eq!(normalized_radius(0, 0, 1, 1), 0.0);
    }

    #[test]
    fn apply_vignette_examples() {
        let g2 = LinearImage::filled(3, 3, [0.5; 3]).unwrap();
        let ones = Plane::filled(3, 3, 1.0).unwrap();
        assert_eq!(apply_vignette(&g2, &ones).unwrap(), g2);
        let v = Plane::filled(3, 3, 1.25).unwrap();
        assert_abs_diff_eq!(apply_vignette(&g2, &v).unwrap().get(1, 1, 0), 0.4, epsilon = 1e-15);

        let cam = CameraParams::new(0.2, 0.0, 0.01, 1.0).unwrap();
        let out = apply_vignette(&g2, &vignette_mask(3, 3, &cam).unwrap()).unwrap();
        assert!(out.get(0, 0, 1) < out.get(1, 1, 1));

        let below = Plane::filled(3, 3, 0.9).unwrap();
        assert!(apply_vignette(&g2, &below).is_err());
    }

    #[test]
    fn sensor_gain_examples() {
        let g = px([0.3, 0.7, 0.0]);
        assert_eq!(sensor_gain(&g, 1.0).unwrap(), g);
        let out = sensor_gain(&g, 2.0).unwrap();
        assert_abs_diff_eq!(out.get(0, 0, 0), 0.6, epsilon = 1e-15);
        assert_eq!(out.get(0, 0, 1), 1.0);
        assert!(sensor_gain(&g, 0.0).is_err());
        assert!(sensor_gain(&g, -1.0).is_err());
    }

    #[test]
    fn normalize_depth_examples() {
        let d = DepthMap::new(3, 1, vec![1.5, 0.75, 3.0]).unwrap();
        let n = normalize_depth(&d, 1.5).unwrap();
        assert_eq!(n.as_slice(), &[1.0, 0.5, 1.0]);
        assert!(normalize_depth(&d, 0.0).is_err());
        let m = DepthMap::new(2, 1, vec![0.0, 1.0])
            .unwrap()
            .with_zero(ZeroDepth::Missing);
        let n = normalize_depth(&m, 2.0).unwrap();
        assert!(n.is_missing(0));
    }

    fn gray_model() -> RenderModel {
        RenderModel {
            water: water([0.40, 0.20, 0.10], [0.05, 0.10, 0.15]),
            camera: CameraParams::new(1e-12, 0.0, 1e-12, 1.0).unwrap(),
            noise_sigma: 0.0,
            max_altitude: 10.0,
        }
    }

    #[test]
    fn render_gray_scene_example() {
        let out = render(&px([0.5; 3]), &d1(2.0), &gray_model(), 0).unwrap();
        // 0.5·e^(−η·2) + β·(1 − e^(−η·2)) per channel, evaluated independently.
        let expect = [0.252_198_033_852_749_7, 0.368_128_018_414_255_7, 0.436_555_763_577_293_6];
        for c in 0..3 {
            assert_abs_diff_eq!(out.get(0, 0, c), expect[c], epsilon = 1e-12);
        }
    }

    #[test]
    fn render_near_identity() {
        let img = LinearImage::from_fn(9, 7, |x, y| {
            [x as f64 / 9.0, y as f64 / 7.0, ((x * y) % 5) as f64 / 5.0]
        })
        .unwrap();
        let d = DepthMap::from_fn(9, 7, |x, _| 1.0 + x as f64).unwrap();
        let out = render(&img, &d, &RenderModel::near_identity(10.0), 3).unwrap();
        for (a, b) in out.as_slice().iter().zip(img.as_slice()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_examples() {
        let g = render_gradients(&px([0.5; 3]), &d1(2.0), &gray_model()).unwrap();
        assert_abs_diff_eq!(g.d[0][0], -0.404_396_067_705_499_4, epsilon = 1e-12);
        // d/dk equals G3, which is the output itself when k = 1 and V = 1.
        for c in 0..3 {
            assert_abs_diff_eq!(g.d[9][c], g.output[c], epsilon = 1e-12);
        }
        // eta_R only influences the red channel.
        assert_eq!(g.d[0][1], 0.0);
        assert_eq!(g.d[0][2], 0.0);
    }

    #[test]
    fn saturated_output_has_zero_gradient() {
        let mut m = gray_model();
        m.camera.k = 3.0;
        let g = render_gradients(&px([0.9; 3]), &d1(0.5), &m).unwrap();
        assert!(g.saturated.get(0));
        assert!(g.d.iter().all(|d| d[0] == 0.0));
    }
}
