//! Model inversion: in-air color from an underwater image with known range,
//! and relative range plus color from a single underwater image.
//!
//! Monocular range uses a per-pixel gray-world prior: the in-air color of
//! each pixel is assumed achromatic (`I_air,c = α`). After undoing gain and
//! vignetting, the backscatter-corrected observation `y_c(r)` must equal
//! `α·e^{−η_c r}` for all three channels at once; because the `η_c` differ,
//! only ranges near the true one make that possible. For a fixed `r` the
//! best `α` is a one-dimensional least-squares solution, so only `r` is
//! searched: a uniform grid followed by golden-section refinement.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{ensure_same, DepthMap, LinearImage, PixelMask, Plane};
use crate::params::RenderModel;
use crate::physics::{normalized_radius, renderable_depth};

/// Result of [`invert_render`].
#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    pub image: LinearImage,
    /// Saturated observations and missing depth. Those pixels pass the
    /// observed value through unrestored.
    pub flagged: PixelMask,
}

/// Pixel observed at the sensor clip in any channel.
#[inline]
fn is_saturated(p: &[f64; 3]) -> bool {
    p.iter().any(|&v| v >= 1.0)
}

/// Inverse of the noiseless render: de-gain, de-vignette, remove
/// backscatter, undo attenuation.
pub fn invert_render(uw: &LinearImage, depth: &DepthMap, model: &RenderModel) -> Result<Inversion> {
    model.validate()?;
    ensure_same(uw, depth, "underwater image vs depth")?;
    let (w, h) = (uw.width(), uw.height());
    let cam = &model.camera;
    let water = &model.water;
    let mut data = Vec::with_capacity(w * h * 3);
    let mut flagged = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let p = uw.pixel_at(i);
            if depth.is_missing(i) || is_saturated(&p) {
                data.extend_from_slice(&p);
                flagged.push(true);
                continue;
            }
            let v = cam.vignette_at(normalized_radius(x, y, w, h));
            let r = depth.as_slice()[i];
            for c in 0..3 {
                let e = (-water.eta[c] * r).exp();
                let g2 = p[c] / cam.k * v;
                data.push((g2 - water.beta[c] * (1.0 - e)) / e);
            }
            flagged.push(false);
        }
    }
    Ok(Inversion {
        image: LinearImage::from_clamped(w, h, data)?,
        flagged: PixelMask::new(w, h, flagged)?,
    })
}

/// Undo only the range attenuation, `uw · e^{η r}`, ignoring backscatter and
/// the camera.
pub fn baseline_attenuation_only(
    uw: &LinearImage,
    depth: &DepthMap,
    eta: [f64; 3],
) -> Result<LinearImage> {
    ensure_same(uw, depth, "underwater image vs depth")?;
    if eta.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::invalid("eta", format!("must be > 0, got {eta:?}")));
    }
    let depth = renderable_depth(depth)?;
    let data = uw
        .as_slice()
        .chunks_exact(3)
        .zip(depth.as_slice())
        .flat_map(|(p, &r)| (0..3).map(move |c| p[c] * (eta[c] * r).exp()))
        .collect();
    LinearImage::from_clamped(uw.width(), uw.height(), data)
}

/// Range search settings for [`estimate_depth`].
#[derive(Debug, Clone, PartialEq)]
pub struct DepthSearch {
    /// Uniform samples over `[0, max_altitude]`, endpoints included.
    pub grid_samples: usize,
    /// Golden-section bracket tolerance as a fraction of `max_altitude`;
    /// `None` keeps the best grid sample.
    pub golden_tolerance: Option<f64>,
    /// Apply the 3×3 median pass.
    pub median: bool,
}

impl Default for DepthSearch {
    fn default() -> Self {
        Self {
            grid_samples: 64,
            golden_tolerance: Some(1e-4),
            median: true,
        }
    }
}

/// Per-pixel output of the monocular range search.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthEstimate {
    /// Range divided by `max_altitude`, in [0,1].
    pub depth_rel: DepthMap,
    /// Gray albedo `α` that best explains each pixel at the returned range.
    pub albedo: Plane,
    /// `Σ_c (G2_c − model_c(α, r))²` at the returned `(α, r)`.
    pub residual: Plane,
    pub saturated: PixelMask,
}

/// Backscatter-corrected, de-vignetted observation for one pixel and the
/// fit of a gray albedo at range `r`.
#[derive(Debug, Clone, Copy)]
struct PixelProblem {
    g2: [f64; 3],
    eta: [f64; 3],
    beta: [f64; 3],
}

impl PixelProblem {
    /// Optimal albedo in [0,1] and the squared residual at range `r`.
    #[inline]
    fn solve_at(&self, r: f64) -> (f64, f64) {
        let mut e = [0.0; 3];
        let mut y = [0.0; 3];
        let (mut num, mut den) = (0.0, 0.0);
        for c in 0..3 {
            e[c] = (-self.eta[c] * r).exp();
            y[c] = self.g2[c] - self.beta[c] * (1.0 - e[c]);
            num += y[c] * e[c];
            den += e[c] * e[c];
        }
        let alpha = (num / den).clamp(0.0, 1.0);
        let res = (0..3).map(|c| (y[c] - alpha * e[c]).powi(2)).sum();
        (alpha, res)
    }

    fn best_range(&self, max_alt: f64, search: &DepthSearch) -> f64 {
        let n = search.grid_samples.max(2);
        let step = max_alt / (n - 1) as f64;
        let (mut best_i, mut best_f) = (0, f64::INFINITY);
        for i in 0..n {
            let f = self.solve_at(i as f64 * step).1;
            if f < best_f {
                best_f = f;
                best_i = i;
            }
        }
        let mut best_r = best_i as f64 * step;
        if let Some(tol) = search.golden_tolerance {
            let lo = best_i.saturating_sub(1) as f64 * step;
            let hi = ((best_i + 1).min(n - 1)) as f64 * step;
            let r = golden_section(|r| self.solve_at(r).1, lo, hi, tol * max_alt);
            if self.solve_at(r).1 < best_f {
                best_r = r;
            }
        }
        best_r
    }
}

/// Minimizer of a unimodal `f` on `[lo, hi]` to bracket width `tol`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

fn check_distinct_eta(model: &RenderModel) -> Result<()> {
    let eta = model.water.eta;
    let max = eta.iter().cloned().fold(f64::MIN, f64::max);
    let min = eta.iter().cloned().fold(f64::MAX, f64::min);
    if max - min <= 1e-9 * max {
        return Err(Error::Ambiguous(format!(
            "attenuation {eta:?} is identical across channels, so range cannot be separated from albedo"
        )));
    }
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median over the valid pixels of each 3×3 window. Windows with no valid
/// pixel keep their center value.
fn median_pass(r: &[f64], valid: &[bool], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; r.len()];
    let mut buf = Vec::with_capacity(9);
    for y in 0..h {
        for x in 0..w {
            buf.clear();
            for yy in y.saturating_sub(1)..(y + 2).min(h) {
                for xx in x.saturating_sub(1)..(x + 2).min(w) {
                    let j = yy * w + xx;
                    if valid[j] {
                        buf.push(r[j]);
                    }
                }
            }
            let i = y * w + x;
            out[i] = if buf.is_empty() { r[i] } else { median(&mut buf) };
        }
    }
    out
}

/// Relative range (and gray albedo) from one underwater image.
pub fn estimate_depth(
    uw: &LinearImage,
    model: &RenderModel,
    search: &DepthSearch,
) -> Result<DepthEstimate> {
    model.validate()?;
    check_distinct_eta(model)?;
    if search.grid_samples < 2 {
        return Err(Error::invalid("grid_samples", "need at least 2 samples"));
    }
    if let Some(t) = search.golden_tolerance {
        if !(t > 0.0) {
            return Err(Error::invalid("golden_tolerance", "must be > 0"));
        }
    }
    let (w, h) = (uw.width(), uw.height());
    let cam = &model.camera;
    let max_alt = model.max_altitude;
    let problems: Vec<PixelProblem> = (0..w * h)
        .map(|i| {
            let v = cam.vignette_at(normalized_radius(i % w, i / w, w, h));
            let p = uw.pixel_at(i);
            PixelProblem {
                g2: p.map(|c| c / cam.k * v),
                eta: model.water.eta,
                beta: model.water.beta,
            }
        })
        .collect();
    let saturated: Vec<bool> = (0..w * h).map(|i| is_saturated(&uw.pixel_at(i))).collect();
    let raw: Vec<f64> = problems
        .par_iter()
        .map(|p| p.best_range(max_alt, search))
        .collect();
    let valid: Vec<bool> = saturated.iter().map(|s| !s).collect();
    let ranges = if search.median {
        median_pass(&raw, &valid, w, h)
    } else {
        raw
    };
    let mut albedo = Vec::with_capacity(w * h);
    let mut residual = Vec::with_capacity(w * h);
    let mut rel = Vec::with_capacity(w * h);
    for (p, &r) in problems.iter().zip(&ranges) {
        let (a, f) = p.solve_at(r);
        albedo.push(a);
        residual.push(f);
        rel.push((r / max_alt).clamp(0.0, 1.0));
    }
    Ok(DepthEstimate {
        depth_rel: DepthMap::new(w, h, rel)?,
        albedo: Plane::new(w, h, albedo)?,
        residual: Plane::new(w, h, residual)?,
        saturated: PixelMask::new(w, h, saturated)?,
    })
}

/// Squared forward-model error of a gray albedo at a given range, as stored
/// in [`DepthEstimate::residual`].
pub fn gray_model_residual(
    uw: &LinearImage,
    x: usize,
    y: usize,
    model: &RenderModel,
    range: f64,
    albedo: f64,
) -> f64 {
    let (w, h) = (uw.width(), uw.height());
    let cam = &model.camera;
    let v = cam.vignette_at(normalized_radius(x, y, w, h));
    let p = uw.pixel(x, y);
    (0..3)
        .map(|c| {
            let e = (-model.water.eta[c] * range).exp();
            let g2 = p[c] / cam.k * v;
            let pred = albedo * e + model.water.beta[c] * (1.0 - e);
            (g2 - pred).powi(2)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestorationResult {
    pub restored: LinearImage,
    pub depth_rel: DepthMap,
    pub albedo: Plane,
    /// Pixels that could not be restored (sensor saturation).
    pub saturation_mask: PixelMask,
    pub residual: Plane,
}

/// Monocular restoration: range search, then model inversion at the
/// estimated range.
pub fn restore_monocular(
    uw: &LinearImage,
    model: &RenderModel,
    search: &DepthSearch,
) -> Result<RestorationResult> {
    let est = estimate_depth(uw, model, search)?;
    let meters = DepthMap::new(
        uw.width(),
        uw.height(),
        est.depth_rel
            .as_slice()
            .iter()
            .map(|d| d * model.max_altitude)
            .collect(),
    )?;
    let inv = invert_render(uw, &meters, model)?;
    Ok(RestorationResult {
        restored: inv.image,
        depth_rel: est.depth_rel,
        albedo: est.albedo,
        saturation_mask: est.saturated,
        residual: est.residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ZeroDepth;
    use crate::params::{CameraParams, WaterParams};
    use crate::physics::render;

    fn model() -> RenderModel {
        RenderModel::new(
            WaterParams::new([0.40, 0.20, 0.10], [0.05, 0.10, 0.15]).unwrap(),
            CameraParams::new(1e-12, 0.0, 1e-12, 1.0).unwrap(),
            0.0,
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn inverts_hand_example() {
        // Blue channel of the gray render example, evaluated independently.
        let uw = LinearImage::filled(1, 1, [0.1, 0.1, 0.436_555_763_577_293_6]).unwrap();
        let d = DepthMap::filled(1, 1, 2.0).unwrap();
        let inv = invert_render(&uw, &d, &model()).unwrap();
        assert!((inv.image.get(0, 0, 2) - 0.5).abs() < 1e-12);
        // At the rounded figure 0.43657 the inverse stays within 2e-5 of 0.5.
        let uw = LinearImage::filled(1, 1, [0.1, 0.1, 0.43657]).unwrap();
        let inv = invert_render(&uw, &d, &model()).unwrap();
        assert!((inv.image.get(0, 0, 2) - 0.5).abs() < 2e-5);
    }

    #[test]
    fn identity_model_inverse_is_identity() {
        let uw = LinearImage::from_fn(5, 4, |x, y| [0.1 * x as f64, 0.2 * y as f64, 0.5]).unwrap();
        let d = DepthMap::filled(5, 4, 3.0).unwrap();
        let inv = invert_render(&uw, &d, &RenderModel::near_identity(10.0)).unwrap();
        for (a, b) in inv.image.as_slice().iter().zip(uw.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn flags_saturated_and_missing() {
        let uw = LinearImage::new(3, 1, vec![1.0, 0.5, 0.5, 0.4, 0.4, 0.4, 0.3, 0.3, 0.3]).unwrap();
        let d = DepthMap::new(3, 1, vec![1.0, 0.0, 2.0])
            .unwrap()
            .with_zero(ZeroDepth::Missing);
        let inv = invert_render(&uw, &d, &model()).unwrap();
        assert_eq!(inv.flagged.as_slice(), &[true, true, false]);
        assert_eq!(inv.image.pixel(1, 0), [0.4; 3]);
    }

    #[test]
    fn attenuation_only_baseline() {
        let uw = LinearImage::filled(1, 1, [0.39728, 0.2, 0.2]).unwrap();
        let d = DepthMap::filled(1, 1, 2.0).unwrap();
        let out = baseline_attenuation_only(&uw, &d, [0.35, 0.1, 0.1]).unwrap();
        assert!((out.get(0, 0, 0) - 0.8).abs() < 1e-4);
        let id = baseline_attenuation_only(&uw, &d, [1e-12; 3]).unwrap();
        assert!((id.get(0, 0, 0) - 0.39728).abs() < 1e-9);
        assert!(baseline_attenuation_only(&uw, &d, [0.0, 0.1, 0.1]).is_err());
    }

    #[test]
    fn attenuation_only_differs_from_full_inverse_with_haze() {
        let m = model();
        let uw = LinearImage::filled(2, 2, [0.3, 0.4, 0.5]).unwrap();
        let d = DepthMap::filled(2, 2, 1.5).unwrap();
        let a = baseline_attenuation_only(&uw, &d, m.water.eta).unwrap();
        let b = invert_render(&uw, &d, &m).unwrap().image;
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!(x != y);
        }
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let r = golden_section(|x| (x - 1.234).powi(2), 0.0, 5.0, 1e-9);
        assert!((r - 1.234).abs() < 1e-8);
    }

    #[test]
    fn equal_eta_is_ambiguous() {
        let uw = LinearImage::filled(3, 3, [0.5; 3]).unwrap();
        let m = RenderModel::near_identity(10.0);
        assert!(matches!(
            estimate_depth(&uw, &m, &DepthSearch::default()),
            Err(Error::Ambiguous(_))
        ));
        assert!(matches!(
            restore_monocular(&uw, &m, &DepthSearch::default()),
            Err(Error::Ambiguous(_))
        ));
    }

    #[test]
    fn flat_gray_scene_gives_constant_depth() {
        let m = model();
        let scene = LinearImage::filled(9, 7, [0.5; 3]).unwrap();
        let d = DepthMap::filled(9, 7, 3.7).unwrap();
        let uw = render(&scene, &d, &m, 0).unwrap();
        let est = estimate_depth(&uw, &m, &DepthSearch::default()).unwrap();
        let vals = est.depth_rel.as_slice();
        let (lo, hi) = vals
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi - lo < 0.01);
        assert!((vals[0] - 0.37).abs() < 1e-3);
    }
}
