//! Supervised recovery of the render model from paired data.
//!
//! Given in-air images, their range maps and the matching underwater
//! observations, minimizes the summed squared pixel residual with a damped
//! Gauss-Newton (Levenberg-Marquardt) iteration on the reparameterized
//! coordinates, so every iterate satisfies the parameter constraints.

use nalgebra::{SMatrix, SVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{DepthMap, LinearImage};
use crate::params::{CameraParams, RenderModel, WaterParams, NUM_PARAMS};
use crate::physics::{eval_pixel, normalized_radius, Radial};
use crate::reparam::Theta;

type Mat = SMatrix<f64, NUM_PARAMS, NUM_PARAMS>;
type Vector = SVector<f64, NUM_PARAMS>;

/// In-air image, its range map, and the observed underwater image.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub air: LinearImage,
    pub depth: DepthMap,
    pub underwater: LinearImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Starting point; noise level and altitude are carried into the result.
    pub init: RenderModel,
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub rel_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            init: default_init(10.0),
            max_iterations: 200,
            rel_tolerance: 1e-14,
        }
    }
}

/// Generic starting model: mild attenuation and haze, faint vignetting.
pub fn default_init(max_altitude: f64) -> RenderModel {
    RenderModel {
        water: WaterParams {
            eta: [0.2; 3],
            beta: [0.2; 3],
        },
        camera: CameraParams {
            a: 0.1,
            b: 0.0,
            c: 0.05,
            k: 1.0,
        },
        noise_sigma: 0.0,
        max_altitude,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: RenderModel,
    /// Root-mean-square residual over the fitted samples at the solution.
    pub rms_residual: f64,
    /// Summed squared residual at the solution.
    pub cost: f64,
    pub samples: usize,
    pub iterations: usize,
}

/// One observed channel value with its geometry.
#[derive(Debug, Clone, Copy)]
struct Sample {
    air: f64,
    range: f64,
    rn: f64,
    obs: f64,
    channel: u8,
}

fn collect_samples(pairs: &[Pair]) -> Result<Vec<Vec<Sample>>> {
    pairs
        .iter()
        .map(|p| {
            p.air.ensure_dims(&p.depth, "in-air image vs depth")?;
            p.air.ensure_dims(&p.underwater, "in-air vs underwater image")?;
            let (w, h) = (p.air.width(), p.air.height());
            let mut out = Vec::with_capacity(w * h * 3);
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    if p.depth.is_missing(i) {
                        continue;
                    }
                    let obs = p.underwater.pixel_at(i);
                    // Sensor-clipped observations carry no information.
                    if obs.iter().any(|&v| v <= 0.0 || v >= 1.0) {
                        continue;
                    }
                    let air = p.air.pixel_at(i);
                    let rn = normalized_radius(x, y, w, h);
                    for c in 0..3 {
                        out.push(Sample {
                            air: air[c],
                            range: p.depth.as_slice()[i],
                            rn,
                            obs: obs[c],
                            channel: c as u8,
                        });
                    }
                }
            }
            Ok(out)
        })
        .collect()
}

fn check_observable(samples: &[Vec<Sample>]) -> Result<usize> {
    let n: usize = samples.iter().map(Vec::len).sum();
    if n < NUM_PARAMS {
        return Err(Error::UnderConstrained {
            parameter: "all",
            reason: format!("only {n} unsaturated samples with known depth"),
        });
    }
    for c in 0..3u8 {
        if !samples
            .iter()
            .flatten()
            .any(|s| s.channel == c && s.range > 0.0)
        {
            return Err(Error::UnderConstrained {
                parameter: "eta",
                reason: format!("no usable pixel with range > 0 in channel {c}"),
            });
        }
    }
    Ok(n)
}

/// Residual sum of squares, optionally with J^T J and J^T r in natural
/// coordinates.
fn accumulate(
    samples: &[Vec<Sample>],
    model: &RenderModel,
    with_jacobian: bool,
) -> (f64, Mat, Vector) {
    let cam = &model.camera;
    let water = &model.water;
    let parts: Vec<(f64, Mat, Vector)> = samples
        .par_iter()
        .map(|pair| {
            let mut cost = 0.0;
            let mut jtj = Mat::zeros();
            let mut jtr = Vector::zeros();
            for s in pair {
                let c = s.channel as usize;
                let radial = Radial::new(s.rn, cam);
                let ev = eval_pixel(s.air, s.range, water.eta[c], water.beta[c], &radial, cam.k);
                let r = ev.out - s.obs;
                cost += r * r;
                if !with_jacobian || ev.saturated {
                    continue;
                }
                let idx = [c, 3 + c, 6, 7, 8, 9];
                let val = [ev.d_eta, ev.d_beta, ev.d_a, ev.d_b, ev.d_c, ev.d_k];
                for u in 0..6 {
                    jtr[idx[u]] += val[u] * r;
                    for v in u..6 {
                        jtj[(idx[u], idx[v])] += val[u] * val[v];
                    }
                }
            }
            (cost, jtj, jtr)
        })
        .collect();
    let mut cost = 0.0;
    let mut jtj = Mat::zeros();
    let mut jtr = Vector::zeros();
    for (c, a, b) in parts {
        cost += c;
        jtj += a;
        jtr += b;
    }
    // Only the upper triangle (in index order u ≤ v) was filled.
    for i in 0..NUM_PARAMS {
        for j in 0..i {
            let v = jtj[(i, j)] + jtj[(j, i)];
            jtj[(i, j)] = v;
            jtj[(j, i)] = v;
        }
    }
    (cost, jtj, jtr)
}

/// ∂natural/∂theta as a matrix: `P[(j, i)] = ∂p_j/∂t_i`.
fn chain_matrix(theta: &Theta) -> Mat {
    let mut p = Mat::zeros();
    for j in 0..NUM_PARAMS {
        let mut e = [0.0; NUM_PARAMS];
        e[j] = 1.0;
        let row = theta.pullback(&e);
        for i in 0..NUM_PARAMS {
            p[(j, i)] = row[i];
        }
    }
    p
}

/// Least-squares fit of all ten parameters to paired observations.
pub fn fit_direct(pairs: &[Pair], opts: &FitOptions) -> Result<FitResult> {
    if pairs.is_empty() {
        return Err(Error::Empty("no training pairs".into()));
    }
    let samples = collect_samples(pairs)?;
    let n = check_observable(&samples)?;

    let base = opts.init;
    let mut theta = Theta::from_model(&base)?;
    let mut model = theta.to_model(&base)?;
    let (mut cost, mut jtj, mut jtr) = accumulate(&samples, &model, true);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let p = chain_matrix(&theta);
        let h = p.transpose() * jtj * p;
        let g = p.transpose() * jtr;
        let mut accepted = false;
        for _ in 0..30 {
            let mut damped = h;
            for i in 0..NUM_PARAMS {
                damped[(i, i)] += lambda * h[(i, i)].max(1e-12);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-g));
            let mut next = theta;
            for i in 0..NUM_PARAMS {
                next.0[i] += step[i];
            }
            let Ok(candidate) = next.to_model(&base) else {
                lambda *= 10.0;
                continue;
            };
            let (c_new, _, _) = accumulate(&samples, &candidate, false);
            if c_new.is_finite() && c_new < cost {
                let improvement = (cost - c_new) / cost.max(f64::MIN_POSITIVE);
                theta = next;
                model = candidate;
                let (c, a, b) = accumulate(&samples, &model, true);
                cost = c;
                jtj = a;
                jtr = b;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if improvement < opts.rel_tolerance {
                    return Ok(finish(model, cost, n, iterations));
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted || cost == 0.0 {
            break;
        }
    }
    Ok(finish(model, cost, n, iterations))
}

fn finish(model: RenderModel, cost: f64, samples: usize, iterations: usize) -> FitResult {
    FitResult {
        model,
        rms_residual: (cost / samples as f64).sqrt(),
        cost,
        samples,
        iterations,
    }
}
