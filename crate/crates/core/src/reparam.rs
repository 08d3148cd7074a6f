//! Unconstrained coordinates for the ten fitted parameters.
//!
//! ```text
//! eta  = exp(t_eta)          a = exp(t_a)     c = exp(t_c)     k = exp(t_k)
//! beta = logistic(t_beta)    b = (1 − ε) · tanh(t_b) · sqrt(3ac)
//! ```
//!
//! Any finite `t` maps to parameters with `eta > 0`, `0 < beta < 1`,
//! `a, c, k > 0` and `b² < 3ac` (equivalently `4b² − 12ac < 0`).

use crate::error::{Error, Result};
use crate::params::{RenderModel, NUM_PARAMS};

/// Margin keeping `b` strictly inside the vignetting constraint.
pub const B_MARGIN: f64 = 1e-3;

/// Reparameterized coordinates, ordered like [`RenderModel::natural`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta(pub [f64; NUM_PARAMS]);

#[inline]
fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl Theta {
    /// Coordinates of a model. `beta` is pulled into (1e-9, 1 − 1e-9) and `b`
    /// into the open margin band so the map is invertible.
    pub fn from_model(model: &RenderModel) -> Result<Self> {
        model.validate()?;
        let p = model.natural();
        let mut t = [0.0; NUM_PARAMS];
        for c in 0..3 {
            t[c] = p[c].ln();
            t[3 + c] = logit(p[3 + c].clamp(1e-9, 1.0 - 1e-9));
        }
        let (a, b, c) = (p[6], p[7], p[8]);
        if c <= 0.0 {
            return Err(Error::invalid(
                "c",
                "reparameterization needs c > 0 strictly",
            ));
        }
        t[6] = a.ln();
        t[8] = c.ln();
        let scale = (1.0 - B_MARGIN) * (3.0 * a * c).sqrt();
        let ratio = (b / scale).clamp(-1.0 + 1e-12, 1.0 - 1e-12);
        t[7] = ratio.atanh();
        t[9] = p[9].ln();
        Ok(Theta(t))
    }

    /// Natural-domain parameters.
    pub fn natural(&self) -> [f64; NUM_PARAMS] {
        let t = &self.0;
        let mut p = [0.0; NUM_PARAMS];
        for c in 0..3 {
            p[c] = t[c].exp();
            p[3 + c] = logistic(t[3 + c]);
        }
        let a = t[6].exp();
        let c = t[8].exp();
        p[6] = a;
        p[8] = c;
        p[7] = (1.0 - B_MARGIN) * t[7].tanh() * (3.0 * a * c).sqrt();
        p[9] = t[9].exp();
        p
    }

    /// Applies these coordinates to `base`, keeping its noise level and
    /// altitude.
    pub fn to_model(&self, base: &RenderModel) -> Result<RenderModel> {
        if self.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                stage: "reparameterization",
                detail: format!("non-finite coordinates {:?}", self.0),
            });
        }
        base.with_natural(&self.natural())
    }

    /// Maps a gradient with respect to the natural parameters onto these
    /// coordinates.
    pub fn pullback(&self, grad_natural: &[f64; NUM_PARAMS]) -> [f64; NUM_PARAMS] {
        let p = self.natural();
        let t = &self.0;
        let g = grad_natural;
        let mut out = [0.0; NUM_PARAMS];
        for c in 0..3 {
            out[c] = g[c] * p[c];
            let s = p[3 + c];
            out[3 + c] = g[3 + c] * s * (1.0 - s);
        }
        let (a, b, c) = (p[6], p[7], p[8]);
        // b ∝ sqrt(a c), so ∂b/∂t_a = ∂b/∂t_c = b/2.
        out[6] = g[6] * a + g[7] * 0.5 * b;
        out[8] = g[8] * c + g[7] * 0.5 * b;
        let th = t[7].tanh();
        out[7] = g[7] * (1.0 - B_MARGIN) * (1.0 - th * th) * (3.0 * a * c).sqrt();
        out[9] = g[9] * p[9];
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{CameraParams, WaterParams};

    fn model() -> RenderModel {
        RenderModel::new(
            WaterParams::new([0.4, 0.2, 0.1], [0.05, 0.1, 0.15]).unwrap(),
            CameraParams::new(0.3, 0.1, 0.05, 1.2).unwrap(),
            0.0,
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_recovers_model() {
        let m = model();
        let t = Theta::from_model(&m).unwrap();
        let back = t.natural();
        for (a, b) in back.iter().zip(m.natural()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn extreme_coordinates_still_valid() {
        let base = model();
        for v in [-30.0, -5.0, 0.0, 5.0, 30.0] {
            let t = Theta([v; NUM_PARAMS]);
            let m = t.to_model(&base).unwrap();
            m.validate().unwrap();
        }
    }

    #[test]
    fn pullback_matches_finite_differences() {
        // Scalar test function of the natural parameters.
        let weights = [0.3, -1.2, 0.7, 2.0, -0.4, 1.1, 0.9, -2.5, 1.7, 0.6];
        let f = |t: &Theta| -> f64 {
            t.natural()
                .iter()
                .zip(weights)
                .map(|(p, w)| w * p * p)
                .sum()
        };
        let t0 = Theta([-0.9, -1.6, -2.3, -2.9, -2.2, -1.7, -1.2, 0.4, -3.0, 0.18]);
        let p = t0.natural();
        let g_nat: [f64; NUM_PARAMS] = std::array::from_fn(|i| 2.0 * weights[i] * p[i]);
        let g = t0.pullback(&g_nat);
        let h = 1e-6;
        for i in 0..NUM_PARAMS {
            let mut tp = t0;
            tp.0[i] += h;
            let mut tm = t0;
            tm.0[i] -= h;
            let fd = (f(&tp) - f(&tm)) / (2.0 * h);
            assert!(
                (fd - g[i]).abs() <= 1e-6 * fd.abs().max(1e-3),
                "param {i}: fd {fd} analytic {}",
                g[i]
            );
        }
    }
}
