//! Water-column and camera parameters, plus the generator parameter set.

use crate::error::{Error, Result};

/// Per-channel attenuation (1/m) and backscatter asymptote.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaterParams {
    pub eta: [f64; 3],
    pub beta: [f64; 3],
}

impl WaterParams {
    pub fn new(eta: [f64; 3], beta: [f64; 3]) -> Result<Self> {
        let w = Self { eta, beta };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (c, &e) in self.eta.iter().enumerate() {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::invalid(
                    "eta",
                    format!("channel {c} attenuation must be > 0, got {e}"),
                ));
            }
        }
        for (c, &b) in self.beta.iter().enumerate() {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::invalid(
                    "beta",
                    format!("channel {c} backscatter must lie in [0,1], got {b}"),
                ));
            }
        }
        Ok(())
    }
}

/// Radial vignetting polynomial `1 + a r² + b r⁴ + c r⁶` and linear gain `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub k: f64,
}

impl CameraParams {
    pub fn new(a: f64, b: f64, c: f64, k: f64) -> Result<Self> {
        let cam = Self { a, b, c, k };
        cam.validate()?;
        Ok(cam)
    }

    /// Checks the vignetting constraints and `k > 0`.
    ///
    /// `c ≥ 0` together with `4b² − 12ac < 0` means V'(r) has no real root
    /// in r², and `a > 0` fixes its sign to positive, so V is strictly
    /// increasing in r.
    pub fn validate(&self) -> Result<()> {
        self.validate_vignette()?;
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::invalid(
                "k",
                format!("sensor gain must be > 0, got {}", self.k),
            ));
        }
        Ok(())
    }

    pub(crate) fn validate_vignette(&self) -> Result<()> {
        let Self { a, b, c, .. } = *self;
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::invalid("vignette", "coefficients must be finite"));
        }
        if !(c >= 0.0) {
            return Err(Error::invalid("c", format!("c >= 0 violated (c = {c})")));
        }
        let disc = 4.0 * b * b - 12.0 * a * c;
        if !(disc < 0.0) {
            return Err(Error::invalid(
                "b",
                format!(
                    "4b^2 - 12ac < 0 violated: 4b^2 = {} >= 12ac = {}",
                    4.0 * b * b,
                    12.0 * a * c
                ),
            ));
        }
        if !(a > 0.0) {
            return Err(Error::invalid("a", format!("a > 0 violated (a = {a})")));
        }
        Ok(())
    }

    /// V(r) for a normalized radius.
    #[inline]
    pub fn vignette_at(&self, r: f64) -> f64 {
        let r2 = r * r;
        1.0 + r2 * (self.a + r2 * (self.b + r2 * self.c))
    }
}

/// Complete generator parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderModel {
    pub water: WaterParams,
    pub camera: CameraParams,
    /// Standard deviation of the optional per-pixel backscatter noise.
    pub noise_sigma: f64,
    /// Maximum survey altitude in meters; the depth normalization reference.
    pub max_altitude: f64,
}

impl RenderModel {
    pub fn new(
        water: WaterParams,
        camera: CameraParams,
        noise_sigma: f64,
        max_altitude: f64,
    ) -> Result<Self> {
        let m = Self {
            water,
            camera,
            noise_sigma,
            max_altitude,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.water.validate()?;
        self.camera.validate()?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid(
                "noise_sigma",
                format!("must be >= 0, got {}", self.noise_sigma),
            ));
        }
        if !(self.max_altitude > 0.0 && self.max_altitude.is_finite()) {
            return Err(Error::invalid(
                "max_altitude",
                format!("must be > 0, got {}", self.max_altitude),
            ));
        }
        Ok(())
    }

    /// A model whose every stage is (numerically) the identity.
    pub fn near_identity(max_altitude: f64) -> Self {
        Self {
            water: WaterParams {
                eta: [1e-12; 3],
                beta: [0.0; 3],
            },
            camera: CameraParams {
                a: 1e-12,
                b: 0.0,
                c: 1e-12,
                k: 1.0,
            },
            noise_sigma: 0.0,
            max_altitude,
        }
    }

    /// The ten fitted parameters in a fixed order:
    /// `eta[0..3], beta[0..3], a, b, c, k`.
    pub fn natural(&self) -> [f64; NUM_PARAMS] {
        let w = &self.water;
        let c = &self.camera;
        [
            w.eta[0], w.eta[1], w.eta[2], w.beta[0], w.beta[1], w.beta[2], c.a, c.b, c.c, c.k,
        ]
    }

    /// Replaces the ten fitted parameters, keeping noise and altitude.
    pub fn with_natural(&self, p: &[f64; NUM_PARAMS]) -> Result<Self> {
        let m = Self {
            water: WaterParams {
                eta: [p[0], p[1], p[2]],
                beta: [p[3], p[4], p[5]],
            },
            camera: CameraParams {
                a: p[6],
                b: p[7],
                c: p[8],
                k: p[9],
            },
            ..*self
        };
        m.validate()?;
        Ok(m)
    }
}

pub const NUM_PARAMS: usize = 10;

/// Names of the fitted parameters, aligned with [`RenderModel::natural`].
pub const PARAM_NAMES: [&str; NUM_PARAMS] = [
    "eta_r", "eta_g", "eta_b", "beta_r", "beta_g", "beta_b", "a", "b", "c", "k",
];
