//! Model checkpoint: a plain-text header followed by a little-endian `f32`
//! blob of discriminator weights.
//!
//! ```text
//! aquarender-checkpoint 1
//! theta = t0,t1,...,t9
//! eta = r,g,b
//! beta = r,g,b
//! a = ...
//! b = ...
//! c = ...
//! k = ...
//! noise_sigma = ...
//! max_altitude = ...
//! weights = N
//! end
//! <4·N bytes>
//! ```
//!
//! Natural-domain values are authoritative on load; `theta` is informative.
//! Floats are written in shortest round-trip form, so reloading reproduces
//! the model bit for bit.

use crate::error::{Error, Result};
use crate::params::{CameraParams, RenderModel, WaterParams};
use crate::reparam::Theta;

pub const MAGIC: &str = "aquarender-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: RenderModel,
    /// Discriminator weights, empty when the model came from a direct fit.
    pub weights: Vec<f32>,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn bad(msg: impl Into<String>) -> Error {
    Error::invalid("checkpoint", msg)
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let m = &self.model;
        let theta = Theta::from_model(m)?;
        let mut s = format!("{MAGIC} {VERSION}\n");
        s += &format!("theta = {}\n", join(&theta.0));
        s += &format!("eta = {}\n", join(&m.water.eta));
        s += &format!("beta = {}\n", join(&m.water.beta));
        s += &format!("a = {}\n", m.camera.a);
        s += &format!("b = {}\n", m.camera.b);
        s += &format!("c = {}\n", m.camera.c);
        s += &format!("k = {}\n", m.camera.k);
        s += &format!("noise_sigma = {}\n", m.noise_sigma);
        s += &format!("max_altitude = {}\n", m.max_altitude);
        s += &format!("weights = {}\n", self.weights.len());
        s += "end\n";
        let mut out = s.into_bytes();
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const END: &[u8] = b"end\n";
        let split = bytes
            .windows(END.len())
            .position(|w| w == END)
            .ok_or_else(|| bad("missing `end` header terminator"))?;
        let header =
            std::str::from_utf8(&bytes[..split]).map_err(|_| bad("header is not UTF-8"))?;
        let blob = &bytes[split + END.len()..];
        let mut lines = header.lines();
        let first = lines.next().unwrap_or_default();
        let mut parts = first.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(bad(format!("unrecognized header `{first}`")));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing format version"))?;
        if version != VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let mut kv = std::collections::BTreeMap::new();
        for line in lines {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed header line `{line}`")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let scalar = |key: &str| -> Result<f64> {
            kv.get(key)
                .ok_or_else(|| bad(format!("missing `{key}`")))?
                .parse::<f64>()
                .map_err(|_| bad(format!("`{key}` is not a number")))
        };
        let triple = |key: &str| -> Result<[f64; 3]> {
            let v: Vec<f64> = kv
                .get(key)
                .ok_or_else(|| bad(format!("missing `{key}`")))?
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(format!("`{key}` is not a number list")))?;
            v.try_into()
                .map_err(|_| bad(format!("`{key}` needs three values")))
        };
        let model = RenderModel::new(
            WaterParams::new(triple("eta")?, triple("beta")?)?,
            CameraParams::new(scalar("a")?, scalar("b")?, scalar("c")?, scalar("k")?)?,
            scalar("noise_sigma")?,
            scalar("max_altitude")?,
        )?;
        let n: usize = kv
            .get("weights")
            .ok_or_else(|| bad("missing `weights`"))?
            .parse()
            .map_err(|_| bad("`weights` is not a count"))?;
        if blob.len() != n * 4 {
            return Err(bad(format!(
                "weight blob holds {} bytes, header declares {n} weights",
                blob.len()
            )));
        }
        let weights = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { model, weights })
    }
}
