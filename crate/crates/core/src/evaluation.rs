//! Color accuracy, color consistency and RMSE metrics, plus the two
//! range-agnostic baselines (per-channel histogram equalization and
//! gray-world normalization).

use crate::error::{Error, Result};
use crate::image::{ensure_same, DepthMap, LinearImage, PixelMask};

/// How a color is stripped of its intensity before comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Divide by the Euclidean norm.
    #[default]
    Euclidean,
    /// Divide by the channel sum (chromaticity coordinates).
    Chromaticity,
}

pub fn intensity_normalize(color: [f64; 3], mode: Normalization) -> Result<[f64; 3]> {
    let s = match mode {
        Normalization::Euclidean => color.iter().map(|v| v * v).sum::<f64>().sqrt(),
        Normalization::Chromaticity => color.iter().sum::<f64>(),
    };
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::UndefinedNormalization(format!(
            "color {color:?} has no intensity to normalize by"
        )));
    }
    Ok(color.map(|v| v / s))
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>().sqrt()
}

fn mean_color(colors: &[[f64; 3]]) -> [f64; 3] {
    let n = colors.len() as f64;
    let mut s = [0.0; 3];
    for p in colors {
        for c in 0..3 {
            s[c] += p[c];
        }
    }
    s.map(|v| v / n)
}

/// One named color patch: observed pixels and the in-air reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorPatch {
    pub name: String,
    pub pixels: Vec<[f64; 3]>,
    pub reference: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColorPatchSet {
    pub patches: Vec<ColorPatch>,
}

impl ColorPatchSet {
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.patches {
            if p.pixels.is_empty() {
                return Err(Error::Empty(format!("patch `{}` has no pixels", p.name)));
            }
            if !seen.insert(p.name.as_str()) {
                return Err(Error::invalid(
                    "patches",
                    format!("duplicate patch name `{}`", p.name),
                ));
            }
        }
        Ok(())
    }
}

/// Per patch, the distance between the normalized mean patch color and the
/// normalized reference.
pub fn color_accuracy(set: &ColorPatchSet, mode: Normalization) -> Result<Vec<(String, f64)>> {
    set.validate()?;
    set.patches
        .iter()
        .map(|p| {
            let m = intensity_normalize(mean_color(&p.pixels), mode)?;
            let r = intensity_normalize(p.reference, mode)?;
            Ok((p.name.clone(), distance(m, r)))
        })
        .collect()
}

/// Observations of single scene points across several images.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackSet {
    pub tracks: Vec<Vec<[f64; 3]>>,
}

/// Mean over tracks of the per-channel population variance of the
/// normalized observations.
pub fn color_consistency(set: &TrackSet, mode: Normalization) -> Result<[f64; 3]> {
    if set.tracks.is_empty() {
        return Err(Error::Empty("no tracks".into()));
    }
    let mut acc = [0.0; 3];
    for (t, track) in set.tracks.iter().enumerate() {
        if track.len() < 2 {
            return Err(Error::invalid(
                "tracks",
                format!("track {t} has {} observation(s), need at least 2", track.len()),
            ));
        }
        let norm: Vec<[f64; 3]> = track
            .iter()
            .map(|c| intensity_normalize(*c, mode))
            .collect::<Result<_>>()?;
        let mean = mean_color(&norm);
        let n = norm.len() as f64;
        for c in 0..3 {
            acc[c] += norm.iter().map(|v| (v[c] - mean[c]).powi(2)).sum::<f64>() / n;
        }
    }
    let nt = set.tracks.len() as f64;
    Ok(acc.map(|v| v / nt))
}

/// Per-channel root-mean-square difference.
pub fn rmse_rgb(a: &LinearImage, b: &LinearImage) -> Result<[f64; 3]> {
    ensure_same(a, b, "rmse images")?;
    let mut s = [0.0; 3];
    for (p, q) in a.pixels().zip(b.pixels()) {
        for c in 0..3 {
            s[c] += (p[c] - q[c]).powi(2);
        }
    }
    let n = a.len_pixels() as f64;
    Ok(s.map(|v| (v / n).sqrt()))
}

/// Root-mean-square difference over pixels where `mask` is set.
pub fn rmse_depth_norm(a: &DepthMap, b: &DepthMap, mask: &PixelMask) -> Result<f64> {
    ensure_same(a, b, "rmse depth maps")?;
    ensure_same(a, mask, "rmse depth mask")?;
    let (mut s, mut n) = (0.0, 0usize);
    for i in 0..mask.as_slice().len() {
        if mask.get(i) {
            s += (a.as_slice()[i] - b.as_slice()[i]).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("depth RMSE mask selects no pixel".into()));
    }
    Ok((s / n as f64).sqrt())
}

/// Valid-depth mask: pixels where neither map is missing.
pub fn valid_depth_mask(a: &DepthMap, b: &DepthMap) -> Result<PixelMask> {
    ensure_same(a, b, "depth maps")?;
    let flags = (0..a.as_slice().len())
        .map(|i| !a.is_missing(i) && !b.is_missing(i))
        .collect();
    PixelMask::new(a.width(), a.height(), flags)
}

pub const LEVELS: usize = 256;

#[inline]
fn level(v: f64) -> usize {
    (v * (LEVELS - 1) as f64).round() as usize
}

/// Per-channel histogram equalization over 256 levels.
///
/// Each occupied input level maps to `round(255 · CDF)`, then occupied
/// levels are spread so distinct input levels stay distinct (the map is
/// strictly increasing on occupied levels). A single-level channel maps to
/// 1.0.
pub fn baseline_histeq(img: &LinearImage) -> LinearImage {
    let n = img.len_pixels();
    let mut out = img.as_slice().to_vec();
    for c in 0..3 {
        let mut hist = [0usize; LEVELS];
        for p in img.pixels() {
            hist[level(p[c])] += 1;
        }
        let occupied: Vec<usize> = (0..LEVELS).filter(|&l| hist[l] > 0).collect();
        let mut target = Vec::with_capacity(occupied.len());
        let mut cum = 0usize;
        for &l in &occupied {
            cum += hist[l];
            target.push(((cum as f64 / n as f64) * (LEVELS - 1) as f64).round() as i64);
        }
        for j in 1..target.len() {
            target[j] = target[j].max(target[j - 1] + 1);
        }
        let last = target.len() - 1;
        target[last] = target[last].min((LEVELS - 1) as i64);
        for j in (0..last).rev() {
            target[j] = target[j].min(target[j + 1] - 1);
        }
        let mut map = [0.0; LEVELS];
        for (&l, &t) in occupied.iter().zip(&target) {
            map[l] = t as f64 / (LEVELS - 1) as f64;
        }
        for (i, p) in img.pixels().enumerate() {
            out[i * 3 + c] = map[level(p[c])];
        }
    }
    LinearImage::new(img.width(), img.height(), out).expect("levels lie in [0,1]")
}

/// Gray-world gains `global_mean / channel_mean`.
pub fn grayworld_gains(img: &LinearImage) -> Result<[f64; 3]> {
    let means = img.channel_means();
    if let Some(c) = means.iter().position(|m| !(*m > 0.0)) {
        return Err(Error::invalid(
            "image",
            format!("channel {c} has zero mean; gray-world gain undefined"),
        ));
    }
    let global = means.iter().sum::<f64>() / 3.0;
    Ok(means.map(|m| global / m))
}

/// Scales each channel to the global mean intensity, then clamps.
pub fn baseline_grayworld(img: &LinearImage) -> Result<LinearImage> {
    let g = grayworld_gains(img)?;
    let data = img
        .as_slice()
        .chunks_exact(3)
        .flat_map(|p| (0..3).map(move |c| p[c] * g[c]))
        .collect();
    LinearImage::from_clamped(img.width(), img.height(), data)
}

/// Total-variation distance between a channel's 256-level histogram and the
/// uniform distribution.
pub fn tv_to_uniform(img: &LinearImage, channel: usize) -> f64 {
    let mut hist = [0usize; LEVELS];
    for p in img.pixels() {
        hist[level(p[channel])] += 1;
    }
    let n = img.len_pixels() as f64;
    0.5 * hist
        .iter()
        .map(|&h| (h as f64 / n - 1.0 / LEVELS as f64).abs())
        .sum::<f64>()
}
