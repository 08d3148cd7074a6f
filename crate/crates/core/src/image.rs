//! Pixel containers shared by every stage: linear RGB radiance, range maps,
//! single-channel planes and boolean masks. All are row-major.

use crate::error::{Error, Result};

/// H×W×3 linear radiance, channel order R,G,B, every value in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidImage(format!(
            "dimensions must be at least 1x1, got {width}x{height}"
        )));
    }
    Ok(())
}

impl LinearImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height * 3 {
            return Err(Error::InvalidImage(format!(
                "expected {} values for {width}x{height}x3, got {}",
                width * height * 3,
                data.len()
            )));
        }
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidImage(format!(
                "value {v} at index {i} outside [0,1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from arbitrary values, clamping each into [0,1].
    /// NaN maps to 0.
    pub fn from_clamped(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        for v in data.iter_mut() {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(width, height, data)
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len_pixels(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixel_at(y * self.width + x)
    }

    /// Pixel by flat row-major index.
    #[inline]
    pub fn pixel_at(&self, i: usize) -> [f64; 3] {
        let p = &self.data[i * 3..i * 3 + 3];
        [p[0], p[1], p[2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub fn same_dims<T: Dims>(&self, other: &T) -> bool {
        self.width == other.width() && self.height == other.height()
    }

    pub(crate) fn ensure_dims<T: Dims>(&self, other: &T, what: &'static str) -> Result<()> {
        ensure_same(self, other, what)
    }

    /// Per-channel mean.
    pub fn channel_means(&self) -> [f64; 3] {
        let mut s = [0.0; 3];
        for p in self.pixels() {
            for c in 0..3 {
                s[c] += p[c];
            }
        }
        let n = self.len_pixels() as f64;
        s.map(|v| v / n)
    }
}

/// Shape accessor shared by the pixel containers.
pub trait Dims {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
}

macro_rules! impl_dims {
    ($($t:ty),*) => {$(
        impl Dims for $t {
            fn width(&self) -> usize { self.width }
            fn height(&self) -> usize { self.height }
        }
    )*};
}
impl_dims!(LinearImage, DepthMap, Plane, PixelMask);

pub(crate) fn ensure_same<A: Dims, B: Dims>(a: &A, b: &B, what: &'static str) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch {
            what,
            expected_w: a.width(),
            expected_h: a.height(),
            actual_w: b.width(),
            actual_h: b.height(),
        });
    }
    Ok(())
}

/// How a stored range of exactly 0 is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroDepth {
    /// 0 is a genuine range of zero meters (synthetic data).
    #[default]
    Range,
    /// 0 marks a hole in the sensor map.
    Missing,
}

/// H×W camera-to-scene range in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
    zero: ZeroDepth,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} depth values for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidImage(format!(
                "depth {v} at index {i} is not a finite non-negative range"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            zero: ZeroDepth::Range,
        })
    }

    pub fn filled(width: usize, height: usize, range: f64) -> Result<Self> {
        Self::new(width, height, vec![range; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Same map, with zeros interpreted per `zero`.
    pub fn with_zero(mut self, zero: ZeroDepth) -> Self {
        self.zero = zero;
        self
    }

    pub fn zero_mode(&self) -> ZeroDepth {
        self.zero
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn is_missing(&self, i: usize) -> bool {
        self.zero == ZeroDepth::Missing && self.data[i] == 0.0
    }

    pub fn has_missing(&self) -> bool {
        self.zero == ZeroDepth::Missing && self.data.iter().any(|&d| d == 0.0)
    }

    /// Mask of pixels whose depth is missing.
    pub fn missing_mask(&self) -> PixelMask {
        PixelMask {
            width: self.width,
            height: self.height,
            data: (0..self.data.len()).map(|i| self.is_missing(i)).collect(),
        }
    }

    /// Fills missing pixels from the nearest valid pixel (4-connected
    /// breadth-first order, ties broken by scan order). The result treats
    /// zero as a range.
    pub fn filled_nearest(&self) -> Result<DepthMap> {
        if !self.has_missing() {
            return Ok(self.clone().with_zero(ZeroDepth::Range));
        }
        let n = self.data.len();
        let mut out = self.data.clone();
        let mut done: Vec<bool> = (0..n).map(|i| !self.is_missing(i)).collect();
        let mut frontier: Vec<usize> = (0..n).filter(|&i| done[i]).collect();
        if frontier.is_empty() {
            return Err(Error::InvalidImage("depth map has no valid pixels".into()));
        }
        let (w, h) = (self.width, self.height);
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for &i in &frontier {
                let (x, y) = (i % w, i / w);
                let mut visit = |j: usize| {
                    if !done[j] {
                        done[j] = true;
                        out[j] = out[i];
                        next.push(j);
                    }
                };
                if y > 0 {
                    visit(i - w);
                }
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < w {
                    visit(i + 1);
                }
                if y + 1 < h {
                    visit(i + w);
                }
            }
            frontier = next;
        }
        DepthMap::new(w, h, out)
    }
}

/// Single-channel real-valued grid (vignetting masks, per-pixel residuals).
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} values for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, v: f64) -> Result<Self> {
        Self::new(width, height, vec![v; width * height])
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Per-pixel boolean flags.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} flags for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, v: bool) -> Result<Self> {
        Self::new(width, height, vec![v; width * height])
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.data[i]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_and_bad_length() {
        assert!(LinearImage::new(1, 1, vec![0.0, 0.5, 1.1]).is_err());
        assert!(LinearImage::new(1, 1, vec![0.0, 0.5]).is_err());
        assert!(LinearImage::new(0, 1, vec![]).is_err());
        assert!(LinearImage::new(1, 1, vec![0.0, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn depth_rejects_negative_and_nan() {
        assert!(DepthMap::new(2, 1, vec![1.0, -0.1]).is_err());
        assert!(DepthMap::new(2, 1, vec![1.0, f64::NAN]).is_err());
        assert!(DepthMap::new(2, 1, vec![0.0, 3.0]).is_ok());
    }

    #[test]
    fn zero_is_missing_only_when_flagged() {
        let d = DepthMap::new(3, 1, vec![0.0, 2.0, 0.0]).unwrap();
        assert!(!d.has_missing());
        let d = d.with_zero(ZeroDepth::Missing);
        assert_eq!(d.missing_mask().count(), 2);
    }

    #[test]
    fn nearest_fill_takes_closest_valid_value() {
        let d = DepthMap::new(5, 1, vec![1.0, 0.0, 0.0, 0.0, 5.0])
            .unwrap()
            .with_zero(ZeroDepth::Missing);
        let f = d.filled_nearest().unwrap();
        assert_eq!(f.as_slice(), &[1.0, 1.0, 1.0, 5.0, 5.0]);
        assert!(!f.has_missing());

        let empty = DepthMap::filled(2, 2, 0.0)
            .unwrap()
            .with_zero(ZeroDepth::Missing);
        assert!(empty.filled_nearest().is_err());
    }
}
