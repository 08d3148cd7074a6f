//! Area-averaging downsampling to the training resolution.

use crate::error::{Error, Result};
use crate::image::{DepthMap, LinearImage, ZeroDepth};

pub const TRAIN_WIDTH: usize = 64;
pub const TRAIN_HEIGHT: usize = 48;

/// Overlap weights of each output cell with the source cells along one axis.
fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let mut ws = Vec::new();
            let mut i = lo.floor() as usize;
            while (i as f64) < hi && i < src {
                let w = (hi.min((i + 1) as f64) - lo.max(i as f64)).max(0.0);
                if w > 0.0 {
                    ws.push((i, w));
                }
                i += 1;
            }
            ws
        })
        .collect()
}

fn check_down(sw: usize, sh: usize, w: usize, h: usize) -> Result<()> {
    if w == 0 || h == 0 || w > sw || h > sh {
        return Err(Error::invalid(
            "resolution",
            format!("area averaging needs a smaller target, got {sw}x{sh} -> {w}x{h}"),
        ));
    }
    Ok(())
}

/// Box-filter downsample: each output pixel is the overlap-weighted mean of
/// the source pixels it covers.
pub fn area_downsample(img: &LinearImage, width: usize, height: usize) -> Result<LinearImage> {
    check_down(img.width(), img.height(), width, height)?;
    let wx = axis_weights(img.width(), width);
    let wy = axis_weights(img.height(), height);
    let mut data = Vec::with_capacity(width * height * 3);
    for ys in &wy {
        for xs in &wx {
            let mut acc = [0.0; 3];
            let mut total = 0.0;
            for &(sy, fy) in ys {
                for &(sx, fx) in xs {
                    let w = fy * fx;
                    let p = img.pixel(sx, sy);
                    for c in 0..3 {
                        acc[c] += w * p[c];
                    }
                    total += w;
                }
            }
            data.extend(acc.iter().map(|v| v / total));
        }
    }
    LinearImage::from_clamped(width, height, data)
}

/// Box-filter downsample of a range map. Missing pixels are left out of the
/// average; a cell covering only missing pixels stays missing.
pub fn area_downsample_depth(depth: &DepthMap, width: usize, height: usize) -> Result<DepthMap> {
    check_down(depth.width(), depth.height(), width, height)?;
    let wx = axis_weights(depth.width(), width);
    let wy = axis_weights(depth.height(), height);
    let missing = depth.zero_mode() == ZeroDepth::Missing;
    let mut data = Vec::with_capacity(width * height);
    for ys in &wy {
        for xs in &wx {
            let (mut acc, mut total) = (0.0, 0.0);
            for &(sy, fy) in ys {
                for &(sx, fx) in xs {
                    let d = depth.get(sx, sy);
                    if missing && d == 0.0 {
                        continue;
                    }
                    acc += fy * fx * d;
                    total += fy * fx;
                }
            }
            data.push(if total > 0.0 { acc / total } else { 0.0 });
        }
    }
    Ok(DepthMap::new(width, height, data)?.with_zero(depth.zero_mode()))
}
