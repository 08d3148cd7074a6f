//! Image and depth file I/O. Color files are 8-bit RGB PNG mapped to [0,1]
//! by `value / 255` and treated as linear; depth files are 16-bit grayscale
//! PNG with a per-dataset meters-per-unit scale.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use aquarender_core::{DepthMap, LinearImage, ZeroDepth};
use image::imageops::{self, FilterType};
use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use crate::error::{CliError, Result};

fn read_dynamic(path: &Path) -> Result<DynamicImage> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png).map_err(|e| {
        CliError::data(format!(
            "unsupported or corrupt image {}: {e}",
            path.display()
        ))
    })?;
    if img.width() == 0 || img.height() == 0 {
        return Err(CliError::data(format!(
            "image {} has a zero dimension",
            path.display()
        )));
    }
    Ok(img)
}

pub fn load_image(path: &Path) -> Result<LinearImage> {
    let rgb = read_dynamic(path)?.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let data = rgb.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
    Ok(LinearImage::new(w, h, data)?)
}

pub fn encode_image(img: &LinearImage) -> Result<Vec<u8>> {
    let raw: Vec<u8> = img
        .as_slice()
        .iter()
        .map(|v| (v * 255.0).round() as u8)
        .collect();
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, raw)
            .expect("buffer sized from image");
    encode_png(DynamicImage::ImageRgb8(buf))
}

pub fn save_image(img: &LinearImage, path: &Path) -> Result<()> {
    write_atomic(path, &encode_image(img)?)
}

/// Loads a 16-bit depth PNG as meters (`value × scale`).
pub fn load_depth(path: &Path, scale: f64, zero: ZeroDepth) -> Result<DepthMap> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(CliError::config(format!("depth_scale must be > 0, got {scale}")));
    }
    let img = read_dynamic(path)?;
    let luma: ImageBuffer<Luma<u16>, Vec<u16>> = match img {
        DynamicImage::ImageLuma16(b) => b,
        DynamicImage::ImageLuma8(b) => {
            let (w, h) = b.dimensions();
            let raw = b.into_raw().into_iter().map(u16::from).collect();
            ImageBuffer::from_raw(w, h, raw).expect("same size")
        }
        other => {
            return Err(CliError::data(format!(
                "depth file {} must be single-channel, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    let data = luma.as_raw().iter().map(|&v| v as f64 * scale).collect();
    Ok(DepthMap::new(w, h, data)?.with_zero(zero))
}

pub fn encode_depth(depth: &DepthMap, scale: f64) -> Result<Vec<u8>> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(CliError::config(format!("depth_scale must be > 0, got {scale}")));
    }
    let raw: Vec<u16> = depth
        .as_slice()
        .iter()
        .map(|d| (d / scale).round().clamp(0.0, u16::MAX as f64) as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width() as u32, depth.height() as u32, raw)
            .expect("buffer sized from depth");
    encode_png(DynamicImage::ImageLuma16(buf))
}

pub fn save_depth(depth: &DepthMap, path: &Path, scale: f64) -> Result<()> {
    write_atomic(path, &encode_depth(depth, scale)?)
}

fn encode_png(img: DynamicImage) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| CliError::data(format!("PNG encoding failed: {e}")))?;
    Ok(out.into_inner())
}

/// Writes `bytes` to a sibling temporary file, syncs it and renames it over
/// `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(d) = dir {
        fs::create_dir_all(d)
            .map_err(|e| CliError::data(format!("cannot create {}: {e}", d.display())))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| CliError::data(format!("invalid output path {}", path.display())))?;
    let tmp: PathBuf = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::data(format!("cannot write {}: {e}", path.display()))
    })
}

/// Bicubic (Catmull-Rom) resize of a color image.
pub fn bicubic_resize(img: &LinearImage, width: usize, height: usize) -> Result<LinearImage> {
    let data: Vec<f32> = img.as_slice().iter().map(|&v| v as f32).collect();
    let buf: ImageBuffer<Rgb<f32>, Vec<f32>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, data)
            .expect("buffer sized from image");
    let out = imageops::resize(&buf, width as u32, height as u32, FilterType::CatmullRom);
    let data = out.into_raw().into_iter().map(f64::from).collect();
    Ok(LinearImage::from_clamped(width, height, data)?)
}

/// Bicubic resize of a range map. Missing pixels are filled first.
pub fn bicubic_resize_depth(depth: &DepthMap, width: usize, height: usize) -> Result<DepthMap> {
    let filled = depth.filled_nearest()?;
    let data: Vec<f32> = filled.as_slice().iter().map(|&v| v as f32).collect();
    let buf: ImageBuffer<Luma<f32>, Vec<f32>> =
        ImageBuffer::from_raw(depth.width() as u32, depth.height() as u32, data)
            .expect("buffer sized from depth");
    let out = imageops::resize(&buf, width as u32, height as u32, FilterType::CatmullRom);
    let data = out
        .into_raw()
        .into_iter()
        .map(|v| f64::from(v).max(0.0))
        .collect();
    Ok(DepthMap::new(width, height, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_unit_conversion() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        let raw: Vec<u16> = vec![1500, 0, 65535, 1];
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(2, 2, raw).unwrap();
        buf.save(&p).unwrap();
        let d = load_depth(&p, 0.001, ZeroDepth::Missing).unwrap();
        assert!((d.as_slice()[0] - 1.5).abs() < 1e-12);
        assert!(d.is_missing(1));
        assert!((d.as_slice()[2] - 65.535).abs() < 1e-9);
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_image(Path::new("/no/such/dir/img.png")).unwrap_err();
        assert!(err.to_string().contains("/no/such/dir/img.png"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn rejects_non_png() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        fs::write(&p, b"not an image").unwrap();
        assert!(load_image(&p).is_err());
    }

    #[test]
    fn atomic_write_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("f.bin");
        write_atomic(&p, b"abc").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"abc");
        let names: Vec<_> = fs::read_dir(p.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn bicubic_preserves_constant() {
        let img = LinearImage::filled(4, 3, [0.25, 0.5, 0.75]).unwrap();
        let up = bicubic_resize(&img, 8, 6).unwrap();
        for p in up.pixels() {
            for (a, b) in p.iter().zip([0.25, 0.5, 0.75]) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
