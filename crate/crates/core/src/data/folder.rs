use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use log::warn;

use crate::data::{SourceImage, SourceLabel};
use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct FolderImages<T> {
    pub images: Vec<SourceImage<T>>,
    /// Files that could not be decoded, with the decoder's message.
    pub skipped: Vec<(PathBuf, String)>,
}

/// Decodes every regular file in `dir` (sorted by name), resizes to `shape`
/// and maps intensities to `v/255`, or `(255 - v)/255` when `invert` is set.
pub fn load_image_folder<T: Scalar>(
    dir: &Path,
    shape: Shape,
    invert: bool,
    label: SourceLabel,
) -> Result<FolderImages<T>> {
    if shape.channels != 1 && shape.channels != 3 {
        return Err(Error::Config(format!(
            "folder images must have 1 or 3 channels, got {}",
            shape.channels
        )));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Data(format!("image folder {} is empty", dir.display())));
    }

    let mut images = Vec::with_capacity(paths.len());
    let mut skipped = Vec::new();
    for path in paths {
        match image::open(&path) {
            Ok(img) => {
                let pixels = to_tensor(&img, shape, invert);
                images.push(SourceImage {
                    pixels,
                    label,
                    origin_id: path
                        .file_name()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                });
            }
            Err(e) => {
                warn!("skipping undecodable image {}: {e}", path.display());
                skipped.push((path, e.to_string()));
            }
        }
    }
    if images.is_empty() {
        return Err(Error::Data(format!(
            "no decodable images in {} ({} skipped)",
            dir.display(),
            skipped.len()
        )));
    }
    Ok(FolderImages { images, skipped })
}

/// Decodes one image file and maps it into `shape` like [`load_image_folder`].
pub fn load_image_file<T: Scalar>(path: &Path, shape: Shape, invert: bool) -> Result<Image<T>> {
    if shape.channels != 1 && shape.channels != 3 {
        return Err(Error::Config(format!(
            "images must have 1 or 3 channels, got {}",
            shape.channels
        )));
    }
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Data(format!("cannot decode {}: {other}", path.display())),
    })?;
    Ok(to_tensor(&img, shape, invert))
}

fn to_tensor<T: Scalar>(img: &image::DynamicImage, shape: Shape, invert: bool) -> Image<T> {
    let resized = img.resize_exact(shape.width as u32, shape.height as u32, FilterType::Triangle);
    let raw: Vec<u8> = if shape.channels == 1 {
        resized.to_luma8().into_raw()
    } else {
        resized.to_rgb8().into_raw()
    };
    let c = shape.channels;
    let scale = T::from_f64(255.0).unwrap();
    let mut out = Image::zeros(shape);
    for r in 0..shape.height {
        for col in 0..shape.width {
            for ch in 0..c {
                let v = raw[(r * shape.width + col) * c + ch];
                let v = if invert { 255 - v } else { v };
                out.set(r, col, ch, T::from_u8(v).unwrap() / scale);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    #[test]
    fn inverts_white_to_zero_and_black_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = RgbImage::from_pixel(4, 4, Rgb([255, 255, 255]));
        img.put_pixel(0, 0, Rgb([0, 0, 0]));
        img.save(dir.path().join("a.png")).unwrap();
        let shape = Shape::new(4, 4, 3);
        let got = load_image_folder::<f32>(dir.path(), shape, true, SourceLabel::SourceX).unwrap();
        let px = &got.images[0].pixels;
        assert_eq!(px.get(0, 0, 0), 1.0);
        assert_eq!(px.get(1, 1, 2), 0.0);
        assert_eq!(got.images[0].origin_id, "a.png");
    }

    #[test]
    fn resizes_and_skips_garbage() {
        let dir = tempfile::tempdir().unwrap();
        RgbImage::from_pixel(10, 7, Rgb([10, 20, 30]))
            .save(dir.path().join("b.png"))
            .unwrap();
        fs::write(dir.path().join("c.png"), b"not an image").unwrap();
        let shape = Shape::new(64, 64, 3);
        let got = load_image_folder::<f32>(dir.path(), shape, false, SourceLabel::SourceB).unwrap();
        assert_eq!(got.images.len(), 1);
        assert_eq!(got.images[0].pixels.shape(), shape);
        assert_eq!(got.skipped.len(), 1);
        assert!((got.images[0].pixels.get(5, 5, 1) - 20.0 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn empty_folder_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let r = load_image_folder::<f32>(dir.path(), Shape::new(4, 4, 1), false, SourceLabel::SourceX);
        assert!(matches!(r, Err(Error::Data(_))));
    }
}
