//! Qualitative comparison grids. Clamping to [0, 1] happens here and only
//! here.

use image::{DynamicImage, GrayImage, Luma, Rgb, RgbImage};
use remix_core::data::Mixture;
use remix_core::separator::Separator;
use remix_core::{Error, Image, Result};

/// Columns, left to right: mixture, estimated x, estimated b, and the
/// weighted ground-truth components `0.5 x`, `0.5 b`.
pub const COLUMNS: usize = 5;

fn byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn to_dynamic(img: &Image<f32>) -> DynamicImage {
    let s = img.shape();
    let (w, h) = (s.width as u32, s.height as u32);
    if s.channels == 1 {
        DynamicImage::ImageLuma8(GrayImage::from_fn(w, h, |x, y| {
            Luma([byte(img.get(y as usize, x as usize, 0))])
        }))
    } else {
        DynamicImage::ImageRgb8(RgbImage::from_fn(w, h, |x, y| {
            let px = |c| byte(img.get(y as usize, x as usize, c));
            Rgb([px(0), px(1), px(2)])
        }))
    }
}

/// One row per mixture; the result is `rows * H` by `5 * W` pixels.
pub fn render<S: Separator<f32>>(model: &S, rows: &[&Mixture<f32>]) -> Result<DynamicImage> {
    let shape = model.input_shape();
    if shape.channels != 1 && shape.channels != 3 {
        return Err(Error::Config(format!("cannot render {} images", shape.channels)));
    }
    let ys: Vec<_> = rows.iter().map(|m| m.pixels.clone()).collect();
    let seps = model.separate_all(&ys)?;
    let (w, h) = (shape.width, shape.height);
    let mut canvas = Image::zeros(remix_core::Shape::new(h * rows.len(), w * COLUMNS, shape.channels));
    for (r, (m, sep)) in rows.iter().zip(&seps).enumerate() {
        let (gx, gb) = m
            .components()
            .ok_or_else(|| Error::Config("grid needs ground truth on every mixture".into()))?;
        for (col, cell) in [&m.pixels, &sep.x_hat, &sep.b_hat, &gx, &gb].into_iter().enumerate() {
            for c in 0..shape.channels {
                for i in 0..h {
                    for j in 0..w {
                        canvas.set(r * h + i, col * w + j, c, cell.get(i, j, c));
                    }
                }
            }
        }
    }
    Ok(to_dynamic(&canvas))
}
