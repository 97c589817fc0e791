//! IDX (MNIST) reader and writer. All header integers are big-endian.

use std::fs;
use std::path::Path;

use crate::data::{SourceImage, SourceLabel};
use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::scalar::Scalar;

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

/// Zero padding added on every side of a 28x28 digit.
pub const MNIST_PAD: usize = 2;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Length(format!("{what}: header truncated at byte {at}")))
}

/// Returns `(rows, cols, pixels)` with one `rows*cols` byte run per image.
pub fn read_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<&[u8]>)> {
    let magic = be_u32(bytes, 0, "idx images")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "idx images: bad magic {magic}, expected {IMAGE_MAGIC}"
        )));
    }
    let count = be_u32(bytes, 4, "idx images")? as usize;
    let rows = be_u32(bytes, 8, "idx images")? as usize;
    let cols = be_u32(bytes, 12, "idx images")? as usize;
    let body = &bytes[16..];
    let per = rows * cols;
    if per == 0 {
        return Err(Error::Format("idx images: zero-sized images".into()));
    }
    if body.len() < count * per {
        return Err(Error::Length(format!(
            "idx images: header declares {count} images of {per} bytes, file has {} body bytes",
            body.len()
        )));
    }
    Ok((rows, cols, body[..count * per].chunks(per).collect()))
}

pub fn read_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0, "idx labels")?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!(
            "idx labels: bad magic {magic}, expected {LABEL_MAGIC}"
        )));
    }
    let count = be_u32(bytes, 4, "idx labels")? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Length(format!(
            "idx labels: header declares {count} labels, file has {}",
            body.len()
        )));
    }
    Ok(&body[..count])
}

pub fn write_idx_images(rows: usize, cols: usize, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IMAGE_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        assert_eq!(img.len(), rows * cols);
        out.extend_from_slice(img);
    }
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Loads an IDX image/label file pair as padded unit-interval sources.
/// Digits 0-4 become `SourceX`, 5-9 `SourceB`.
pub fn load_mnist<T: Scalar>(images: &Path, labels: &Path) -> Result<Vec<SourceImage<T>>> {
    let img_bytes = fs::read(images).map_err(|e| Error::io(images, e))?;
    let lbl_bytes = fs::read(labels).map_err(|e| Error::io(labels, e))?;
    let stem = images
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_mnist(&img_bytes, &lbl_bytes, &stem)
}

pub(crate) fn decode_mnist<T: Scalar>(
    img_bytes: &[u8],
    lbl_bytes: &[u8],
    stem: &str,
) -> Result<Vec<SourceImage<T>>> {
    let (rows, cols, raw) = read_idx_images(img_bytes)?;
    let labels = read_idx_labels(lbl_bytes)?;
    if labels.len() != raw.len() {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            raw.len(),
            labels.len()
        )));
    }
    let shape = Shape::new(rows + 2 * MNIST_PAD, cols + 2 * MNIST_PAD, 1);
    let scale = T::from_f64(255.0).unwrap();
    raw.iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (px, &digit))| {
            let label = match digit {
                0..=4 => SourceLabel::SourceX,
                5..=9 => SourceLabel::SourceB,
                _ => return Err(Error::Format(format!("label {digit} at record {i} is not a digit"))),
            };
            let mut img = Image::zeros(shape);
            for r in 0..rows {
                for c in 0..cols {
                    let v = T::from_u8(px[r * cols + c]).unwrap() / scale;
                    img.set(r + MNIST_PAD, c + MNIST_PAD, 0, v);
                }
            }
            Ok(SourceImage {
                pixels: img,
                label,
                origin_id: format!("{stem}#{i}"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(n: usize) -> (Vec<u8>, Vec<u8>) {
        let mut imgs = vec![vec![0u8; 28 * 28]; n];
        if n > 1 {
            imgs[1][0] = 255;
        }
        let labels: Vec<u8> = (0..n as u8).map(|i| i % 10).collect();
        (write_idx_images(28, 28, &imgs), write_idx_labels(&labels))
    }

    #[test]
    fn pads_to_32_and_scales() {
        let (i, l) = fixture(3);
        let src = decode_mnist::<f32>(&i, &l, "t").unwrap();
        assert_eq!(src.len(), 3);
        assert_eq!(src[0].pixels.shape(), Shape::new(32, 32, 1));
        assert!(src[0].pixels.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(src[1].pixels.get(2, 2, 0), 1.0);
        assert_eq!(src[1].pixels.get(0, 0, 0), 0.0);
        assert_eq!(src[1].pixels.as_slice().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn labels_split_sources() {
        let (i, l) = fixture(10);
        let src = decode_mnist::<f64>(&i, &l, "t").unwrap();
        for (d, s) in src.iter().enumerate() {
            let want = if d < 5 { SourceLabel::SourceX } else { SourceLabel::SourceB };
            assert_eq!(s.label, want);
        }
    }

    #[test]
    fn bad_magic_is_format_error() {
        let (mut i, l) = fixture(2);
        i[3] = 0x01;
        assert!(matches!(decode_mnist::<f32>(&i, &l, "t"), Err(Error::Format(_))));
        let (i, mut l) = fixture(2);
        l[3] = 0x03;
        assert!(matches!(decode_mnist::<f32>(&i, &l, "t"), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_is_length_error() {
        let (i, l) = fixture(2);
        assert!(matches!(
            decode_mnist::<f32>(&i[..i.len() - 1], &l, "t"),
            Err(Error::Length(_))
        ));
        assert!(matches!(decode_mnist::<f32>(&i[..10], &l, "t"), Err(Error::Length(_))));
        assert!(matches!(
            decode_mnist::<f32>(&i, &l[..l.len() - 1], "t"),
            Err(Error::Length(_))
        ));
    }

    #[test]
    fn header_count_is_honoured() {
        let imgs = vec![vec![7u8; 4]; 60];
        let bytes = write_idx_images(2, 2, &imgs);
        let (r, c, px) = read_idx_images(&bytes).unwrap();
        assert_eq!((r, c, px.len()), (2, 2, 60));
    }
}
