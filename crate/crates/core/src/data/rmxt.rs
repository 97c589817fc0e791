//! `RMXT` tensor blobs: a 16-byte little-endian header followed by `count`
//! images of `C x H x W` little-endian `f32` values.
//!
//! | bytes | field            |
//! |-------|------------------|
//! | 0..4  | magic `b"RMXT"`  |
//! | 4..6  | version (u16)    |
//! | 6..8  | height (u16)     |
//! | 8..10 | width (u16)      |
//! | 10..12| channels (u16)   |
//! | 12..16| count (u32)      |

use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::scalar::Scalar;

pub const RMXT_MAGIC: &[u8; 4] = b"RMXT";
pub const RMXT_VERSION: u16 = 1;
pub const RMXT_HEADER_LEN: usize = 16;

pub fn write_blob<T: Scalar>(shape: Shape, images: &[Image<T>]) -> Result<Vec<u8>> {
    let dim = |v: usize, what: &str| {
        u16::try_from(v).map_err(|_| Error::Config(format!("{what} {v} does not fit the RMXT header")))
    };
    let mut out = Vec::with_capacity(RMXT_HEADER_LEN + images.len() * shape.len() * 4);
    out.extend_from_slice(RMXT_MAGIC);
    out.extend_from_slice(&RMXT_VERSION.to_le_bytes());
    out.extend_from_slice(&dim(shape.height, "height")?.to_le_bytes());
    out.extend_from_slice(&dim(shape.width, "width")?.to_le_bytes());
    out.extend_from_slice(&dim(shape.channels, "channels")?.to_le_bytes());
    let count = u32::try_from(images.len()).map_err(|_| Error::Config("too many images".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for img in images {
        if img.shape() != shape {
            return Err(Error::dims(shape, img.shape()));
        }
        for &v in img.as_slice() {
            let v = v.to_f32().unwrap();
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_blob<T: Scalar>(bytes: &[u8]) -> Result<(Shape, Vec<Image<T>>)> {
    if bytes.len() < RMXT_HEADER_LEN {
        return Err(Error::Length(format!(
            "RMXT header needs {RMXT_HEADER_LEN} bytes, got {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != RMXT_MAGIC {
        return Err(Error::Format(format!("bad RMXT magic {:?}", &bytes[..4])));
    }
    let u16_at = |at: usize| u16::from_le_bytes([bytes[at], bytes[at + 1]]) as usize;
    let version = u16_at(4) as u16;
    if version != RMXT_VERSION {
        return Err(Error::Incompatible(format!(
            "RMXT version {version}, this build reads {RMXT_VERSION}"
        )));
    }
    let shape = Shape::new(u16_at(6), u16_at(8), u16_at(10));
    let count = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[RMXT_HEADER_LEN..];
    let want = count * shape.len() * 4;
    if body.len() != want {
        return Err(Error::Length(format!(
            "RMXT body holds {} bytes, header implies {want}",
            body.len()
        )));
    }
    let images = body
        .chunks_exact(shape.len() * 4)
        .take(count)
        .map(|chunk| {
            let data = chunk
                .chunks_exact(4)
                .map(|b| T::from_f32(f32::from_le_bytes(b.try_into().unwrap())).unwrap())
                .collect();
            Image::from_vec(shape, data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((shape, images))
}
