//! `RMXC` named-tensor checkpoints.
//!
//! | field        | encoding                                           |
//! |--------------|----------------------------------------------------|
//! | magic        | `b"RMXC"`                                          |
//! | version      | u16                                                |
//! | dtype        | u8 (1 = f32, 2 = f64), then one reserved zero byte |
//! | metadata     | u32 length + `key = value` UTF-8 lines             |
//! | tensor count | u32                                                |
//! | each tensor  | u16 name length, name, u8 rank, u32 dims, values   |
//!
//! All integers and values are little-endian. A file holds either a full
//! training state (`kind = state`) or a bare masker (`kind = masker`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::adversarial::Discriminator;
use crate::data::parse_kv;
use crate::error::{Error, Result};
use crate::image::Shape;
use crate::nn::NamedTensor;
use crate::optim::Adam;
use crate::scalar::{DType, Scalar};
use crate::separator::{ArchDescriptor, MaskNet};
use crate::trainer::TrainState;

pub const RMXC_MAGIC: &[u8; 4] = b"RMXC";
pub const RMXC_VERSION: u16 = 1;

fn encode<T: Scalar>(meta: &[(String, String)], tensors: &[(String, &[usize], &[T])]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(RMXC_MAGIC);
    out.extend_from_slice(&RMXC_VERSION.to_le_bytes());
    out.push(T::DTYPE.code());
    out.push(0);
    let mut text = String::new();
    for (k, v) in meta {
        let _ = writeln!(text, "{k} = {v}");
    }
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, dims, data) in tensors {
        let name_len =
            u16::try_from(name.len()).map_err(|_| Error::Config(format!("tensor name too long: {name}")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(dims.len() as u8);
        for &d in *dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        for &v in *data {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Length(format!(
                "checkpoint truncated reading {what}: need {n} bytes at offset {}, file has {}",
                self.at,
                self.bytes.len()
            ))
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

struct Decoded<T> {
    meta: BTreeMap<String, String>,
    tensors: Vec<NamedTensor<T>>,
}

impl<T> Decoded<T> {
    fn get<V: std::str::FromStr>(&self, key: &str) -> Result<V> {
        let raw = self
            .meta
            .get(key)
            .ok_or_else(|| Error::Format(format!("checkpoint metadata lacks {key:?}")))?;
        raw.parse()
            .map_err(|_| Error::Format(format!("checkpoint metadata {key} = {raw:?} is malformed")))
    }

    fn take_prefixed(&mut self, prefix: &str) -> Vec<NamedTensor<T>> {
        let (hit, rest): (Vec<_>, Vec<_>) = std::mem::take(&mut self.tensors)
            .into_iter()
            .partition(|t| t.name.starts_with(prefix));
        self.tensors = rest;
        hit.into_iter()
            .map(|mut t| {
                t.name = t.name[prefix.len()..].to_string();
                t
            })
            .collect()
    }
}

fn decode<T: Scalar>(bytes: &[u8]) -> Result<Decoded<T>> {
    let mut c = Cursor { bytes, at: 0 };
    let magic = c.take(4, "magic")?;
    if magic != RMXC_MAGIC {
        return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
    }
    let version = c.u16("version")?;
    if version != RMXC_VERSION {
        return Err(Error::Incompatible(format!(
            "checkpoint version {version}, this build reads {RMXC_VERSION}"
        )));
    }
    let code = c.u8("dtype")?;
    let dtype = DType::from_code(code).ok_or_else(|| Error::Format(format!("unknown dtype code {code}")))?;
    if dtype != T::DTYPE {
        return Err(Error::Incompatible(format!(
            "checkpoint stores {dtype:?}, requested {:?}",
            T::DTYPE
        )));
    }
    c.u8("reserved")?;
    let meta_len = c.u32("metadata length")? as usize;
    let text = std::str::from_utf8(c.take(meta_len, "metadata")?)
        .map_err(|e| Error::Format(format!("checkpoint metadata is not UTF-8: {e}")))?;
    let meta = parse_kv(text)?.into_iter().collect();
    let count = c.u32("tensor count")?;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let name_len = c.u16("tensor name length")? as usize;
        let name = String::from_utf8(c.take(name_len, "tensor name")?.to_vec())
            .map_err(|e| Error::Format(format!("tensor name is not UTF-8: {e}")))?;
        let rank = c.u8("tensor rank")? as usize;
        let dims = (0..rank)
            .map(|_| c.u32("tensor dims").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = dims.iter().product();
        let size = dtype.size();
        let raw = c.take(len.saturating_mul(size), &name)?;
        let data = raw.chunks_exact(size).map(T::read_le).collect();
        tensors.push(NamedTensor { name, dims, data });
    }
    if c.at != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - c.at
        )));
    }
    Ok(Decoded { meta, tensors })
}

fn arch_meta(prefix: &str, arch: &ArchDescriptor, meta: &mut Vec<(String, String)>) {
    let key = |k: &str| format!("{prefix}_{k}");
    meta.push((key("height"), arch.shape.height.to_string()));
    meta.push((key("width"), arch.shape.width.to_string()));
    meta.push((key("channels"), arch.shape.channels.to_string()));
    meta.push((key("base"), arch.base_channels.to_string()));
    meta.push((key("depth"), arch.depth.to_string()));
}

fn arch_from<T>(d: &Decoded<T>, prefix: &str) -> Result<ArchDescriptor> {
    let shape = Shape::new(
        d.get(&format!("{prefix}_height"))?,
        d.get(&format!("{prefix}_width"))?,
        d.get(&format!("{prefix}_channels"))?,
    );
    ArchDescriptor::with_depth(shape, d.get(&format!("{prefix}_base"))?, d.get(&format!("{prefix}_depth"))?)
        .map_err(|e| Error::Format(format!("checkpoint architecture: {e}")))
}

fn named<'a, T>(prefix: &str, ps: &'a [NamedTensor<T>], out: &mut Vec<(String, &'a [usize], &'a [T])>) {
    for p in ps {
        out.push((format!("{prefix}{}", p.name), &p.dims, &p.data));
    }
}

fn moments<'a, T>(
    prefix: &str,
    ps: &'a [NamedTensor<T>],
    opt: &'a Adam<T>,
    out: &mut Vec<(String, &'a [usize], &'a [T])>,
) {
    for (p, m) in ps.iter().zip(&opt.m) {
        out.push((format!("{prefix}.m.{}", p.name), &p.dims, m));
    }
    for (p, v) in ps.iter().zip(&opt.v) {
        out.push((format!("{prefix}.v.{}", p.name), &p.dims, v));
    }
}

pub fn encode_state<T: Scalar>(state: &TrainState<T>) -> Result<Vec<u8>> {
    let mut meta = vec![("kind".to_string(), "state".to_string())];
    arch_meta("masker", state.masker.arch(), &mut meta);
    arch_meta("disc", state.disc.arch(), &mut meta);
    let counters = [
        ("step", state.step),
        ("masker_updates", state.masker_updates),
        ("disc_updates", state.disc_updates),
        ("masker_opt_step", state.masker_opt.step),
        ("disc_opt_step", state.disc_opt.step),
        ("data_seed", state.data_seed),
        ("epoch", state.epoch),
        ("batch_in_epoch", state.batch_in_epoch),
    ];
    meta.extend(counters.iter().map(|(k, v)| (k.to_string(), v.to_string())));
    let mp = state.masker.network().params();
    let dp = state.disc.network().params();
    let mut tensors = Vec::new();
    named("masker.", mp, &mut tensors);
    named("disc.", dp, &mut tensors);
    moments("masker_opt", mp, &state.masker_opt, &mut tensors);
    moments("disc_opt", dp, &state.disc_opt, &mut tensors);
    encode(&meta, &tensors)
}

pub fn encode_masker<T: Scalar>(masker: &MaskNet<T>) -> Result<Vec<u8>> {
    let mut meta = vec![("kind".to_string(), "masker".to_string())];
    arch_meta("masker", masker.arch(), &mut meta);
    let mut tensors = Vec::new();
    named("masker.", masker.network().params(), &mut tensors);
    encode(&meta, &tensors)
}

fn masker_from<T: Scalar>(d: &mut Decoded<T>) -> Result<MaskNet<T>> {
    let mut masker = MaskNet::zeroed(arch_from(d, "masker")?);
    masker.network_mut().load_params(d.take_prefixed("masker."))?;
    Ok(masker)
}

fn adam_from<T: Scalar>(d: &mut Decoded<T>, prefix: &str, params: &[NamedTensor<T>], step: u64) -> Result<Adam<T>> {
    let mut pick = |kind: &str| -> Result<Vec<Vec<T>>> {
        let mut got = d.take_prefixed(&format!("{prefix}.{kind}."));
        if got.len() != params.len() {
            return Err(Error::Format(format!(
                "{prefix}: {} {kind} moments for {} parameters",
                got.len(),
                params.len()
            )));
        }
        params
            .iter()
            .map(|p| {
                let i = got
                    .iter()
                    .position(|t| t.name == p.name)
                    .ok_or_else(|| Error::Format(format!("{prefix}: missing {kind} moment for {}", p.name)))?;
                let t = got.swap_remove(i);
                if t.dims != p.dims {
                    return Err(Error::dims(&p.dims, &t.dims));
                }
                Ok(t.data)
            })
            .collect()
    };
    let m = pick("m")?;
    let v = pick("v")?;
    Ok(Adam { step, m, v })
}

pub fn decode_state<T: Scalar>(bytes: &[u8]) -> Result<TrainState<T>> {
    let mut d = decode::<T>(bytes)?;
    let kind: String = d.get("kind")?;
    if kind != "state" {
        return Err(Error::Incompatible(format!("checkpoint holds a {kind}, not a training state")));
    }
    let masker = masker_from(&mut d)?;
    let mut disc = Discriminator::zeroed(arch_from(&d, "disc")?);
    disc.network_mut().load_params(d.take_prefixed("disc."))?;
    let (m_step, d_step) = (d.get("masker_opt_step")?, d.get("disc_opt_step")?);
    let masker_opt = adam_from(&mut d, "masker_opt", masker.network().params(), m_step)?;
    let disc_opt = adam_from(&mut d, "disc_opt", disc.network().params(), d_step)?;
    if let Some(extra) = d.tensors.first() {
        return Err(Error::Format(format!("unexpected tensor {:?} in checkpoint", extra.name)));
    }
    Ok(TrainState {
        masker,
        disc,
        masker_opt,
        disc_opt,
        step: d.get("step")?,
        masker_updates: d.get("masker_updates")?,
        disc_updates: d.get("disc_updates")?,
        data_seed: d.get("data_seed")?,
        epoch: d.get("epoch")?,
        batch_in_epoch: d.get("batch_in_epoch")?,
    })
}

/// Reads the masker out of either checkpoint kind.
pub fn decode_masker<T: Scalar>(bytes: &[u8]) -> Result<MaskNet<T>> {
    let mut d = decode::<T>(bytes)?;
    masker_from(&mut d)
}

pub fn save_state<T: Scalar>(state: &TrainState<T>, path: &Path) -> Result<()> {
    fs::write(path, encode_state(state)?).map_err(|e| Error::io(path, e))
}

pub fn load_state<T: Scalar>(path: &Path) -> Result<TrainState<T>> {
    decode_state(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn save_masker<T: Scalar>(masker: &MaskNet<T>, path: &Path) -> Result<()> {
    fs::write(path, encode_masker(masker)?).map_err(|e| Error::io(path, e))
}

pub fn load_masker<T: Scalar>(path: &Path) -> Result<MaskNet<T>> {
    decode_masker(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::TrainConfig;

    fn state() -> TrainState<f32> {
        let cfg = TrainConfig {
            base_channels: 2,
            disc_channels: 3,
            seed: 9,
            ..TrainConfig::default()
        };
        let mut s = TrainState::new(Shape::new(8, 8, 1), &cfg).unwrap();
        s.step = 7;
        s.epoch = 2;
        s.batch_in_epoch = 1;
        s.masker_opt.step = 28;
        s.masker_opt.m[0][3] = 0.25;
        s.disc_opt.v[1][0] = 1e-9;
        s
    }

    #[test]
    fn state_round_trip_is_bit_identical() {
        let s = state();
        let bytes = encode_state(&s).unwrap();
        let back = decode_state::<f32>(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(encode_state(&back).unwrap(), bytes);
    }

    #[test]
    fn masker_from_either_kind() {
        let s = state();
        let from_state = decode_masker::<f32>(&encode_state(&s).unwrap()).unwrap();
        let from_bare = decode_masker::<f32>(&encode_masker(&s.masker).unwrap()).unwrap();
        assert_eq!(from_state, s.masker);
        assert_eq!(from_bare, s.masker);
        assert!(matches!(
            decode_state::<f32>(&encode_masker(&s.masker).unwrap()),
            Err(Error::Incompatible(_))
        ));
    }

    #[test]
    fn every_truncation_is_a_length_error() {
        let bytes = encode_state(&state()).unwrap();
        for cut in [0, 3, 4, 7, 11, 20, bytes.len() / 2, bytes.len() - 1] {
            let r = decode_state::<f32>(&bytes[..cut]);
            assert!(matches!(r, Err(Error::Length(_))), "cut at {cut}: {r:?}");
        }
    }

    #[test]
    fn version_and_dtype_mismatch() {
        let mut bytes = encode_state(&state()).unwrap();
        assert!(matches!(decode_state::<f64>(&bytes), Err(Error::Incompatible(_))));
        bytes[4] = 9;
        assert!(matches!(decode_state::<f32>(&bytes), Err(Error::Incompatible(_))));
        bytes[0] = b'X';
        assert!(matches!(decode_state::<f32>(&bytes), Err(Error::Format(_))));
    }
}
