use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    MnistDigits,
    ShoesBags,
    Custom,
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Profile::MnistDigits => "mnist",
            Profile::ShoesBags => "shoes_bags",
            Profile::Custom => "custom",
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" | "mnist_digits" => Ok(Profile::MnistDigits),
            "shoes_bags" | "shoes-bags" => Ok(Profile::ShoesBags),
            "custom" => Ok(Profile::Custom),
            _ => Err(Error::Config(format!("unknown profile {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    WithReplacement,
    WithoutReplacement,
}

impl Sampling {
    fn as_str(self) -> &'static str {
        match self {
            Sampling::WithReplacement => "with_replacement",
            Sampling::WithoutReplacement => "without_replacement",
        }
    }
}

impl FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "with_replacement" => Ok(Sampling::WithReplacement),
            "without_replacement" => Ok(Sampling::WithoutReplacement),
            _ => Err(Error::Config(format!("unknown sampling policy {s:?}"))),
        }
    }
}

/// Where the clean sources come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// IDX image/label pair (`mnist_dir`).
    Idx,
    /// Two image folders (`x_dir`, `b_dir`).
    Folders,
    /// Synthetic horizontal vs vertical bars.
    Bars,
}

impl SourceKind {
    fn as_str(self) -> &'static str {
        match self {
            SourceKind::Idx => "idx",
            SourceKind::Folders => "folders",
            SourceKind::Bars => "bars",
        }
    }
}

impl FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "idx" => Ok(SourceKind::Idx),
            "folders" => Ok(SourceKind::Folders),
            "bars" => Ok(SourceKind::Bars),
            _ => Err(Error::Config(format!("unknown source kind {s:?}"))),
        }
    }
}

/// Everything needed to regenerate a mixture dataset byte for byte.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub profile: Profile,
    pub n_train: usize,
    pub n_val: usize,
    pub seed: u64,
    pub mixing_weight: f64,
    pub invert_intensity: bool,
    pub sampling: Sampling,
    pub source: SourceKind,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub mnist_dir: Option<PathBuf>,
    pub x_dir: Option<PathBuf>,
    pub b_dir: Option<PathBuf>,
}

impl DatasetManifest {
    pub const KEYS: &'static [&'static str] = &[
        "profile",
        "n_train",
        "n_val",
        "seed",
        "mixing_weight",
        "invert_intensity",
        "sampling",
        "source",
        "height",
        "width",
        "channels",
        "mnist_dir",
        "x_dir",
        "b_dir",
    ];

    pub fn for_profile(profile: Profile) -> Self {
        let base = DatasetManifest {
            profile,
            n_train: 25_000,
            n_val: 5_000,
            seed: 0,
            mixing_weight: super::MIX_WEIGHT,
            invert_intensity: false,
            sampling: Sampling::WithReplacement,
            source: SourceKind::Idx,
            height: 32,
            width: 32,
            channels: 1,
            mnist_dir: None,
            x_dir: None,
            b_dir: None,
        };
        match profile {
            Profile::MnistDigits => base,
            Profile::ShoesBags => DatasetManifest {
                n_train: 10_000,
                n_val: 5_000,
                invert_intensity: true,
                sampling: Sampling::WithoutReplacement,
                source: SourceKind::Folders,
                height: 64,
                width: 64,
                channels: 3,
                ..base
            },
            Profile::Custom => DatasetManifest {
                n_train: 500,
                n_val: 200,
                source: SourceKind::Bars,
                height: 8,
                width: 8,
                ..base
            },
        }
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.height, self.width, self.channels)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let parse_usize = |v: &str| {
            v.parse::<usize>()
                .map_err(|e| Error::Config(format!("{key} = {v:?}: {e}")))
        };
        let path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "profile" => self.profile = value.parse()?,
            "n_train" => self.n_train = parse_usize(value)?,
            "n_val" => self.n_val = parse_usize(value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|e| Error::Config(format!("seed = {value:?}: {e}")))?
            }
            "mixing_weight" => {
                self.mixing_weight = value
                    .parse()
                    .map_err(|e| Error::Config(format!("mixing_weight = {value:?}: {e}")))?
            }
            "invert_intensity" => {
                self.invert_intensity = value
                    .parse()
                    .map_err(|e| Error::Config(format!("invert_intensity = {value:?}: {e}")))?
            }
            "sampling" => self.sampling = value.parse()?,
            "source" => self.source = value.parse()?,
            "height" => self.height = parse_usize(value)?,
            "width" => self.width = parse_usize(value)?,
            "channels" => self.channels = parse_usize(value)?,
            "mnist_dir" => self.mnist_dir = path(value),
            "x_dir" => self.x_dir = path(value),
            "b_dir" => self.b_dir = path(value),
            _ => return Err(Error::Config(format!("unknown manifest key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.mixing_weight != super::MIX_WEIGHT {
            return Err(Error::Config(format!(
                "only equal-weight mixing ({}) is supported, got {}",
                super::MIX_WEIGHT,
                self.mixing_weight
            )));
        }
        if self.n_train == 0 {
            return Err(Error::Config("n_train must be at least 1".into()));
        }
        let fixed = match self.profile {
            Profile::MnistDigits => Some(Shape::new(32, 32, 1)),
            Profile::ShoesBags => Some(Shape::new(64, 64, 3)),
            Profile::Custom => None,
        };
        if let Some(shape) = fixed {
            if shape != self.shape() {
                return Err(Error::Config(format!(
                    "profile {} requires {shape}, manifest says {}",
                    self.profile.as_str(),
                    self.shape()
                )));
            }
        }
        if self.shape().is_empty() {
            return Err(Error::Config("image shape has a zero extent".into()));
        }
        match self.source {
            SourceKind::Idx if self.mnist_dir.is_none() => {
                Err(Error::Config("source = idx needs mnist_dir".into()))
            }
            SourceKind::Idx if self.shape() != Shape::new(32, 32, 1) => {
                Err(Error::Config("idx sources are 32x32x1 after padding".into()))
            }
            SourceKind::Folders if self.x_dir.is_none() || self.b_dir.is_none() => {
                Err(Error::Config("source = folders needs x_dir and b_dir".into()))
            }
            _ => Ok(()),
        }
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let pairs = parse_kv(text)?;
        let profile = pairs
            .iter()
            .find(|(k, _)| k == "profile")
            .map(|(_, v)| v.parse())
            .transpose()?
            .unwrap_or(Profile::Custom);
        let mut m = Self::for_profile(profile);
        for (k, v) in &pairs {
            m.set(k, v)?;
        }
        Ok(m)
    }

    /// Canonical text form; keys always in [`Self::KEYS`] order.
    pub fn to_text(&self) -> String {
        let opt = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let mut s = String::new();
        let _ = writeln!(s, "profile = {}", self.profile.as_str());
        let _ = writeln!(s, "n_train = {}", self.n_train);
        let _ = writeln!(s, "n_val = {}", self.n_val);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "mixing_weight = {}", self.mixing_weight);
        let _ = writeln!(s, "invert_intensity = {}", self.invert_intensity);
        let _ = writeln!(s, "sampling = {}", self.sampling.as_str());
        let _ = writeln!(s, "source = {}", self.source.as_str());
        let _ = writeln!(s, "height = {}", self.height);
        let _ = writeln!(s, "width = {}", self.width);
        let _ = writeln!(s, "channels = {}", self.channels);
        let _ = writeln!(s, "mnist_dir = {}", opt(&self.mnist_dir));
        let _ = writeln!(s, "x_dir = {}", opt(&self.x_dir));
        let _ = writeln!(s, "b_dir = {}", opt(&self.b_dir));
        s
    }
}

/// Splits flat `key = value` text into ordered pairs.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`, got {raw:?}", lineno + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_defaults() {
        let m = DatasetManifest::for_profile(Profile::MnistDigits);
        assert_eq!((m.n_train, m.n_val), (25_000, 5_000));
        assert_eq!(m.shape(), Shape::new(32, 32, 1));
        let s = DatasetManifest::for_profile(Profile::ShoesBags);
        assert_eq!((s.n_train, s.n_val), (10_000, 5_000));
        assert_eq!(s.shape(), Shape::new(64, 64, 3));
        assert!(s.invert_intensity);
        assert_eq!(s.sampling, Sampling::WithoutReplacement);
    }

    #[test]
    fn text_round_trip() {
        let mut m = DatasetManifest::for_profile(Profile::ShoesBags);
        m.seed = 7;
        m.x_dir = Some("/data/shoes".into());
        m.b_dir = Some("/data/bags".into());
        let back = DatasetManifest::parse(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), m.to_text());
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = DatasetManifest::parse("profile = custom\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn unequal_weights_are_rejected() {
        let mut m = DatasetManifest::for_profile(Profile::Custom);
        m.mixing_weight = 0.3;
        assert!(m.validate().is_err());
    }

    #[test]
    fn comments_and_blank_lines() {
        let m = DatasetManifest::parse("# toy\n\nprofile = custom # inline\nn_train = 12\n").unwrap();
        assert_eq!(m.n_train, 12);
    }
}
