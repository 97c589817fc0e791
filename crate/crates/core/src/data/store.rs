//! Dataset construction and the on-disk dataset directory.
//!
//! A dataset directory holds `manifest.txt` plus, per split (`train`, `val`),
//! `{split}_mixtures.rmxt`, `{split}_x.rmxt`, `{split}_b.rmxt` and
//! `{split}_origins.txt` (tab-separated origin ids of x and b per mixture).

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::data::manifest::{DatasetManifest, Sampling, SourceKind};
use crate::data::toy::{self, Pattern};
use crate::data::{
    load_image_folder, load_mnist, read_blob, synthesize_mixtures, write_blob, GroundTruth,
    Mixture, SourceImage, SourceLabel,
};
use crate::error::{Error, Result};
use crate::image::Shape;
use crate::scalar::Scalar;

/// File names inside an IDX source directory.
pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";

const MANIFEST_FILE: &str = "manifest.txt";
/// Source files skipped as undecodable while building.
pub const SKIPPED_LOG: &str = "skipped.log";
const SPLITS: [&str; 2] = ["train", "val"];

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub manifest: DatasetManifest,
    pub train: Vec<Mixture<T>>,
    pub val: Vec<Mixture<T>>,
    /// Undecodable source files encountered while building.
    pub skipped: Vec<(PathBuf, String)>,
}

impl<T: Scalar> Dataset<T> {
    pub fn shape(&self) -> Shape {
        self.manifest.shape()
    }

    fn split(&self, name: &str) -> &[Mixture<T>] {
        match name {
            "train" => &self.train,
            _ => &self.val,
        }
    }
}

type Pools<T> = (Vec<SourceImage<T>>, Vec<SourceImage<T>>);

fn partition<T>(sources: Vec<SourceImage<T>>) -> Pools<T> {
    sources
        .into_iter()
        .partition(|s| s.label == SourceLabel::SourceX)
}

/// Builds train and validation mixtures exactly as described by `manifest`.
/// Train and validation never share a source image.
pub fn build_dataset<T: Scalar>(manifest: &DatasetManifest) -> Result<Dataset<T>> {
    manifest.validate()?;
    let shape = manifest.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
    let mut skipped = Vec::new();

    let (train_pools, val_pools): (Pools<T>, Pools<T>) = match manifest.source {
        SourceKind::Idx => {
            let dir = manifest.mnist_dir.as_ref().expect("validated");
            let all = load_mnist::<T>(&dir.join(MNIST_TRAIN_IMAGES), &dir.join(MNIST_TRAIN_LABELS))?;
            // 50k/10k of a 60k training file
            let cut = all.len() * 5 / 6;
            let mut all = all;
            let val = all.split_off(cut);
            (partition(all), partition(val))
        }
        SourceKind::Folders => {
            let load = |dir: &PathBuf, label| {
                load_image_folder::<T>(dir, shape, manifest.invert_intensity, label)
            };
            let xs = load(manifest.x_dir.as_ref().expect("validated"), SourceLabel::SourceX)?;
            let bs = load(manifest.b_dir.as_ref().expect("validated"), SourceLabel::SourceB)?;
            skipped.extend(xs.skipped);
            skipped.extend(bs.skipped);
            let (mut xs, mut bs) = (xs.images, bs.images);
            xs.shuffle(&mut rng);
            bs.shuffle(&mut rng);
            let (x_cut, b_cut) = match manifest.sampling {
                Sampling::WithoutReplacement => {
                    let need = manifest.n_train + manifest.n_val;
                    let have = xs.len().min(bs.len());
                    if need > have {
                        return Err(Error::Data(format!(
                            "{need} mixtures without replacement need {need} images per source, smallest source has {have}"
                        )));
                    }
                    (manifest.n_train, manifest.n_train)
                }
                Sampling::WithReplacement => {
                    let frac = |n: usize| {
                        (n * manifest.n_train / (manifest.n_train + manifest.n_val)).clamp(1, n.saturating_sub(1).max(1))
                    };
                    (frac(xs.len()), frac(bs.len()))
                }
            };
            let xv = xs.split_off(x_cut.min(xs.len()));
            let bv = bs.split_off(b_cut.min(bs.len()));
            ((xs, bs), (xv, bv))
        }
        SourceKind::Bars => {
            let side = shape.height;
            if shape.channels != 1 || shape.width != side {
                return Err(Error::Config("bars sources are square and single-channel".into()));
            }
            let mut pools = |split: &str, n: usize| {
                let x = toy::sources(Pattern::HorizontalBars, SourceLabel::SourceX, side, n, split, &mut rng);
                let b = toy::sources(Pattern::VerticalBars, SourceLabel::SourceB, side, n, split, &mut rng);
                (x, b)
            };
            let train = pools("train", manifest.n_train);
            let val = pools("val", manifest.n_val.max(1));
            (train, val)
        }
    };

    let mut train_rng = ChaCha8Rng::seed_from_u64(manifest.seed);
    train_rng.set_stream(1);
    let train = synthesize_mixtures(
        &train_pools.0,
        &train_pools.1,
        manifest.n_train,
        manifest.sampling,
        &mut train_rng,
    )?;
    let val = if manifest.n_val == 0 {
        Vec::new()
    } else {
        let mut val_rng = ChaCha8Rng::seed_from_u64(manifest.seed);
        val_rng.set_stream(2);
        synthesize_mixtures(
            &val_pools.0,
            &val_pools.1,
            manifest.n_val,
            manifest.sampling,
            &mut val_rng,
        )?
    };
    Ok(Dataset {
        manifest: manifest.clone(),
        train,
        val,
        skipped,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Names of every file a saved dataset consists of, in hashing order.
pub fn dataset_files() -> Vec<String> {
    let mut files = vec![MANIFEST_FILE.to_string()];
    for split in SPLITS {
        for suffix in ["mixtures.rmxt", "x.rmxt", "b.rmxt", "origins.txt"] {
            files.push(format!("{split}_{suffix}"));
        }
    }
    files
}

/// Writes `dataset` under `dir` and returns its content hash.
pub fn save_dataset<T: Scalar>(dataset: &Dataset<T>, dir: &Path) -> Result<String> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join(MANIFEST_FILE), dataset.manifest.to_text().as_bytes())?;
    let shape = dataset.shape();
    for split in SPLITS {
        let mixtures = dataset.split(split);
        let mut gt = Vec::with_capacity(mixtures.len());
        for (i, m) in mixtures.iter().enumerate() {
            gt.push(m.ground_truth.as_ref().ok_or_else(|| {
                Error::Data(format!("{split} mixture {i} has no ground truth to store"))
            })?);
        }
        let pixels: Vec<_> = mixtures.iter().map(|m| m.pixels.clone()).collect();
        let xs: Vec<_> = gt.iter().map(|g| g.x.pixels.clone()).collect();
        let bs: Vec<_> = gt.iter().map(|g| g.b.pixels.clone()).collect();
        write_file(&dir.join(format!("{split}_mixtures.rmxt")), &write_blob(shape, &pixels)?)?;
        write_file(&dir.join(format!("{split}_x.rmxt")), &write_blob(shape, &xs)?)?;
        write_file(&dir.join(format!("{split}_b.rmxt")), &write_blob(shape, &bs)?)?;
        let origins: String = gt
            .iter()
            .map(|g| format!("{}\t{}\n", g.x.origin_id, g.b.origin_id))
            .collect();
        write_file(&dir.join(format!("{split}_origins.txt")), origins.as_bytes())?;
    }
    if !dataset.skipped.is_empty() {
        // Not part of the hashed content.
        let log: String = dataset
            .skipped
            .iter()
            .map(|(p, why)| format!("{}\t{why}\n", p.display()))
            .collect();
        write_file(&dir.join(SKIPPED_LOG), log.as_bytes())?;
    }
    dataset_hash(dir)
}

pub fn load_dataset<T: Scalar>(dir: &Path) -> Result<Dataset<T>> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE)).map_err(|e| Error::io(dir.join(MANIFEST_FILE), e))?;
    let manifest = DatasetManifest::parse(&text)?;
    let shape = manifest.shape();
    let mut splits = Vec::with_capacity(2);
    for split in SPLITS {
        let blob = |name: &str| -> Result<Vec<_>> {
            let (s, imgs) = read_blob::<T>(&read_file(&dir.join(format!("{split}_{name}.rmxt")))?)?;
            if s != shape {
                return Err(Error::dims(shape, s));
            }
            Ok(imgs)
        };
        let pixels = blob("mixtures")?;
        let xs = blob("x")?;
        let bs = blob("b")?;
        let origins = fs::read_to_string(dir.join(format!("{split}_origins.txt")))
            .map_err(|e| Error::io(dir.join(format!("{split}_origins.txt")), e))?;
        let origins: Vec<(String, String)> = origins
            .lines()
            .map(|l| {
                let (a, b) = l.split_once('\t').unwrap_or((l, ""));
                (a.to_string(), b.to_string())
            })
            .collect();
        if xs.len() != pixels.len() || bs.len() != pixels.len() || origins.len() != pixels.len() {
            return Err(Error::Length(format!(
                "{split}: {} mixtures, {} x, {} b, {} origin rows",
                pixels.len(),
                xs.len(),
                bs.len(),
                origins.len()
            )));
        }
        let mixtures = pixels
            .into_iter()
            .zip(xs)
            .zip(bs)
            .zip(origins)
            .map(|(((y, x), b), (xo, bo))| Mixture {
                pixels: y,
                ground_truth: Some(GroundTruth {
                    x: SourceImage {
                        pixels: x,
                        label: SourceLabel::SourceX,
                        origin_id: xo,
                    },
                    b: SourceImage {
                        pixels: b,
                        label: SourceLabel::SourceB,
                        origin_id: bo,
                    },
                }),
            })
            .collect();
        splits.push(mixtures);
    }
    let val = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(Dataset {
        manifest,
        train,
        val,
        skipped: Vec::new(),
    })
}

/// SHA-256 over every dataset file (name, length, contents) in fixed order,
/// hex encoded.
pub fn dataset_hash(dir: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    for name in dataset_files() {
        let bytes = read_file(&dir.join(&name))?;
        hasher.update(name.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{write_idx_images, write_idx_labels, Profile};
    use std::collections::HashSet;

    fn toy_manifest(seed: u64) -> DatasetManifest {
        let mut m = DatasetManifest::for_profile(Profile::Custom);
        m.n_train = 40;
        m.n_val = 10;
        m.seed = seed;
        m
    }

    #[test]
    fn same_manifest_same_hash() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let m = toy_manifest(7);
        let ha = save_dataset(&build_dataset::<f32>(&m).unwrap(), a.path()).unwrap();
        let hb = save_dataset(&build_dataset::<f32>(&m).unwrap(), b.path()).unwrap();
        assert_eq!(ha, hb);
        let c = tempfile::tempdir().unwrap();
        let hc = save_dataset(&build_dataset::<f32>(&toy_manifest(8)).unwrap(), c.path()).unwrap();
        assert_ne!(ha, hc);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = build_dataset::<f32>(&toy_manifest(3)).unwrap();
        save_dataset(&d, dir.path()).unwrap();
        let back = load_dataset::<f32>(dir.path()).unwrap();
        assert_eq!(back.train, d.train);
        assert_eq!(back.val, d.val);
        assert_eq!(back.manifest, d.manifest);
    }

    #[test]
    fn idx_split_is_disjoint() {
        let dir = tempfile::tempdir().unwrap();
        let n = 60;
        let imgs: Vec<Vec<u8>> = (0..n).map(|i| vec![(i * 4) as u8; 28 * 28]).collect();
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        fs::write(dir.path().join(MNIST_TRAIN_IMAGES), write_idx_images(28, 28, &imgs)).unwrap();
        fs::write(dir.path().join(MNIST_TRAIN_LABELS), write_idx_labels(&labels)).unwrap();
        let mut m = DatasetManifest::for_profile(Profile::MnistDigits);
        m.mnist_dir = Some(dir.path().to_path_buf());
        m.n_train = 100;
        m.n_val = 30;
        let d = build_dataset::<f32>(&m).unwrap();
        assert_eq!((d.train.len(), d.val.len()), (100, 30));
        let ids = |ms: &[Mixture<f32>]| -> HashSet<String> {
            ms.iter()
                .flat_map(|m| {
                    let g = m.ground_truth.as_ref().unwrap();
                    [g.x.origin_id.clone(), g.b.origin_id.clone()]
                })
                .collect()
        };
        assert!(ids(&d.train).is_disjoint(&ids(&d.val)));
        for mix in d.train.iter().chain(&d.val) {
            let g = mix.ground_truth.as_ref().unwrap();
            assert_eq!(g.x.label, SourceLabel::SourceX);
            assert_eq!(g.b.label, SourceLabel::SourceB);
        }
    }

    #[test]
    fn folders_without_replacement_never_reuse_sources() {
        use image::{Rgb, RgbImage};
        let root = tempfile::tempdir().unwrap();
        for (sub, n) in [("shoes", 12), ("bags", 12)] {
            let d = root.path().join(sub);
            fs::create_dir(&d).unwrap();
            for i in 0..n {
                RgbImage::from_pixel(8, 8, Rgb([i * 20, 0, 255 - i * 20]))
                    .save(d.join(format!("{i:02}.png")))
                    .unwrap();
            }
        }
        let mut m = DatasetManifest::for_profile(Profile::ShoesBags);
        m.x_dir = Some(root.path().join("shoes"));
        m.b_dir = Some(root.path().join("bags"));
        m.n_train = 10;
        m.n_val = 2;
        let d = build_dataset::<f32>(&m).unwrap();
        assert_eq!(d.train.len(), 10);
        let mut used = HashSet::new();
        for mix in d.train.iter().chain(&d.val) {
            let g = mix.ground_truth.as_ref().unwrap();
            assert!(used.insert(format!("x{}", g.x.origin_id)));
            assert!(used.insert(format!("b{}", g.b.origin_id)));
        }
        m.n_val = 3;
        assert!(matches!(build_dataset::<f32>(&m), Err(Error::Data(_))));
    }
}
