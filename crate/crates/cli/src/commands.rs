use std::fs::{self, OpenOptions};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::{info, warn};
use remix_core::checkpoint::{load_masker, load_state, save_masker, save_state};
use remix_core::data::{
    build_dataset, load_dataset, load_image_file, parse_kv, sample_indices, save_dataset, DatasetManifest, Profile,
};
use remix_core::metrics::evaluate;
use remix_core::separator::Separator;
use remix_core::trainer::{fit, Control, MetricsLog, TrainConfig, TrainState};
use remix_core::{Dataset32, Error, Image, MaskNet32, Result, Shape};

use crate::grid;
use crate::{EvalArgs, GridArgs, SeparateArgs, SynthArgs, TrainArgs};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn split_override(raw: &str) -> Result<(&str, &str)> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| Error::Config(format!("override {raw:?} is not key=value")))
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let mut pairs = match &args.config {
        Some(path) => parse_kv(&read_text(path)?)?,
        None => Vec::new(),
    };
    for raw in &args.overrides {
        let (k, v) = split_override(raw)?;
        pairs.push((k.into(), v.into()));
    }
    if let Some(p) = &args.profile {
        pairs.push(("profile".into(), p.clone()));
    }
    if let Some(s) = args.seed {
        pairs.push(("seed".into(), s.to_string()));
    }
    // The profile picks the defaults every other key overrides.
    let profile = pairs
        .iter()
        .rev()
        .find(|(k, _)| k == "profile")
        .map(|(_, v)| v.parse())
        .transpose()?
        .unwrap_or(Profile::Custom);
    let mut manifest = DatasetManifest::for_profile(profile);
    for (k, v) in &pairs {
        manifest.set(k, v)?;
    }
    info!(
        "building {} dataset: {} train + {} val mixtures",
        profile.as_str(),
        manifest.n_train,
        manifest.n_val
    );
    let dataset: Dataset32 = build_dataset(&manifest)?;
    if !dataset.skipped.is_empty() {
        warn!("{} source files could not be decoded", dataset.skipped.len());
    }
    let hash = save_dataset(&dataset, &args.out)?;
    println!("{hash}");
    Ok(())
}

fn train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(path) => TrainConfig::parse(&read_text(path)?)?,
        None => TrainConfig::default(),
    };
    for raw in &args.overrides {
        let (k, v) = split_override(raw)?;
        cfg.set(k, v)?;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.beta {
        cfg.beta = v;
    }
    if let Some(v) = args.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.mask_steps {
        cfg.mask_steps = v;
    }
    if let Some(v) = &args.mode {
        cfg.mode = v.parse()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn check_shape(want: Shape, got: Shape) -> Result<()> {
    if want != got {
        return Err(Error::Dimension {
            expected: want.to_string(),
            got: got.to_string(),
        });
    }
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let cfg = train_config(&args)?;
    let dataset: Dataset32 = load_dataset(&args.data)?;
    let shape = dataset.shape();
    let mut state = match &args.checkpoint {
        Some(path) => {
            let state: TrainState<f32> = load_state(path)?;
            check_shape(state.masker.arch().shape, shape)?;
            info!("resuming from {} at step {}", path.display(), state.step);
            state
        }
        None => TrainState::new(shape, &cfg)?,
    };
    create_dir(&args.out)?;
    write_text(&args.out.join("config.txt"), &cfg.to_text())?;
    let log_path = args.out.join("metrics.jsonl");
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| io_err(&log_path, e))?;
    let mut log = MetricsLog::new(BufWriter::new(file));
    let state_path = args.out.join("state.rmxc");
    let pairs_per_epoch = dataset.train.len() / 2;
    let batches_per_epoch = pairs_per_epoch.div_ceil(cfg.batch_size) as u64;

    let result = fit(&mut state, &dataset.train, &cfg, |s, r| {
        log.record(r).map_err(|e| io_err(&log_path, e))?;
        let epoch_done = s.batch_in_epoch == batches_per_epoch;
        if epoch_done || (args.save_every > 0 && s.step % args.save_every == 0) {
            save_state(s, &state_path)?;
        }
        if epoch_done || s.step % 100 == 0 {
            info!(
                "epoch {} step {}: l_c {:.4} l_m {:.4} l_e {:.4} l_d {:.4} mean_mask {:.3}",
                s.epoch, r.step, r.l_c, r.l_m, r.l_e, r.l_d, r.mean_mask
            );
        }
        Ok(Control::Continue)
    });
    log.into_inner()
        .into_inner()
        .map_err(|e| io_err(&log_path, e.into_error()))?;
    // On divergence `state` is the last good state.
    save_state(&state, &state_path)?;
    result?;
    save_masker(&state.masker, &args.out.join("masker.rmxc"))?;
    info!("finished after {} steps; wrote {}", state.step, args.out.display());
    Ok(())
}

fn save_png(img: &Image<f32>, path: &Path) -> Result<()> {
    grid::to_dynamic(img)
        .save(path)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
}

pub fn separate(args: SeparateArgs) -> Result<()> {
    let masker: MaskNet32 = load_masker(&args.checkpoint)?;
    let shape = masker.input_shape();
    create_dir(&args.out)?;
    for input in &args.inputs {
        let y = load_image_file::<f32>(input, shape, args.invert)?;
        let sep = masker.separate(&y)?;
        let stem = input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".into());
        for (suffix, img) in [("x", &sep.x_hat), ("b", &sep.b_hat), ("mask", &sep.mask)] {
            let path: PathBuf = args.out.join(format!("{stem}_{suffix}.png"));
            save_png(img, &path)?;
        }
        println!("{}", input.display());
    }
    Ok(())
}

fn model_and_data(checkpoint: &Path, data: &Path) -> Result<(MaskNet32, Dataset32)> {
    let masker: MaskNet32 = load_masker(checkpoint)?;
    let dataset: Dataset32 = load_dataset(data)?;
    check_shape(masker.input_shape(), dataset.shape())?;
    Ok((masker, dataset))
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let (masker, dataset) = model_and_data(&args.checkpoint, &args.data)?;
    let report = evaluate(&masker, &dataset.val)?;
    create_dir(&args.out)?;
    write_text(&args.out.join("report.txt"), &report.to_kv())?;
    write_text(&args.out.join("report.csv"), &report.to_csv())?;
    print!("{}", report.to_kv());
    Ok(())
}

pub fn grid(args: GridArgs) -> Result<()> {
    let (masker, dataset) = model_and_data(&args.checkpoint, &args.data)?;
    if args.rows == 0 {
        return Err(Error::Config("rows must be at least 1".into()));
    }
    let picked: Vec<_> = sample_indices(dataset.val.len(), args.rows, args.seed)
        .into_iter()
        .map(|i| &dataset.val[i])
        .collect();
    let img = grid::render(&masker, &picked)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    img.save(&args.out)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", args.out.display())))?;
    println!("{}", args.out.display());
    Ok(())
}
