use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::decompose::HcdConfig;
use crate::gan::GanConfig;
use crate::printer_id::{AugmentPolicy, PiConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("{key}: cannot parse {value:?}")]
    Value { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

/// Every setting of an end-to-end run.
///
/// Defaults describe a desk-scale run: four printers, networks at 1/8 width
/// and learning rates raised to match the shorter schedules.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub printers: usize,
    pub width_div: usize,
    pub synth_blur: f64,
    pub synth_noise: f64,
    pub synth_slope: f64,
    pub real_blur: f64,
    pub real_noise: f64,
    pub real_slope: f64,
    pub gan_samples: usize,
    pub gan_iters: usize,
    pub gan_batch: usize,
    pub gan_lambda: f64,
    pub gan_refiner_lr: f64,
    pub gan_disc_lr: f64,
    pub gan_buffer: usize,
    pub skip_refinement: bool,
    pub hcd_samples: usize,
    pub hcd_eval_samples: usize,
    pub hcd_lr: f64,
    pub hcd_batch: usize,
    pub hcd_epochs: usize,
    pub hcd_patience: usize,
    pub pages_per_printer: usize,
    pub train_blocks_per_page: usize,
    pub pi_lr: f64,
    pub pi_batch: usize,
    pub pi_epochs: usize,
    pub pi_patience: usize,
    pub phase2_lr: f64,
    pub phase2_epochs: usize,
    pub aug_scales: Vec<f64>,
    pub aug_angles: Vec<f64>,
    pub cv_runs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: PathBuf::from("runs"),
            printers: 4,
            width_div: 8,
            synth_blur: 0.5,
            synth_noise: 0.01,
            synth_slope: 0.05,
            real_blur: 1.0,
            real_noise: 0.01,
            real_slope: 0.05,
            gan_samples: 512,
            gan_iters: 1000,
            gan_batch: 8,
            gan_lambda: 10.0,
            gan_refiner_lr: 1e-3,
            gan_disc_lr: 1e-4,
            gan_buffer: 160,
            skip_refinement: false,
            hcd_samples: 1024,
            hcd_eval_samples: 256,
            hcd_lr: 3e-3,
            hcd_batch: 32,
            hcd_epochs: 20,
            hcd_patience: 3,
            pages_per_printer: 64,
            train_blocks_per_page: 32,
            pi_lr: 1e-3,
            pi_batch: 32,
            pi_epochs: 10,
            pi_patience: 2,
            phase2_lr: 2e-4,
            phase2_epochs: 10,
            aug_scales: vec![0.8, 1.0, 1.2],
            aug_angles: vec![-10.0, 0.0, 10.0],
            cv_runs: 1,
        }
    }
}

/// (key, description) for every accepted key, in file order.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "global seed; every random stream derives from it"),
    ("out_dir", "directory that receives run-<timestamp> folders"),
    ("printers", "number of virtual printers (built-in presets 0..n, n <= 8)"),
    ("width_div", "divisor applied to hidden feature-map and FC widths"),
    ("synth_blur", "camera blur sigma (px) of synthetic renders"),
    ("synth_noise", "camera noise sigma of synthetic renders"),
    ("synth_slope", "illumination slope of synthetic renders"),
    ("real_blur", "camera blur sigma (px) of the stand-in photographs"),
    ("real_noise", "camera noise sigma of the stand-in photographs"),
    ("real_slope", "illumination slope of the stand-in photographs"),
    ("gan_samples", "synthetic and real 64x64 samples for refiner training (each)"),
    ("gan_iters", "refiner training iterations T"),
    ("gan_batch", "refiner mini-batch size b (even)"),
    ("gan_lambda", "self-regularization weight"),
    ("gan_refiner_lr", "refiner Adam learning rate"),
    ("gan_disc_lr", "discriminator Adam learning rate"),
    ("gan_buffer", "history buffer capacity"),
    ("skip_refinement", "train the decomposition network on unrefined samples"),
    ("hcd_samples", "synthetic samples for decomposition training"),
    ("hcd_eval_samples", "held-out photographed samples with known separations for the decomposition report"),
    ("hcd_lr", "decomposition Adam learning rate"),
    ("hcd_batch", "decomposition mini-batch size"),
    ("hcd_epochs", "decomposition epoch limit"),
    ("hcd_patience", "decomposition early-stopping patience (epochs)"),
    ("pages_per_printer", "512x512 pages photographed per printer"),
    ("train_blocks_per_page", "training blocks drawn from each training page (<= 64)"),
    ("pi_lr", "phase-1 Adam learning rate"),
    ("pi_batch", "identification mini-batch size"),
    ("pi_epochs", "phase-1 epoch limit"),
    ("pi_patience", "early-stopping patience (epochs) of both phases"),
    ("phase2_lr", "phase-2 Adam learning rate"),
    ("phase2_epochs", "phase-2 epoch limit"),
    ("aug_scales", "comma-separated phase-2 scale factors"),
    ("aug_angles", "comma-separated phase-2 rotations (degrees)"),
    ("cv_runs", "cross-validation configurations to train and evaluate (1..4)"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
    })
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value.split(',').map(|v| parse(key, v)).collect()
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "printers" => self.printers = parse(key, v)?,
            "width_div" => self.width_div = parse(key, v)?,
            "synth_blur" => self.synth_blur = parse(key, v)?,
            "synth_noise" => self.synth_noise = parse(key, v)?,
            "synth_slope" => self.synth_slope = parse(key, v)?,
            "real_blur" => self.real_blur = parse(key, v)?,
            "real_noise" => self.real_noise = parse(key, v)?,
            "real_slope" => self.real_slope = parse(key, v)?,
            "gan_samples" => self.gan_samples = parse(key, v)?,
            "gan_iters" => self.gan_iters = parse(key, v)?,
            "gan_batch" => self.gan_batch = parse(key, v)?,
            "gan_lambda" => self.gan_lambda = parse(key, v)?,
            "gan_refiner_lr" => self.gan_refiner_lr = parse(key, v)?,
            "gan_disc_lr" => self.gan_disc_lr = parse(key, v)?,
            "gan_buffer" => self.gan_buffer = parse(key, v)?,
            "skip_refinement" => self.skip_refinement = parse(key, v)?,
            "hcd_samples" => self.hcd_samples = parse(key, v)?,
            "hcd_eval_samples" => self.hcd_eval_samples = parse(key, v)?,
            "hcd_lr" => self.hcd_lr = parse(key, v)?,
            "hcd_batch" => self.hcd_batch = parse(key, v)?,
            "hcd_epochs" => self.hcd_epochs = parse(key, v)?,
            "hcd_patience" => self.hcd_patience = parse(key, v)?,
            "pages_per_printer" => self.pages_per_printer = parse(key, v)?,
            "train_blocks_per_page" => self.train_blocks_per_page = parse(key, v)?,
            "pi_lr" => self.pi_lr = parse(key, v)?,
            "pi_batch" => self.pi_batch = parse(key, v)?,
            "pi_epochs" => self.pi_epochs = parse(key, v)?,
            "pi_patience" => self.pi_patience = parse(key, v)?,
            "phase2_lr" => self.phase2_lr = parse(key, v)?,
            "phase2_epochs" => self.phase2_epochs = parse(key, v)?,
            "aug_scales" => self.aug_scales = parse_list(key, v)?,
            "aug_angles" => self.aug_angles = parse_list(key, v)?,
            "cv_runs" => self.cv_runs = parse(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Text form of one key.
    pub fn get(&self, key: &str) -> Result<String, ConfigError> {
        Ok(match key {
            "seed" => self.seed.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            "printers" => self.printers.to_string(),
            "width_div" => self.width_div.to_string(),
            "synth_blur" => self.synth_blur.to_string(),
            "synth_noise" => self.synth_noise.to_string(),
            "synth_slope" => self.synth_slope.to_string(),
            "real_blur" => self.real_blur.to_string(),
            "real_noise" => self.real_noise.to_string(),
            "real_slope" => self.real_slope.to_string(),
            "gan_samples" => self.gan_samples.to_string(),
            "gan_iters" => self.gan_iters.to_string(),
            "gan_batch" => self.gan_batch.to_string(),
            "gan_lambda" => self.gan_lambda.to_string(),
            "gan_refiner_lr" => self.gan_refiner_lr.to_string(),
            "gan_disc_lr" => self.gan_disc_lr.to_string(),
            "gan_buffer" => self.gan_buffer.to_string(),
            "skip_refinement" => self.skip_refinement.to_string(),
            "hcd_samples" => self.hcd_samples.to_string(),
            "hcd_eval_samples" => self.hcd_eval_samples.to_string(),
            "hcd_lr" => self.hcd_lr.to_string(),
            "hcd_batch" => self.hcd_batch.to_string(),
            "hcd_epochs" => self.hcd_epochs.to_string(),
            "hcd_patience" => self.hcd_patience.to_string(),
            "pages_per_printer" => self.pages_per_printer.to_string(),
            "train_blocks_per_page" => self.train_blocks_per_page.to_string(),
            "pi_lr" => self.pi_lr.to_string(),
            "pi_batch" => self.pi_batch.to_string(),
            "pi_epochs" => self.pi_epochs.to_string(),
            "pi_patience" => self.pi_patience.to_string(),
            "phase2_lr" => self.phase2_lr.to_string(),
            "phase2_epochs" => self.phase2_epochs.to_string(),
            "aug_scales" => list(&self.aug_scales),
            "aug_angles" => list(&self.aug_angles),
            "cv_runs" => self.cv_runs.to_string(),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        })
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Every key with its value and description; parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, doc) in KEYS {
            let _ = writeln!(s, "# {doc}\n{k} = {}", self.get(k).expect("listed key"));
        }
        s
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(2..=8).contains(&self.printers) {
            return bad("printers must be between 2 and 8");
        }
        if !(1..=4).contains(&self.cv_runs) {
            return bad("cv_runs must be between 1 and 4");
        }
        if self.pages_per_printer < 4 {
            return bad("pages_per_printer must be at least 4");
        }
        if !(1..=64).contains(&self.train_blocks_per_page) {
            return bad("train_blocks_per_page must be between 1 and 64");
        }
        if self.gan_samples == 0 || self.hcd_samples == 0 || self.hcd_eval_samples == 0 {
            return bad("sample counts must be positive");
        }
        self.gan_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.hcd_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.pi_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.policy().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn gan_config(&self) -> GanConfig {
        GanConfig {
            lambda: self.gan_lambda,
            batch_size: self.gan_batch,
            max_iters: self.gan_iters,
            refiner_lr: self.gan_refiner_lr,
            disc_lr: self.gan_disc_lr,
            buffer_capacity: self.gan_buffer,
            width_div: self.width_div,
        }
    }

    pub fn hcd_config(&self) -> HcdConfig {
        HcdConfig {
            lr: self.hcd_lr,
            batch_size: self.hcd_batch,
            max_epochs: self.hcd_epochs,
            patience: self.hcd_patience,
            width_div: self.width_div,
        }
    }

    pub fn pi_config(&self) -> PiConfig {
        PiConfig {
            lr: self.pi_lr,
            batch_size: self.pi_batch,
            max_epochs: self.pi_epochs,
            patience: self.pi_patience,
            n_printers: self.printers,
            width_div: self.width_div,
        }
    }

    pub fn phase2_config(&self) -> PiConfig {
        PiConfig {
            lr: self.phase2_lr,
            max_epochs: self.phase2_epochs,
            ..self.pi_config()
        }
    }

    pub fn policy(&self) -> AugmentPolicy {
        AugmentPolicy {
            scales: self.aug_scales.clone(),
            angles: self.aug_angles.clone(),
        }
    }
}
