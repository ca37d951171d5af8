//! Printer identification from 64×64 blocks.
//!
//! The classifier's first seven convolutions are initialized from a trained
//! decomposition network. Training runs in two phases: untransformed blocks
//! first, then blocks with random scale and rotation. An image is
//! identified by averaging the class probabilities of its blocks.

mod augment;

use std::fmt;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::nn::{
    adam_step, backward, forward_range, infer, update_running_stats, xavier_init, AdamState, Dims,
    Mode, NetworkParams, NetworkSpec, NnError, ParamKey, Tensor,
};
use crate::seeds;

pub use augment::{augment_block, warp, AugmentPolicy, BLOCK, REGION};

#[derive(Debug, Error)]
pub enum PiError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("cannot transfer layer {src} to layer {dst}: {reason}")]
    Transfer { src: usize, dst: usize, reason: String },
    #[error("scale {scale} / rotation {theta}° outside [0.5, 2] / [-45°, 45°]")]
    Transform { scale: f64, theta: f64 },
    #[error("{0} is smaller than one 64×64 block")]
    TooSmall(Dims),
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("{regions} regions but {labels} labels")]
    LabelCount { regions: usize, labels: usize },
    #[error("label {label} outside 0..{n}")]
    Label { label: usize, n: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite loss in epoch {0}")]
    NonFinite(usize),
}

/// (source layer, destination layer) pairs, 0-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransferMap {
    pub pairs: Vec<(usize, usize)>,
}

impl Default for TransferMap {
    /// The seven shared 64-map convolutions.
    fn default() -> Self {
        Self {
            pairs: (0..7).map(|i| (i, i)).collect(),
        }
    }
}

/// Xavier-initializes `pi_spec` from `seed`, then overwrites the mapped
/// layers with every tensor (weights, biases, batch-norm state) of the
/// corresponding decomposition layers.
pub fn transfer_init(
    hcd_spec: &NetworkSpec,
    hcd: &NetworkParams,
    pi_spec: &NetworkSpec,
    map: &TransferMap,
    seed: u64,
) -> Result<NetworkParams, PiError> {
    let mut pi = xavier_init(pi_spec, seed)?;
    for &(src, dst) in &map.pairs {
        let err = |reason: String| PiError::Transfer { src, dst, reason };
        let (Some(ls), Some(ld)) = (hcd_spec.layers.get(src), pi_spec.layers.get(dst)) else {
            return Err(err("layer index out of range".into()));
        };
        if ls.kind != ld.kind || ls.batch_norm != ld.batch_norm {
            return Err(err(format!("layer kinds differ ({ls} vs {ld})")));
        }
        let tensors: Vec<_> = hcd.entries.layer(src).map(|(k, t)| (k.kind, t.clone())).collect();
        if tensors.is_empty() {
            return Err(err("source layer has no parameters".into()));
        }
        for (kind, t) in tensors {
            let key = ParamKey::new(dst, kind);
            match pi.entries.get_mut(key) {
                Some(slot) if slot.dims() == t.dims() => *slot = t,
                Some(slot) => {
                    return Err(err(format!("{kind:?} dims {} vs {}", t.dims(), slot.dims())));
                }
                None => return Err(err(format!("destination has no {kind:?}"))),
            }
        }
    }
    Ok(pi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PiConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation-accuracy improvement before stopping.
    pub patience: usize,
    pub n_printers: usize,
    pub width_div: usize,
}

impl Default for PiConfig {
    fn default() -> Self {
        Self {
            lr: 2e-5,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            n_printers: 8,
            width_div: 1,
        }
    }
}

impl PiConfig {
    pub fn validate(&self) -> Result<(), PiError> {
        if !(self.lr > 0.0) {
            return Err(PiError::Config("lr must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.width_div == 0 {
            return Err(PiError::Config(
                "batch_size, max_epochs and width_div must be positive".into(),
            ));
        }
        if self.n_printers < 2 {
            return Err(PiError::Config("need at least two printers".into()));
        }
        Ok(())
    }

    pub fn spec(&self) -> NetworkSpec {
        NetworkSpec::pi(self.n_printers, self.width_div)
    }
}

/// Labelled 96×96 source regions; the training block is cut from the center.
#[derive(Clone, Debug)]
pub struct RegionSet {
    /// (N, 3, 96, 96).
    pub regions: Tensor,
    pub labels: Vec<usize>,
}

impl RegionSet {
    pub fn new(regions: Tensor, labels: Vec<usize>) -> Result<Self, PiError> {
        if regions.batch() != labels.len() {
            return Err(PiError::LabelCount {
                regions: regions.batch(),
                labels: labels.len(),
            });
        }
        Ok(Self { regions, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn check(&self, n: usize, name: &'static str) -> Result<(), PiError> {
        if self.is_empty() {
            return Err(PiError::EmptySet(name));
        }
        if let Some(&label) = self.labels.iter().find(|&&l| l >= n) {
            return Err(PiError::Label { label, n });
        }
        Ok(())
    }

    /// Blocks `idx` with one transform each.
    fn blocks(&self, idx: &[usize], transforms: &[(f64, f64)]) -> Result<Tensor, PiError> {
        let items = idx
            .iter()
            .zip(transforms)
            .map(|(&i, &(s, a))| augment_block(&self.regions.item(i), s, a))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Tensor::stack(&items)?)
    }
}

#[derive(Clone, Debug)]
pub struct TrainedPi {
    pub params: NetworkParams,
    pub train_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// 1-based epoch of the returned parameters (earliest maximum).
    pub best_epoch: usize,
    /// Last epoch that ran.
    pub stop_epoch: usize,
}

/// Gradient of the summed cross-entropy with respect to the logits,
/// divided by the batch size.
fn ce_grad(logits: &Tensor, labels: &[usize]) -> (f64, Tensor) {
    let n = labels.len();
    let mut g = Tensor::zeros(logits.dims());
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let z = logits.sample(i);
        loss -= crate::nn::log_softmax_at(z, y);
        let p = crate::nn::softmax(z);
        for (k, (gk, pk)) in g.sample_mut(i).iter_mut().zip(p).enumerate() {
            *gk = (pk - if k == y { 1.0 } else { 0.0 }) / n as f32;
        }
    }
    (loss / n as f64, g)
}

pub(crate) fn argmax(v: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in v.into_iter().enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

fn accuracy(spec: &NetworkSpec, params: &NetworkParams, blocks: &Tensor, labels: &[usize]) -> Result<f64, PiError> {
    let probs = classify_batch(spec, params, blocks)?;
    let hits = labels
        .iter()
        .enumerate()
        .filter(|(i, &y)| argmax(probs.sample(*i).iter().map(|&p| p as f64)) == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Shared loop of both training phases. Validation blocks use one fixed
/// transform draw so that accuracies are comparable between epochs.
fn train_phase(
    config: &PiConfig,
    train: &RegionSet,
    val: &RegionSet,
    init: &NetworkParams,
    policy: &AugmentPolicy,
    seed: u64,
) -> Result<TrainedPi, PiError> {
    config.validate()?;
    policy.validate()?;
    train.check(config.n_printers, "training")?;
    val.check(config.n_printers, "validation")?;
    let spec = config.spec();
    init.validate(&spec)?;
    let mut params = init.clone();
    let mut adam = AdamState::new(&params);
    let mut rng = seeds::rng(seeds::derive(seed, 31));
    let mut val_rng = seeds::rng(seeds::derive(seed, 32));
    let val_idx: Vec<usize> = (0..val.len()).collect();
    let val_tf: Vec<_> = val_idx.iter().map(|_| policy.sample(&mut val_rng)).collect();
    let val_blocks = val.blocks(&val_idx, &val_tf)?;
    let logits_end = spec.logits_end();

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = (f64::NEG_INFINITY, 0, params.clone());
    let (mut losses, mut accs) = (Vec::new(), Vec::new());
    let mut stop_epoch = 0;
    for epoch in 1..=config.max_epochs {
        stop_epoch = epoch;
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let tf: Vec<_> = chunk.iter().map(|_| policy.sample(&mut rng)).collect();
            let x = train.blocks(chunk, &tf)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let (logits, cache) = forward_range(&spec, &params, &x, Mode::Train, 0..logits_end)?;
            let (loss, g) = ce_grad(&logits, &labels);
            let grads = backward(&spec, &params, &cache, &g)?;
            adam_step(&mut params, &grads.params, &mut adam, config.lr)?;
            update_running_stats(&mut params, &cache);
            sum += loss * chunk.len() as f64;
        }
        let loss = sum / train.len() as f64;
        if !loss.is_finite() {
            return Err(PiError::NonFinite(epoch));
        }
        let acc = accuracy(&spec, &params, &val_blocks, &val.labels)?;
        log::info!("pi epoch {epoch}: loss {loss:.4} val acc {acc:.4}");
        losses.push(loss);
        accs.push(acc);
        if acc > best.0 {
            best = (acc, epoch, params.clone());
        } else if epoch - best.1 >= config.patience {
            break;
        }
    }
    Ok(TrainedPi {
        params: best.2,
        train_loss: losses,
        val_accuracy: accs,
        best_epoch: best.1,
        stop_epoch,
    })
}

/// Trains on untransformed blocks.
pub fn train_phase1(
    config: &PiConfig,
    train: &RegionSet,
    val: &RegionSet,
    init: &NetworkParams,
    seed: u64,
) -> Result<TrainedPi, PiError> {
    train_phase(config, train, val, init, &AugmentPolicy::identity(), seed)
}

/// Fine-tunes with a random (scale, rotation) per block and epoch; the
/// validation blocks are transformed with the same policy.
pub fn train_phase2(
    config: &PiConfig,
    train: &RegionSet,
    val: &RegionSet,
    phase1: &NetworkParams,
    policy: &AugmentPolicy,
    seed: u64,
) -> Result<TrainedPi, PiError> {
    train_phase(config, train, val, phase1, policy, seeds::derive(seed, 33))
}

/// Class probabilities of every block in an (N, 3, 64, 64) batch.
pub fn classify_batch(spec: &NetworkSpec, params: &NetworkParams, blocks: &Tensor) -> Result<Tensor, PiError> {
    const CHUNK: usize = 64;
    let n = blocks.batch();
    if n == 0 {
        return Err(PiError::EmptySet("block"));
    }
    let mut parts = Vec::new();
    for start in (0..n).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
        parts.push(infer(spec, params, &blocks.gather(&idx))?);
    }
    Ok(Tensor::stack(&parts)?)
}

pub fn classify_block(spec: &NetworkSpec, params: &NetworkParams, block: &Tensor) -> Result<Vec<f32>, PiError> {
    Ok(classify_batch(spec, params, block)?.sample(0).to_vec())
}

/// Per-block probability vectors of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockScores {
    pub rows: Vec<Vec<f32>>,
}

impl BlockScores {
    /// Component-wise mean accumulated in f64.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.rows.first().map_or(0, |r| r.len());
        let mut m = vec![0.0; n];
        for r in &self.rows {
            for (a, &p) in m.iter_mut().zip(r) {
                *a += p as f64;
            }
        }
        let k = self.rows.len().max(1) as f64;
        m.iter_mut().for_each(|a| *a /= k);
        m
    }

    /// Index of the largest mean probability; ties go to the lowest index.
    pub fn predicted(&self) -> usize {
        argmax(self.mean())
    }
}

impl fmt::Display for BlockScores {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} blocks, mean {:?}", self.rows.len(), self.mean())
    }
}

/// Cuts an image into ⌊H/64⌋·⌊W/64⌋ disjoint blocks in row-major order;
/// right and bottom remainders are dropped.
pub fn tile_blocks(image: &Tensor) -> Result<Tensor, PiError> {
    let d = image.dims();
    if d.h < BLOCK || d.w < BLOCK || d.n != 1 {
        return Err(PiError::TooSmall(d));
    }
    let mut blocks = Vec::with_capacity((d.h / BLOCK) * (d.w / BLOCK));
    for by in 0..d.h / BLOCK {
        for bx in 0..d.w / BLOCK {
            blocks.push(image.crop(by * BLOCK, bx * BLOCK, BLOCK, BLOCK)?);
        }
    }
    Ok(Tensor::stack(&blocks)?)
}

pub fn block_scores(spec: &NetworkSpec, params: &NetworkParams, image: &Tensor) -> Result<BlockScores, PiError> {
    let probs = classify_batch(spec, params, &tile_blocks(image)?)?;
    Ok(BlockScores {
        rows: (0..probs.batch()).map(|i| probs.sample(i).to_vec()).collect(),
    })
}

/// Predicted printer and mean probability vector of a (1, 3, H, W) image.
pub fn identify_image(
    spec: &NetworkSpec,
    params: &NetworkParams,
    image: &Tensor,
) -> Result<(usize, Vec<f64>), PiError> {
    let scores = block_scores(spec, params, image)?;
    Ok((scores.predicted(), scores.mean()))
}
