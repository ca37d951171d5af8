//! CMYK decomposition of RGB halftone blocks.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::halftone::naive_profile_decompose;
use crate::metrics::{psnr, ssim, MetricError};
use crate::nn::{
    adam_step, backward, forward, infer, update_running_stats, xavier_init, AdamState, Dims, Mode,
    NetworkParams, NetworkSpec, NnError, Tensor,
};
use crate::seeds;

pub const CHANNELS: [&str; 4] = ["C", "M", "Y", "K"];

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("dims differ: {0} vs {1}")]
    DimMismatch(Dims, Dims),
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite loss in epoch {0}")]
    NonFinite(usize),
}

/// Half the summed squared error per batch item.
pub fn euclidean_loss(pred: &Tensor, target: &Tensor) -> Result<f64, DecomposeError> {
    if pred.dims() != target.dims() {
        return Err(DecomposeError::DimMismatch(pred.dims(), target.dims()));
    }
    if pred.batch() == 0 {
        return Err(DecomposeError::EmptySet("prediction"));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p as f64 - t as f64;
            d * d
        })
        .sum();
    Ok(sum / (2.0 * pred.batch() as f64))
}

fn euclidean_grad(pred: &Tensor, target: &Tensor) -> Tensor {
    let k = 1.0 / pred.batch() as f32;
    let mut g = pred.clone();
    for (gi, &t) in g.data_mut().iter_mut().zip(target.data()) {
        *gi = (*gi - t) * k;
    }
    g
}

#[derive(Clone, Debug, PartialEq)]
pub struct HcdConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: usize,
    pub width_div: usize,
}

impl Default for HcdConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            width_div: 1,
        }
    }
}

impl HcdConfig {
    pub fn validate(&self) -> Result<(), DecomposeError> {
        if !(self.lr > 0.0) {
            return Err(DecomposeError::Config("lr must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.width_div == 0 {
            return Err(DecomposeError::Config(
                "batch_size, max_epochs and width_div must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn spec(&self) -> NetworkSpec {
        NetworkSpec::hcd(self.width_div)
    }
}

/// Assigns roughly one item in ten to validation by hashing its key.
pub fn split_by_hash(keys: &[u64]) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (i, &k) in keys.iter().enumerate() {
        if seeds::splitmix64(k ^ 0x4843_4400) % 10 == 0 {
            val.push(i);
        } else {
            train.push(i);
        }
    }
    (train, val)
}

/// Stateful optimizer for the decomposition network.
#[derive(Clone, Debug)]
pub struct HcdTrainer {
    pub spec: NetworkSpec,
    pub params: NetworkParams,
    adam: AdamState,
    lr: f64,
}

impl HcdTrainer {
    pub fn new(config: &HcdConfig, seed: u64) -> Result<Self, DecomposeError> {
        config.validate()?;
        let spec = config.spec();
        let params = xavier_init(&spec, seed)?;
        Ok(Self {
            adam: AdamState::new(&params),
            spec,
            params,
            lr: config.lr,
        })
    }

    /// One Adam update on a batch; returns the loss before the update.
    pub fn step(&mut self, rgb: &Tensor, cmyk: &Tensor) -> Result<f64, DecomposeError> {
        let (pred, cache) = forward(&self.spec, &self.params, rgb, Mode::Train)?;
        let loss = euclidean_loss(&pred, cmyk)?;
        let grads = backward(&self.spec, &self.params, &cache, &euclidean_grad(&pred, cmyk))?;
        adam_step(&mut self.params, &grads.params, &mut self.adam, self.lr)?;
        update_running_stats(&mut self.params, &cache);
        Ok(loss)
    }
}

/// Mean per-item Euclidean loss in eval mode.
pub fn eval_loss(
    spec: &NetworkSpec,
    params: &NetworkParams,
    rgb: &Tensor,
    cmyk: &Tensor,
) -> Result<f64, DecomposeError> {
    let pred = raw_output(spec, params, rgb)?;
    euclidean_loss(&pred, cmyk)
}

#[derive(Clone, Debug)]
pub struct TrainedHcd {
    pub spec: NetworkSpec,
    /// Parameters of the epoch with the lowest validation loss.
    pub params: NetworkParams,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch the returned parameters come from.
    pub best_epoch: usize,
}

/// Trains on `rgb` → `cmyk` pairs. `keys` (one per item, e.g. content
/// seeds) drive the 90/10 train/validation split.
pub fn train_hcd(
    config: &HcdConfig,
    rgb: &Tensor,
    cmyk: &Tensor,
    keys: &[u64],
    seed: u64,
) -> Result<TrainedHcd, DecomposeError> {
    config.validate()?;
    if rgb.batch() == 0 {
        return Err(DecomposeError::EmptySet("training"));
    }
    if rgb.batch() != cmyk.batch() || keys.len() != rgb.batch() {
        return Err(DecomposeError::DimMismatch(rgb.dims(), cmyk.dims()));
    }
    let (mut train, mut val) = split_by_hash(keys);
    if val.is_empty() {
        // tiny sets: hold out the last item
        val.push(train.pop().expect("non-empty set"));
    }
    if train.is_empty() {
        train.push(val[0]);
    }
    let (val_rgb, val_cmyk) = (rgb.gather(&val), cmyk.gather(&val));
    let mut trainer = HcdTrainer::new(config, seeds::derive(seed, 21))?;
    let mut rng = seeds::rng(seeds::derive(seed, 22));
    let mut best = (f64::INFINITY, 0, trainer.params.clone());
    let (mut train_curve, mut val_curve) = (Vec::new(), Vec::new());
    for epoch in 1..=config.max_epochs {
        train.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in train.chunks(config.batch_size) {
            sum += trainer.step(&rgb.gather(chunk), &cmyk.gather(chunk))? * chunk.len() as f64;
        }
        let tl = sum / train.len() as f64;
        let vl = eval_loss(&trainer.spec, &trainer.params, &val_rgb, &val_cmyk)?;
        if !(tl.is_finite() && vl.is_finite()) {
            return Err(DecomposeError::NonFinite(epoch));
        }
        train_curve.push(tl);
        val_curve.push(vl);
        log::info!("hcd epoch {epoch}: train {tl:.4} val {vl:.4}");
        if vl < best.0 {
            best = (vl, epoch, trainer.params.clone());
        } else if epoch - best.1 >= config.patience {
            break;
        }
    }
    Ok(TrainedHcd {
        spec: trainer.spec,
        params: best.2,
        train_loss: train_curve,
        val_loss: val_curve,
        best_epoch: best.1,
    })
}

fn raw_output(spec: &NetworkSpec, params: &NetworkParams, rgb: &Tensor) -> Result<Tensor, DecomposeError> {
    const CHUNK: usize = 32;
    let n = rgb.batch();
    if n == 0 {
        return Err(DecomposeError::EmptySet("input"));
    }
    let mut parts = Vec::new();
    for start in (0..n).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
        parts.push(infer(spec, params, &rgb.gather(&idx))?);
    }
    Ok(Tensor::stack(&parts)?)
}

/// C, M, Y, K planes of each block, clamped to [0, 1].
pub fn decompose(spec: &NetworkSpec, params: &NetworkParams, rgb: &Tensor) -> Result<Tensor, DecomposeError> {
    Ok(raw_output(spec, params, rgb)?.clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ChannelScores {
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Mean per-channel quality of the network and the profile formula.
#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionReport {
    pub hcd: [ChannelScores; 4],
    pub baseline: [ChannelScores; 4],
    pub samples: usize,
}

impl DecompositionReport {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("channel\thcd_psnr_db\thcd_ssim\tprofile_psnr_db\tprofile_ssim\n");
        for (c, name) in CHANNELS.iter().enumerate() {
            let (h, b) = (self.hcd[c], self.baseline[c]);
            let _ = writeln!(
                s,
                "{name}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                h.psnr_db, h.ssim, b.psnr_db, b.ssim
            );
        }
        s
    }
}

fn channel_scores(pred: &Tensor, target: &Tensor) -> Result<[ChannelScores; 4], DecomposeError> {
    let n = pred.batch();
    let mut out = [ChannelScores::default(); 4];
    let d = pred.dims();
    for i in 0..n {
        for (c, score) in out.iter_mut().enumerate() {
            let plane = |t: &Tensor| {
                Tensor::from_vec(Dims::new(1, 1, d.h, d.w), t.plane(i, c).to_vec()).expect("plane")
            };
            let (p, t) = (plane(pred), plane(target));
            score.psnr_db += psnr(&p, &t)?;
            score.ssim += ssim(&p, &t)?;
        }
    }
    for s in &mut out {
        s.psnr_db /= n as f64;
        s.ssim /= n as f64;
    }
    Ok(out)
}

pub fn evaluate_decomposition(
    spec: &NetworkSpec,
    params: &NetworkParams,
    rgb: &Tensor,
    cmyk: &Tensor,
) -> Result<DecompositionReport, DecomposeError> {
    if rgb.batch() == 0 {
        return Err(DecomposeError::EmptySet("evaluation"));
    }
    if rgb.batch() != cmyk.batch() {
        return Err(DecomposeError::DimMismatch(rgb.dims(), cmyk.dims()));
    }
    let pred = decompose(spec, params, rgb)?;
    let base = naive_profile_decompose(&rgb.clamp(0.0, 1.0)).expect("three channels");
    Ok(DecompositionReport {
        hcd: channel_scores(&pred, cmyk)?,
        baseline: channel_scores(&base, cmyk)?,
        samples: rgb.batch(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_values() {
        let a = Tensor::filled(Dims::new(1, 4, 8, 8), 0.5);
        assert_eq!(euclidean_loss(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.data_mut()[3] += 0.2;
        assert!((euclidean_loss(&b, &a).unwrap() - 0.02).abs() < 1e-7);
        // 2 items, each one element off by 1 → (1 + 1) / 4
        let mut c = Tensor::zeros(Dims::new(2, 4, 8, 8));
        c.data_mut()[0] = 1.0;
        c.data_mut()[300] = 1.0;
        let z = Tensor::zeros(c.dims());
        assert!((euclidean_loss(&c, &z).unwrap() - 0.5).abs() < 1e-12);
        assert!(euclidean_loss(&a, &z).is_err());
    }

    #[test]
    fn hash_split_is_about_a_tenth() {
        let keys: Vec<u64> = (0..5000).collect();
        let (train, val) = split_by_hash(&keys);
        assert_eq!(train.len() + val.len(), 5000);
        assert!((400..600).contains(&val.len()), "{}", val.len());
        assert_eq!(split_by_hash(&keys), (train, val));
    }

    #[test]
    fn report_has_sixteen_numbers() {
        let r = DecompositionReport {
            hcd: [ChannelScores { psnr_db: 1.0, ssim: 0.5 }; 4],
            baseline: [ChannelScores::default(); 4],
            samples: 3,
        };
        let tsv = r.to_tsv();
        let numbers = tsv.lines().skip(1).flat_map(|l| l.split('\t').skip(1)).count();
        assert_eq!(numbers, 16);
        assert!(tsv.starts_with("channel\t"));
    }

    #[test]
    fn identical_planes_hit_the_sentinels() {
        let t = Tensor::filled(Dims::new(2, 4, 16, 16), 1.0);
        let s = channel_scores(&t, &t).unwrap();
        for c in s {
            assert_eq!(c.psnr_db, crate::metrics::PSNR_CAP_DB);
            assert!((c.ssim - 1.0).abs() < 1e-12);
        }
    }
}
