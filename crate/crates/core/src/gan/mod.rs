//! Adversarial refinement of synthetic halftones.
//!
//! A fully convolutional refiner maps a synthetic block to a block that a
//! discriminator cannot tell apart from real photographs, while an L2
//! self-regularization term keeps it close to its input so the CMYK
//! annotation stays valid. The discriminator sees a mix of fresh and
//! historical refined images.

mod buffer;
mod loss;
mod probe;

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::nn::{
    adam_step, backward, backward_input, forward, infer, xavier_init, AdamState, Dims, Mode,
    NetworkParams, NetworkSpec, NnError, Tensor,
};
use crate::seeds;

pub use buffer::{buffer_update, disc_batch, HistoryBuffer};
pub use loss::{
    discriminator_loss, realism_loss, refiner_loss, refiner_terms, reg_loss, LabelConvention,
};
pub use probe::{probe_accuracy, ProbeConfig};

pub(crate) use loss::cross_entropy_grad;

#[derive(Debug, Error)]
pub enum GanError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("dims differ: {0} vs {1}")]
    DimMismatch(Dims, Dims),
    #[error("expected two logits per item, got {0}")]
    LogitShape(Dims),
    #[error("{0} images but {1} logit pairs")]
    BatchMismatch(usize, usize),
    #[error("batch size {0} is not even")]
    OddBatch(usize),
    #[error("history buffer is empty")]
    EmptyBuffer,
    #[error("need {needed} fresh refined images, got {found}")]
    FreshTooSmall { needed: usize, found: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("non-finite {stage} loss at iteration {iter}")]
    NonFinite { iter: usize, stage: &'static str },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanConfig {
    /// Weight of the self-regularization term.
    pub lambda: f64,
    /// Mini-batch size `b`; must be even.
    pub batch_size: usize,
    /// Outer iterations `T`.
    pub max_iters: usize,
    pub refiner_lr: f64,
    pub disc_lr: f64,
    pub buffer_capacity: usize,
    /// Divides hidden feature-map counts of both networks.
    pub width_div: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-5,
            batch_size: 32,
            max_iters: 1000,
            refiner_lr: 1e-5,
            disc_lr: 1e-5,
            buffer_capacity: 640,
            width_div: 1,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |m: &str| Err(GanError::Config(m.to_string()));
        if self.batch_size == 0 || self.batch_size % 2 != 0 {
            return bad("batch_size must be a positive even number");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and non-negative");
        }
        if !(self.refiner_lr > 0.0 && self.disc_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.buffer_capacity == 0 {
            return bad("buffer_capacity must be positive");
        }
        if self.width_div == 0 {
            return bad("width_div must be positive");
        }
        Ok(())
    }

    pub fn refiner_spec(&self) -> NetworkSpec {
        NetworkSpec::refiner(self.width_div)
    }

    pub fn discriminator_spec(&self) -> NetworkSpec {
        NetworkSpec::discriminator(self.width_div)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    Refiner,
    Discriminator,
}

/// Loss observed at one parameter update.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// Outer iteration, starting at 1.
    pub iter: usize,
    pub kind: StepKind,
    pub loss: f64,
    /// Summed realism term (refiner) or the whole loss (discriminator).
    pub adversarial: f64,
    /// Summed unweighted regularization term; 0 for discriminator steps.
    pub regularization: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedGan {
    pub refiner_spec: NetworkSpec,
    pub refiner: NetworkParams,
    pub discriminator_spec: NetworkSpec,
    pub discriminator: NetworkParams,
    pub history: Vec<StepRecord>,
}

/// Maps raw refiner output in [-1, 1] to image range.
fn to_image(t: &mut Tensor) {
    t.map_inplace(|v| 0.5 * (v + 1.0));
}

/// Refines a batch of (N, 3, 64, 64) images in eval mode.
pub fn refine(spec: &NetworkSpec, params: &NetworkParams, images: &Tensor) -> Result<Tensor, GanError> {
    const CHUNK: usize = 32;
    let n = images.batch();
    let mut parts = Vec::new();
    for start in (0..n).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
        let mut out = infer(spec, params, &images.gather(&idx))?;
        to_image(&mut out);
        parts.push(out);
    }
    Ok(Tensor::stack(&parts)?)
}

fn sample_batch<R: Rng>(set: &Tensor, b: usize, rng: &mut R) -> Tensor {
    let n = set.batch();
    let idx: Vec<usize> = if n >= b {
        index::sample(rng, n, b).into_vec()
    } else {
        (0..b).map(|_| rng.gen_range(0..n)).collect()
    };
    set.gather(&idx)
}

/// Trains refiner and discriminator on synthetic (`synth`) and real
/// (`real`) sets of (N, 3, 64, 64) images.
///
/// Each outer iteration makes two refiner updates, each preceded by a
/// history-buffer update with the batch it refines, and then one
/// discriminator update on `b/2` buffered plus `b/2` freshly refined images
/// against `b` real images.
pub fn train_refiner(
    config: &GanConfig,
    synth: &Tensor,
    real: &Tensor,
    seed: u64,
) -> Result<TrainedGan, GanError> {
    config.validate()?;
    if synth.batch() == 0 {
        return Err(GanError::EmptySet("synthetic"));
    }
    if real.batch() == 0 {
        return Err(GanError::EmptySet("real"));
    }
    let rspec = config.refiner_spec();
    let dspec = config.discriminator_spec();
    let mut rparams = xavier_init(&rspec, seeds::derive(seed, 1))?;
    let mut dparams = xavier_init(&dspec, seeds::derive(seed, 2))?;
    let mut radam = AdamState::new(&rparams);
    let mut dadam = AdamState::new(&dparams);
    let mut rng = seeds::rng(seeds::derive(seed, 3));
    let mut buffer = HistoryBuffer::new(config.buffer_capacity);
    let b = config.batch_size;
    let mut history = Vec::with_capacity(3 * config.max_iters);

    for iter in 1..=config.max_iters {
        for _ in 0..2 {
            let x = sample_batch(synth, b, &mut rng);
            let (mut refined, rcache) = forward(&rspec, &rparams, &x, Mode::Train)?;
            to_image(&mut refined);
            buffer_update(&mut buffer, &refined.unstack(), &mut rng)?;

            let (logits, dcache) = forward(&dspec, &dparams, &refined, Mode::Train)?;
            let terms = refiner_terms(&x, &refined, &logits)?;
            let adversarial: f64 = terms.iter().map(|t| t.0).sum();
            let regularization: f64 = terms.iter().map(|t| t.1).sum();
            let total = adversarial + config.lambda * regularization;
            if !total.is_finite() {
                return Err(GanError::NonFinite { iter, stage: "refiner" });
            }

            let gz = cross_entropy_grad(&logits, LabelConvention::REAL);
            let mut g = backward_input(&dspec, &dparams, &dcache, &gz)?;
            let mut greg = loss::reg_grad(&refined, &x);
            greg.scale(config.lambda as f32);
            g.add_assign(&greg);
            // chain through y = (t + 1) / 2
            g.scale(0.5);
            let grads = backward(&rspec, &rparams, &rcache, &g)?;
            adam_step(&mut rparams, &grads.params, &mut radam, config.refiner_lr)?;
            history.push(StepRecord {
                iter,
                kind: StepKind::Refiner,
                loss: total,
                adversarial,
                regularization,
            });
        }

        let x = sample_batch(synth, b, &mut rng);
        let fresh = refine(&rspec, &rparams, &x)?.unstack();
        let fakes = disc_batch(&buffer, &fresh, b, &mut rng)?;
        let y = sample_batch(real, b, &mut rng);
        let mut items: Vec<&Tensor> = fakes.iter().collect();
        let ys = y.unstack();
        items.extend(ys.iter());
        let batch = Tensor::stack(items)?;
        let (logits, dcache) = forward(&dspec, &dparams, &batch, Mode::Train)?;
        let lf = logits.gather(&(0..b).collect::<Vec<_>>());
        let lr = logits.gather(&(b..2 * b).collect::<Vec<_>>());
        let total = discriminator_loss(&lf, &lr)?;
        if !total.is_finite() {
            return Err(GanError::NonFinite { iter, stage: "discriminator" });
        }
        let gf = cross_entropy_grad(&lf, LabelConvention::FAKE);
        let gr = cross_entropy_grad(&lr, LabelConvention::REAL);
        let gz = Tensor::stack([&gf, &gr])?;
        let grads = backward(&dspec, &dparams, &dcache, &gz)?;
        adam_step(&mut dparams, &grads.params, &mut dadam, config.disc_lr)?;
        history.push(StepRecord {
            iter,
            kind: StepKind::Discriminator,
            loss: total,
            adversarial: total,
            regularization: 0.0,
        });

        if iter % 100 == 0 || iter == config.max_iters {
            let r = &history[history.len() - 2];
            log::info!(
                "gan iter {iter}/{}: refiner {:.4} (reg {:.3}), discriminator {:.4}",
                config.max_iters,
                r.loss,
                r.regularization / b as f64,
                total
            );
        }
    }

    Ok(TrainedGan {
        refiner_spec: rspec,
        refiner: rparams,
        discriminator_spec: dspec,
        discriminator: dparams,
        history,
    })
}
