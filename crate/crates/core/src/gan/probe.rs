use rand::seq::SliceRandom;

use crate::nn::{adam_step, backward, forward, infer, xavier_init, AdamState, Mode, NetworkSpec, Tensor};
use crate::seeds;

use super::{cross_entropy_grad, GanError, LabelConvention};

/// Training budget of a probe discriminator.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub width_div: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 16,
            lr: 1e-3,
            width_div: 8,
        }
    }
}

fn predict_real(spec: &NetworkSpec, params: &crate::nn::NetworkParams, x: &Tensor) -> Result<Vec<bool>, GanError> {
    let logits = infer(spec, params, x)?;
    Ok((0..x.batch())
        .map(|i| {
            let z = logits.sample(i);
            z[LabelConvention::REAL] > z[LabelConvention::FAKE]
        })
        .collect())
}

/// Trains a fresh discriminator to tell `fake_train` from `real_train`
/// and returns its accuracy on the balanced union of the two test sets.
///
/// Used to measure how distinguishable two image distributions are.
pub fn probe_accuracy(
    config: &ProbeConfig,
    fake_train: &Tensor,
    real_train: &Tensor,
    fake_test: &Tensor,
    real_test: &Tensor,
    seed: u64,
) -> Result<f64, GanError> {
    for (t, name) in [
        (fake_train, "probe fake train"),
        (real_train, "probe real train"),
        (fake_test, "probe fake test"),
        (real_test, "probe real test"),
    ] {
        if t.batch() == 0 {
            return Err(GanError::EmptySet(name));
        }
    }
    let spec = NetworkSpec::discriminator(config.width_div);
    let mut params = xavier_init(&spec, seeds::derive(seed, 11))?;
    let mut adam = AdamState::new(&params);
    let mut rng = seeds::rng(seeds::derive(seed, 12));
    let mut pool: Vec<(bool, usize)> = (0..fake_train.batch())
        .map(|i| (false, i))
        .chain((0..real_train.batch()).map(|i| (true, i)))
        .collect();
    for _ in 0..config.epochs {
        pool.shuffle(&mut rng);
        for chunk in pool.chunks(config.batch_size) {
            let items: Vec<Tensor> = chunk
                .iter()
                .map(|&(is_real, i)| if is_real { real_train.item(i) } else { fake_train.item(i) })
                .collect();
            let x = Tensor::stack(&items)?;
            let (logits, cache) = forward(&spec, &params, &x, Mode::Train)?;
            let mut g = Tensor::zeros(logits.dims());
            for (k, &(is_real, _)) in chunk.iter().enumerate() {
                let target = if is_real { LabelConvention::REAL } else { LabelConvention::FAKE };
                let gk = cross_entropy_grad(&logits.item(k), target);
                g.sample_mut(k).copy_from_slice(gk.data());
            }
            let grads = backward(&spec, &params, &cache, &g)?;
            adam_step(&mut params, &grads.params, &mut adam, config.lr)?;
        }
    }
    let fake_hits = predict_real(&spec, &params, fake_test)?.iter().filter(|r| !**r).count();
    let real_hits = predict_real(&spec, &params, real_test)?.iter().filter(|r| **r).count();
    // class-balanced so unequal test sizes do not skew chance level
    Ok(0.5 * (fake_hits as f64 / fake_test.batch() as f64 + real_hits as f64 / real_test.batch() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dims;

    #[test]
    fn separates_obviously_different_sets() {
        let dark = Tensor::filled(Dims::new(16, 3, 64, 64), 0.2);
        let light = Tensor::filled(Dims::new(16, 3, 64, 64), 0.8);
        let cfg = ProbeConfig {
            epochs: 3,
            batch_size: 8,
            lr: 1e-2,
            width_div: 16,
        };
        let acc = probe_accuracy(&cfg, &dark, &light, &dark, &light, 1).unwrap();
        assert_eq!(acc, 1.0);
    }
}
