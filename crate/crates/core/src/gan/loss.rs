use crate::nn::{log_softmax_at, softmax, Tensor};
#[cfg(test)]
use crate::nn::Dims;

use super::GanError;

/// Discriminator output indices: `[1, 0]` marks fake, `[0, 1]` marks real.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelConvention;

impl LabelConvention {
    pub const FAKE: usize = 0;
    pub const REAL: usize = 1;

    pub fn one_hot(index: usize) -> [f32; 2] {
        let mut t = [0.0; 2];
        t[index] = 1.0;
        t
    }
}

fn same_dims(a: &Tensor, b: &Tensor) -> Result<(), GanError> {
    if a.dims() != b.dims() {
        return Err(GanError::DimMismatch(a.dims(), b.dims()));
    }
    Ok(())
}

fn check_logits(t: &Tensor) -> Result<(), GanError> {
    let d = t.dims();
    if d.sample_len() != 2 {
        return Err(GanError::LogitShape(d));
    }
    Ok(())
}

/// Euclidean norm of `refined - original`.
pub fn reg_loss(refined: &Tensor, original: &Tensor) -> Result<f64, GanError> {
    same_dims(refined, original)?;
    Ok(diff_sq(refined.data(), original.data()).sqrt())
}

fn diff_sq(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// `-log P(real)` for one discriminator logit pair, via log-sum-exp.
pub fn realism_loss(logits: &[f32]) -> f64 {
    -log_softmax_at(logits, LabelConvention::REAL)
}

/// Sum over the batch of `realism_loss + lambda * reg_loss`, one term per
/// item of `originals` / `refined` / `logits` (N×2 discriminator outputs).
pub fn refiner_loss(
    originals: &Tensor,
    refined: &Tensor,
    logits: &Tensor,
    lambda: f64,
) -> Result<f64, GanError> {
    Ok(refiner_terms(originals, refined, logits)?
        .iter()
        .map(|(real, reg)| real + lambda * reg)
        .sum())
}

/// Per-item (realism, regularization) pairs.
pub fn refiner_terms(
    originals: &Tensor,
    refined: &Tensor,
    logits: &Tensor,
) -> Result<Vec<(f64, f64)>, GanError> {
    same_dims(originals, refined)?;
    check_logits(logits)?;
    if logits.batch() != refined.batch() {
        return Err(GanError::BatchMismatch(refined.batch(), logits.batch()));
    }
    Ok((0..refined.batch())
        .map(|i| {
            (
                realism_loss(logits.sample(i)),
                diff_sq(refined.sample(i), originals.sample(i)).sqrt(),
            )
        })
        .collect())
}

/// Two-class cross-entropy summed over refined (labelled fake) and real batches.
pub fn discriminator_loss(logits_refined: &Tensor, logits_real: &Tensor) -> Result<f64, GanError> {
    check_logits(logits_refined)?;
    check_logits(logits_real)?;
    let fake: f64 = (0..logits_refined.batch())
        .map(|i| -log_softmax_at(logits_refined.sample(i), LabelConvention::FAKE))
        .sum();
    let real: f64 = (0..logits_real.batch())
        .map(|i| -log_softmax_at(logits_real.sample(i), LabelConvention::REAL))
        .sum();
    Ok(fake + real)
}

/// Gradient of `Σ -log softmax(z_i)[target]` with respect to every logit.
pub(crate) fn cross_entropy_grad(logits: &Tensor, target: usize) -> Tensor {
    let d = logits.dims();
    let mut g = Tensor::zeros(d);
    for i in 0..d.n {
        let p = softmax(logits.sample(i));
        let gi = g.sample_mut(i);
        for (k, (gk, pk)) in gi.iter_mut().zip(p).enumerate() {
            *gk = pk - if k == target { 1.0 } else { 0.0 };
        }
    }
    g
}

/// Gradient of `Σ_i ‖refined_i − original_i‖` with respect to `refined`.
/// Items with zero difference get a zero subgradient.
pub(crate) fn reg_grad(refined: &Tensor, original: &Tensor) -> Tensor {
    let d = refined.dims();
    let mut g = Tensor::zeros(d);
    for i in 0..d.n {
        let (r, o) = (refined.sample(i), original.sample(i));
        let norm = diff_sq(r, o).sqrt();
        if norm > 0.0 {
            for ((gk, &rk), &ok) in g.sample_mut(i).iter_mut().zip(r).zip(o) {
                *gk = ((rk as f64 - ok as f64) / norm) as f32;
            }
        }
    }
    g
}

#[cfg(test)]
pub(crate) fn logits_tensor(rows: &[[f32; 2]]) -> Tensor {
    Tensor::from_vec(
        Dims::new(rows.len(), 2, 1, 1),
        rows.iter().flatten().copied().collect(),
    )
    .expect("two logits per row")
}
