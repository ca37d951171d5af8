use super::params::{NetworkParams, ParamSet};
use super::NnError;

/// Moment estimates and hyperparameters of an Adam optimizer.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: ParamSet,
    pub v: ParamSet,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Fresh state with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(params: &NetworkParams) -> Self {
        Self::with_hyper(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(params: &NetworkParams, beta1: f64, beta2: f64, eps: f64) -> Self {
        let mut m = ParamSet::new();
        for (k, t) in params.entries.iter() {
            if k.kind.is_trainable() {
                m.insert(*k, super::Tensor::zeros(t.dims()));
            }
        }
        Self {
            v: m.clone(),
            m,
            step: 0,
            beta1,
            beta2,
            eps,
        }
    }
}

/// One bias-corrected Adam update. Parameters without a gradient entry are
/// left untouched.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &ParamSet,
    state: &mut AdamState,
    lr: f64,
) -> Result<(), NnError> {
    for (k, g) in grads.iter() {
        let p = params.entries.get(*k).ok_or(NnError::MissingParam(*k))?;
        if p.dims() != g.dims() {
            return Err(NnError::ParamShape {
                key: *k,
                expected: p.dims(),
                found: g.dims(),
            });
        }
        if !state.m.get(*k).is_some_and(|m| m.dims() == g.dims()) {
            return Err(NnError::MissingParam(*k));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1 as f32, state.beta2 as f32, state.eps);
    for (k, g) in grads.iter() {
        let m = state.m.get_mut(*k).expect("checked above").data_mut();
        let v = state.v.get_mut(*k).expect("checked above").data_mut();
        let p = params.entries.get_mut(*k).expect("checked above").data_mut();
        for i in 0..p.len() {
            let gi = g.data()[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let mhat = m[i] as f64 / bc1;
            let vhat = v[i] as f64 / bc2;
            p[i] -= (lr * mhat / (vhat.sqrt() + eps)) as f32;
        }
    }
    Ok(())
}
