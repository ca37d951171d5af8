use std::ops::Range;

use super::ops;
use super::params::{NetworkParams, ParamKey, ParamKind, ParamSet};
use super::spec::{Activation, LayerKind, NetworkSpec};
use super::tensor::{Dims, Tensor};
use super::NnError;

pub const BN_EPS: f32 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
struct BnCache {
    xhat: Tensor,
    inv_std: Vec<f32>,
}

#[derive(Debug, Default)]
struct LayerCache {
    bn: Option<BnCache>,
    pool_argmax: Option<Vec<u32>>,
}

/// Per-channel batch statistics observed by a batch-norm layer in train mode.
#[derive(Clone, Debug)]
pub struct BnBatchStats {
    pub layer: usize,
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
}

/// Activations recorded by [`forward`] for use by [`backward`].
#[derive(Debug)]
pub struct ForwardCache {
    mode: Mode,
    range: Range<usize>,
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `range.start + i`.
    acts: Vec<Tensor>,
    layers: Vec<LayerCache>,
    bn_stats: Vec<BnBatchStats>,
}

impl ForwardCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn output(&self) -> &Tensor {
        self.acts.last().expect("cache holds the input")
    }

    /// Output of layer `layer` (absolute index) as recorded.
    pub fn activation(&self, layer: usize) -> Option<&Tensor> {
        if layer < self.range.start || layer >= self.range.end {
            return None;
        }
        self.acts.get(layer - self.range.start + 1)
    }

    pub fn bn_stats(&self) -> &[BnBatchStats] {
        &self.bn_stats
    }
}

/// Gradients produced by [`backward`].
#[derive(Debug)]
pub struct Gradients {
    /// One entry per trainable parameter of the traversed layers.
    pub params: ParamSet,
    pub input: Tensor,
}

fn check_input(spec: &NetworkSpec, start: usize, input: &Tensor) -> Result<(), NnError> {
    let chain = spec.shape_chain()?;
    let (c, h, w) = chain[start];
    let d = input.dims();
    if d.c != c || d.h != h || d.w != w || d.n == 0 {
        return Err(NnError::InputShape {
            layer: start,
            expected: (c, h, w),
            found: d,
        });
    }
    Ok(())
}

/// Runs every layer of `spec`.
pub fn forward(
    spec: &NetworkSpec,
    params: &NetworkParams,
    input: &Tensor,
    mode: Mode,
) -> Result<(Tensor, ForwardCache), NnError> {
    forward_range(spec, params, input, mode, 0..spec.layers.len())
}

/// Runs layers `range` of `spec`; `input` must have the shape that layer
/// `range.start` consumes.
pub fn forward_range(
    spec: &NetworkSpec,
    params: &NetworkParams,
    input: &Tensor,
    mode: Mode,
    range: Range<usize>,
) -> Result<(Tensor, ForwardCache), NnError> {
    let cache = run(spec, params, input, mode, range, true)?;
    Ok((cache.output().clone(), cache))
}

/// Eval-mode forward pass that keeps no activations.
pub fn infer(spec: &NetworkSpec, params: &NetworkParams, input: &Tensor) -> Result<Tensor, NnError> {
    infer_range(spec, params, input, 0..spec.layers.len())
}

pub fn infer_range(
    spec: &NetworkSpec,
    params: &NetworkParams,
    input: &Tensor,
    range: Range<usize>,
) -> Result<Tensor, NnError> {
    let mut cache = run(spec, params, input, Mode::Eval, range, false)?;
    Ok(cache.acts.pop().expect("cache holds the output"))
}

fn run(
    spec: &NetworkSpec,
    params: &NetworkParams,
    input: &Tensor,
    mode: Mode,
    range: Range<usize>,
    keep: bool,
) -> Result<ForwardCache, NnError> {
    if range.start > range.end || range.end > spec.layers.len() {
        return Err(NnError::LayerRange {
            range,
            layers: spec.layers.len(),
        });
    }
    params.validate(spec)?;
    check_input(spec, range.start, input)?;
    let chain = spec.shape_chain()?;
    let batch = input.batch();
    let mut cache = ForwardCache {
        mode,
        range: range.clone(),
        acts: vec![input.clone()],
        layers: Vec::new(),
        bn_stats: Vec::new(),
    };
    for li in range.clone() {
        let layer = &spec.layers[li];
        let (ci, hi, wi) = chain[li];
        let (co, ho, wo) = chain[li + 1];
        let x = cache.acts.last().expect("non-empty");
        let mut lc = LayerCache::default();
        let mut y = Tensor::zeros(Dims::new(batch, co, ho, wo));
        match layer.kind {
            LayerKind::Conv3x3 => {
                let s = ops::ConvShape {
                    cin: ci,
                    h: hi,
                    w: wi,
                    cout: co,
                    stride: layer.stride,
                };
                let wt = params.entries.require(ParamKey::new(li, ParamKind::Weight))?;
                let b = params.entries.require(ParamKey::new(li, ParamKind::Bias))?;
                ops::conv_forward(&s, batch, x.data(), wt.data(), b.data(), y.data_mut());
            }
            LayerKind::FullyConnected => {
                let wt = params.entries.require(ParamKey::new(li, ParamKind::Weight))?;
                let b = params.entries.require(ParamKey::new(li, ParamKind::Bias))?;
                ops::fc_forward(batch, ci * hi * wi, co, x.data(), wt.data(), b.data(), y.data_mut());
            }
            LayerKind::MaxPool2x2 => {
                let mut idx = vec![0u32; y.len()];
                ops::maxpool_forward(batch * ci, hi, wi, x.data(), y.data_mut(), &mut idx);
                lc.pool_argmax = Some(idx);
            }
            LayerKind::Softmax => {
                for n in 0..batch {
                    let p = ops::softmax(x.sample(n));
                    y.sample_mut(n).copy_from_slice(&p);
                }
            }
        }
        if layer.batch_norm && layer.has_weights() {
            let (bn, stats) = batch_norm_forward(params, li, &mut y, mode)?;
            if let Some(s) = stats {
                cache.bn_stats.push(s);
            }
            lc.bn = bn;
        }
        if layer.activation != Activation::None {
            let a = layer.activation;
            y.map_inplace(|v| a.apply(v));
        }
        if !y.is_finite() {
            return Err(NnError::NonFinite {
                layer: li,
                stage: "forward",
            });
        }
        if keep {
            cache.layers.push(lc);
            cache.acts.push(y);
        } else {
            cache.acts.clear();
            cache.acts.push(y);
        }
    }
    Ok(cache)
}

fn batch_norm_forward(
    params: &NetworkParams,
    li: usize,
    y: &mut Tensor,
    mode: Mode,
) -> Result<(Option<BnCache>, Option<BnBatchStats>), NnError> {
    let scale = params.entries.require(ParamKey::new(li, ParamKind::BnScale))?.data();
    let shift = params.entries.require(ParamKey::new(li, ParamKind::BnShift))?.data();
    let d = y.dims();
    let per_channel = (d.n * d.plane_len()) as f64;
    match mode {
        Mode::Eval => {
            let rm = params.entries.require(ParamKey::new(li, ParamKind::BnMean))?.data();
            let rv = params.entries.require(ParamKey::new(li, ParamKind::BnVar))?.data();
            for n in 0..d.n {
                for c in 0..d.c {
                    let inv = 1.0 / (rv[c] + BN_EPS).sqrt();
                    let (g, b, m) = (scale[c], shift[c], rm[c]);
                    for v in y.plane_mut(n, c) {
                        *v = g * (*v - m) * inv + b;
                    }
                }
            }
            Ok((None, None))
        }
        Mode::Train => {
            let mut mean = vec![0.0f32; d.c];
            let mut var = vec![0.0f32; d.c];
            let mut inv_std = vec![0.0f32; d.c];
            for c in 0..d.c {
                let mut s = 0.0f64;
                for n in 0..d.n {
                    s += y.plane(n, c).iter().map(|&v| v as f64).sum::<f64>();
                }
                let m = s / per_channel;
                let mut sq = 0.0f64;
                for n in 0..d.n {
                    sq += y.plane(n, c).iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>();
                }
                let v = sq / per_channel;
                mean[c] = m as f32;
                var[c] = v as f32;
                inv_std[c] = (1.0 / (v + BN_EPS as f64).sqrt()) as f32;
            }
            let mut xhat = Tensor::zeros(d);
            for n in 0..d.n {
                for c in 0..d.c {
                    let (m, inv, g, b) = (mean[c], inv_std[c], scale[c], shift[c]);
                    let src = y.plane_mut(n, c);
                    let xh = xhat.plane_mut(n, c);
                    for (v, h) in src.iter_mut().zip(xh.iter_mut()) {
                        *h = (*v - m) * inv;
                        *v = g * *h + b;
                    }
                }
            }
            Ok((
                Some(BnCache { xhat, inv_std }),
                Some(BnBatchStats {
                    layer: li,
                    mean,
                    var,
                }),
            ))
        }
    }
}

/// Folds the batch statistics of a train-mode pass into the running
/// mean/variance of every batch-norm layer it touched.
pub fn update_running_stats(params: &mut NetworkParams, cache: &ForwardCache) {
    for s in &cache.bn_stats {
        for (kind, batch) in [(ParamKind::BnMean, &s.mean), (ParamKind::BnVar, &s.var)] {
            if let Some(t) = params.entries.get_mut(ParamKey::new(s.layer, kind)) {
                for (r, &b) in t.data_mut().iter_mut().zip(batch) {
                    *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
                }
            }
        }
    }
}

/// Backpropagates `grad_out` through the layers recorded in `cache`.
pub fn backward(
    spec: &NetworkSpec,
    params: &NetworkParams,
    cache: &ForwardCache,
    grad_out: &Tensor,
) -> Result<Gradients, NnError> {
    backprop(spec, params, cache, grad_out, true)
}

/// Like [`backward`] but only computes the gradient with respect to the input.
pub fn backward_input(
    spec: &NetworkSpec,
    params: &NetworkParams,
    cache: &ForwardCache,
    grad_out: &Tensor,
) -> Result<Tensor, NnError> {
    Ok(backprop(spec, params, cache, grad_out, false)?.input)
}

fn backprop(
    spec: &NetworkSpec,
    params: &NetworkParams,
    cache: &ForwardCache,
    grad_out: &Tensor,
    want_params: bool,
) -> Result<Gradients, NnError> {
    if cache.mode != Mode::Train {
        return Err(NnError::EvalCache);
    }
    if grad_out.dims() != cache.output().dims() {
        return Err(NnError::GradientShape {
            expected: cache.output().dims(),
            found: grad_out.dims(),
        });
    }
    let chain = spec.shape_chain()?;
    let mut grads = ParamSet::new();
    let mut g = grad_out.clone();
    for (pos, li) in cache.range.clone().enumerate().rev() {
        let layer = &spec.layers[li];
        let x = &cache.acts[pos];
        let y = &cache.acts[pos + 1];
        let lc = &cache.layers[pos];
        let batch = x.batch();
        let (ci, hi, wi) = chain[li];
        let (co, _, _) = chain[li + 1];

        if layer.activation != Activation::None {
            let a = layer.activation;
            for (gv, &yv) in g.data_mut().iter_mut().zip(y.data()) {
                // every supported activation is monotone, so the sign of y
                // recovers the side of the kink
                *gv *= a.derivative(yv, yv);
            }
        }
        if let Some(bn) = &lc.bn {
            g = batch_norm_backward(params, li, bn, g, &mut grads, want_params)?;
        }
        let mut dx = Tensor::zeros(x.dims());
        match layer.kind {
            LayerKind::Conv3x3 => {
                let s = ops::ConvShape {
                    cin: ci,
                    h: hi,
                    w: wi,
                    cout: co,
                    stride: layer.stride,
                };
                let wt = params.entries.require(ParamKey::new(li, ParamKind::Weight))?;
                let mut dw = want_params.then(|| Tensor::zeros(wt.dims()));
                let mut db = want_params.then(|| Tensor::zeros(Dims::new(1, co, 1, 1)));
                ops::conv_backward(
                    &s,
                    batch,
                    x.data(),
                    wt.data(),
                    g.data(),
                    dw.as_mut().map(|t| t.data_mut()),
                    db.as_mut().map(|t| t.data_mut()),
                    Some(dx.data_mut()),
                );
                if let (Some(dw), Some(db)) = (dw, db) {
                    grads.insert(ParamKey::new(li, ParamKind::Weight), dw);
                    grads.insert(ParamKey::new(li, ParamKind::Bias), db);
                }
            }
            LayerKind::FullyConnected => {
                let wt = params.entries.require(ParamKey::new(li, ParamKind::Weight))?;
                let mut dw = want_params.then(|| Tensor::zeros(wt.dims()));
                let mut db = want_params.then(|| Tensor::zeros(Dims::new(1, co, 1, 1)));
                ops::fc_backward(
                    batch,
                    ci * hi * wi,
                    co,
                    x.data(),
                    wt.data(),
                    g.data(),
                    dw.as_mut().map(|t| t.data_mut()),
                    db.as_mut().map(|t| t.data_mut()),
                    Some(dx.data_mut()),
                );
                if let (Some(dw), Some(db)) = (dw, db) {
                    grads.insert(ParamKey::new(li, ParamKind::Weight), dw);
                    grads.insert(ParamKey::new(li, ParamKind::Bias), db);
                }
            }
            LayerKind::MaxPool2x2 => {
                let idx = lc.pool_argmax.as_ref().expect("pool cache");
                ops::maxpool_backward(batch * ci, hi, wi, idx, g.data(), dx.data_mut());
            }
            LayerKind::Softmax => {
                for n in 0..batch {
                    let p = y.sample(n);
                    let gy = g.sample(n);
                    let dot: f32 = p.iter().zip(gy).map(|(a, b)| a * b).sum();
                    for ((d, &pi), &gi) in dx.sample_mut(n).iter_mut().zip(p).zip(gy) {
                        *d = pi * (gi - dot);
                    }
                }
            }
        }
        if !dx.is_finite() {
            return Err(NnError::NonFinite {
                layer: li,
                stage: "backward",
            });
        }
        g = dx;
    }
    if want_params && !grads.all_finite() {
        return Err(NnError::NonFinite {
            layer: cache.range.start,
            stage: "backward",
        });
    }
    Ok(Gradients {
        params: grads,
        input: g,
    })
}

fn batch_norm_backward(
    params: &NetworkParams,
    li: usize,
    bn: &BnCache,
    g: Tensor,
    grads: &mut ParamSet,
    want_params: bool,
) -> Result<Tensor, NnError> {
    let scale = params.entries.require(ParamKey::new(li, ParamKind::BnScale))?.data();
    let d = g.dims();
    let m = (d.n * d.plane_len()) as f64;
    // (Σg, Σg·xhat, mean xhat) per channel
    let mut sums = vec![(0.0f64, 0.0f64, 0.0f64); d.c];
    for (c, (s1, s2, s3)) in sums.iter_mut().enumerate() {
        for n in 0..d.n {
            for (&gv, &xh) in g.plane(n, c).iter().zip(bn.xhat.plane(n, c)) {
                *s1 += gv as f64;
                *s2 += gv as f64 * xh as f64;
                *s3 += xh as f64;
            }
        }
        *s3 /= m;
    }
    let mut dx = Tensor::zeros(d);
    for (c, &(sg, sgx, xbar)) in sums.iter().enumerate() {
        // with dxhat = g·γ: dx = inv/M · (M·dxhat − Σdxhat − xhat·Σ(dxhat·xhat)).
        // The bracket sums to zero over the channel; recentering the stored
        // xhat keeps that true in floating point when the variance is tiny.
        let k = scale[c] as f64 * bn.inv_std[c] as f64 / m;
        for n in 0..d.n {
            let gp = g.plane(n, c);
            let xp = bn.xhat.plane(n, c);
            for ((o, &gv), &xh) in dx.plane_mut(n, c).iter_mut().zip(gp).zip(xp) {
                *o = (k * (m * gv as f64 - sg - (xh as f64 - xbar) * sgx)) as f32;
            }
        }
    }
    let dshift: Vec<f32> = sums.iter().map(|s| s.0 as f32).collect();
    let dscale: Vec<f32> = sums.iter().map(|s| s.1 as f32).collect();
    if want_params {
        let c = d.c;
        grads.insert(
            ParamKey::new(li, ParamKind::BnScale),
            Tensor::from_vec(Dims::new(1, c, 1, 1), dscale)?,
        );
        grads.insert(
            ParamKey::new(li, ParamKind::BnShift),
            Tensor::from_vec(Dims::new(1, c, 1, 1), dshift)?,
        );
    }
    Ok(dx)
}
