//! Finite-difference gradient checks of the crate's backward pass against
//! central differences of the f64 oracle.

use halftrace::nn::{backward, forward, xavier_init, Activation, LayerSpec, Mode, NetworkParams, NetworkSpec, ParamKind};
use halftrace::{Dims, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{forward64, params64, Arr, Params64};

/// Central-difference step in f64.
pub const STEP: f64 = 1e-6;
/// Largest accepted |analytic − numeric| / max(|analytic|, |numeric|, floor),
/// where floor is FLOOR_FRACTION of the largest numeric gradient of the
/// check. Gradients that are exactly zero in real arithmetic (biases feeding
/// batch norm) keep a float32 residue that only such a floor absorbs.
pub const REL_TOL: f64 = 1e-3;
pub const FLOOR_FRACTION: f64 = 1e-2;
pub const BATCH: usize = 3;

fn random_params(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> NetworkParams {
    let mut p = xavier_init(spec, rng.gen()).unwrap();
    for (key, t) in p.entries.iter_mut() {
        let (lo, hi) = match key.kind {
            ParamKind::Bias | ParamKind::BnShift => (-0.2f32, 0.2),
            ParamKind::BnScale => (0.5f32, 1.5),
            _ => continue,
        };
        for v in t.data_mut() {
            *v = rng.gen_range(lo..hi);
        }
    }
    p
}

fn loss64(spec: &NetworkSpec, p: &Params64, x: &Arr, r: &[f64]) -> f64 {
    let y = forward64(spec, p, x, Mode::Train);
    y.v.iter().zip(r).map(|(a, b)| a * b).sum()
}

fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Compares every parameter and input gradient of `Σ r·f(x)` with central
/// differences of the f64 oracle. Returns the worst relative error.
pub fn check(spec: &NetworkSpec, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = random_params(spec, &mut rng);
    let (c, h, w) = spec.input_dims;
    let x = Tensor::from_fn(Dims::new(BATCH, c, h, w), |_, _, _, _| rng.gen_range(-1.0..1.0));
    let (out, cache) = forward(spec, &params, &x, Mode::Train).unwrap();
    let r = Tensor::from_fn(out.dims(), |_, _, _, _| rng.gen_range(-1.0..1.0));
    let r64: Vec<f64> = r.data().iter().map(|&v| v as f64).collect();

    let p64 = params64(&params);
    let x64 = Arr::from_tensor(&x);
    let y64 = forward64(spec, &p64, &x64, Mode::Train);
    for (a, b) in out.data().iter().zip(&y64.v) {
        if (*a as f64 - b).abs() > 1e-4 * b.abs().max(1.0) {
            return Err(format!("forward {a} vs {b}"));
        }
    }

    let grads = backward(spec, &params, &cache, &r).map_err(|e| e.to_string())?;
    // (label, analytic, numeric)
    let mut pairs: Vec<(String, f64, f64)> = Vec::new();
    for (key, g) in grads.params.iter() {
        if !key.kind.is_trainable() {
            return Err(format!("gradient for frozen {key}"));
        }
        for (i, &a) in g.data().iter().enumerate() {
            let mut p = p64.clone();
            let base = p[key][i];
            p.get_mut(key).unwrap()[i] = base + STEP;
            let up = loss64(spec, &p, &x64, &r64);
            p.get_mut(key).unwrap()[i] = base - STEP;
            let down = loss64(spec, &p, &x64, &r64);
            pairs.push((format!("{key}[{i}]"), a as f64, (up - down) / (2.0 * STEP)));
        }
    }
    let expected = spec
        .layers
        .iter()
        .filter(|l| l.has_weights())
        .map(|l| if l.batch_norm { 4 } else { 2 })
        .sum::<usize>();
    if grads.params.len() != expected {
        return Err(format!("{} gradient tensors, expected {expected}", grads.params.len()));
    }

    for (i, &a) in grads.input.data().iter().enumerate() {
        let mut xp = x64.clone();
        xp.v[i] += STEP;
        let up = loss64(spec, &p64, &xp, &r64);
        xp.v[i] -= 2.0 * STEP;
        let down = loss64(spec, &p64, &xp, &r64);
        pairs.push((format!("input[{i}]"), a as f64, (up - down) / (2.0 * STEP)));
    }
    let floor = FLOOR_FRACTION * pairs.iter().map(|p| p.2.abs()).fold(1e-6, f64::max);
    let mut worst: f64 = 0.0;
    for (label, a, n) in &pairs {
        let e = rel_err(*a, *n, floor);
        if !(e < REL_TOL) {
            return Err(format!("{label}: analytic {a} numeric {n}"));
        }
        worst = worst.max(e);
    }
    Ok(worst)
}

pub fn random_layer(rng: &mut ChaCha8Rng, shape: (usize, usize, usize)) -> LayerSpec {
    let flat = shape.1 == 1 && shape.2 == 1;
    loop {
        let base = match rng.gen_range(0..5) {
            0 => LayerSpec::conv(rng.gen_range(1..4), 1),
            1 => LayerSpec::conv(rng.gen_range(1..4), 2),
            2 if shape.1 >= 2 && shape.2 >= 2 => LayerSpec::max_pool(),
            3 => LayerSpec::fc(rng.gen_range(2..5)),
            4 if flat => LayerSpec::softmax(),
            _ => continue,
        };
        if !base.has_weights() {
            return base;
        }
        let act = [Activation::None, Activation::Relu, Activation::LeakyRelu, Activation::Tanh][rng.gen_range(0..4)];
        let l = base.act(act);
        return if rng.gen_bool(0.4) { l.bn() } else { l };
    }
}


/// Random three-layer stack on a small random input shape.
pub fn random_composition(rng: &mut ChaCha8Rng) -> NetworkSpec {
    let side = rng.gen_range(3..8);
    let input = (rng.gen_range(1..4), side, side + rng.gen_range(0..2));
    let mut layers = Vec::new();
    let mut shape = input;
    for _ in 0..3 {
        let l = random_layer(rng, shape);
        shape = l.output_shape(shape).expect("random_layer respects the input shape");
        layers.push(l);
    }
    NetworkSpec::new(layers, input).expect("valid composition")
}

/// One single-layer network per layer kind, activation and batch-norm use.
pub fn per_kind_specs() -> Vec<NetworkSpec> {
    let s = |layers, input| NetworkSpec::new(layers, input).expect("valid spec");
    let mut out = Vec::new();
    for a in [Activation::None, Activation::Relu, Activation::LeakyRelu, Activation::Tanh] {
        out.push(s(vec![LayerSpec::conv(3, 1).act(a)], (2, 5, 5)));
    }
    out.push(s(vec![LayerSpec::conv(3, 2).act(Activation::Tanh)], (2, 7, 6)));
    out.push(s(vec![LayerSpec::conv(3, 1).bn().act(Activation::Relu)], (2, 4, 4)));
    out.push(s(vec![LayerSpec::fc(4).act(Activation::LeakyRelu)], (2, 3, 3)));
    out.push(s(vec![LayerSpec::fc(3).bn()], (1, 2, 3)));
    out.push(s(vec![LayerSpec::max_pool()], (2, 5, 6)));
    out.push(s(vec![LayerSpec::fc(4), LayerSpec::softmax()], (2, 2, 2)));
    out
}
