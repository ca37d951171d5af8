//! 64-bit reference implementations used as oracles by the integration
//! tests. Everything here is written directly from the definitions, with
//! plain loops and no shared code with the crate's kernels.
#![allow(dead_code)]

pub mod grad;

use halftrace::nn::{Activation, LayerKind, Mode, NetworkParams, NetworkSpec, ParamKey, ParamKind, BN_EPS, LEAKY_SLOPE};

/// Batch of NCHW values in f64.
#[derive(Clone, Debug)]
pub struct Arr {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub v: Vec<f64>,
}

impl Arr {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            v: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_tensor(t: &halftrace::Tensor) -> Self {
        let d = t.dims();
        Self {
            n: d.n,
            c: d.c,
            h: d.h,
            w: d.w,
            v: t.data().iter().map(|&x| x as f64).collect(),
        }
    }

    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.v[((n * self.c + c) * self.h + y) * self.w + x]
    }

    pub fn at_mut(&mut self, n: usize, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.v[((n * self.c + c) * self.h + y) * self.w + x]
    }
}

/// f64 copy of one parameter tensor.
pub fn param(params: &NetworkParams, layer: usize, kind: ParamKind) -> Vec<f64> {
    params
        .get(ParamKey::new(layer, kind))
        .unwrap_or_else(|| panic!("missing layer{layer} {kind:?}"))
        .data()
        .iter()
        .map(|&x| x as f64)
        .collect()
}

/// f64 view of every parameter tensor, keyed like the crate's.
pub type Params64 = std::collections::BTreeMap<ParamKey, Vec<f64>>;

pub fn params64(params: &NetworkParams) -> Params64 {
    params
        .entries
        .iter()
        .map(|(k, t)| (*k, t.data().iter().map(|&x| x as f64).collect()))
        .collect()
}

fn act(a: Activation, x: f64) -> f64 {
    match a {
        Activation::Relu => x.max(0.0),
        Activation::LeakyRelu => {
            if x > 0.0 {
                x
            } else {
                LEAKY_SLOPE as f64 * x
            }
        }
        Activation::Tanh => x.tanh(),
        Activation::None => x,
    }
}

/// Forward pass of `spec` in f64. Train mode normalizes with batch
/// statistics (biased variance); eval mode with the running ones.
pub fn forward64(spec: &NetworkSpec, p: &Params64, input: &Arr, mode: Mode) -> Arr {
    let mut x = input.clone();
    for (li, layer) in spec.layers.iter().enumerate() {
        let get = |kind| &p[&ParamKey::new(li, kind)];
        let mut y = match layer.kind {
            LayerKind::Conv3x3 => {
                let (w, b) = (get(ParamKind::Weight), get(ParamKind::Bias));
                let s = layer.stride;
                let (ho, wo) = ((x.h - 1) / s + 1, (x.w - 1) / s + 1);
                let mut y = Arr::zeros(x.n, layer.out, ho, wo);
                for n in 0..x.n {
                    for o in 0..layer.out {
                        for oy in 0..ho {
                            for ox in 0..wo {
                                let mut acc = b[o];
                                for i in 0..x.c {
                                    for ky in 0..3 {
                                        for kx in 0..3 {
                                            let iy = (oy * s + ky) as isize - 1;
                                            let ix = (ox * s + kx) as isize - 1;
                                            if iy < 0 || ix < 0 || iy >= x.h as isize || ix >= x.w as isize {
                                                continue;
                                            }
                                            acc += w[((o * x.c + i) * 3 + ky) * 3 + kx]
                                                * x.at(n, i, iy as usize, ix as usize);
                                        }
                                    }
                                }
                                *y.at_mut(n, o, oy, ox) = acc;
                            }
                        }
                    }
                }
                y
            }
            LayerKind::FullyConnected => {
                let (w, b) = (get(ParamKind::Weight), get(ParamKind::Bias));
                let k = x.c * x.h * x.w;
                let mut y = Arr::zeros(x.n, layer.out, 1, 1);
                for n in 0..x.n {
                    for o in 0..layer.out {
                        let mut acc = b[o];
                        for j in 0..k {
                            acc += w[o * k + j] * x.v[n * k + j];
                        }
                        y.v[n * layer.out + o] = acc;
                    }
                }
                y
            }
            LayerKind::MaxPool2x2 => {
                let mut y = Arr::zeros(x.n, x.c, x.h / 2, x.w / 2);
                for n in 0..x.n {
                    for c in 0..x.c {
                        for oy in 0..x.h / 2 {
                            for ox in 0..x.w / 2 {
                                let mut m = f64::NEG_INFINITY;
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        m = m.max(x.at(n, c, 2 * oy + dy, 2 * ox + dx));
                                    }
                                }
                                *y.at_mut(n, c, oy, ox) = m;
                            }
                        }
                    }
                }
                y
            }
            LayerKind::Softmax => {
                let k = x.c * x.h * x.w;
                let mut y = x.clone();
                for n in 0..x.n {
                    let row = &mut y.v[n * k..(n + 1) * k];
                    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
                    for v in row.iter_mut() {
                        *v = (*v - m).exp() / z;
                    }
                }
                y
            }
        };
        if layer.batch_norm && layer.has_weights() {
            let (g, b) = (get(ParamKind::BnScale), get(ParamKind::BnShift));
            let plane = y.h * y.w;
            for c in 0..y.c {
                let vals = || (0..y.n).flat_map(|n| (0..plane).map(move |i| (n, i)));
                let (mean, var) = match mode {
                    Mode::Train => {
                        let cnt = (y.n * plane) as f64;
                        let m = vals().map(|(n, i)| y.v[(n * y.c + c) * plane + i]).sum::<f64>() / cnt;
                        let v = vals()
                            .map(|(n, i)| (y.v[(n * y.c + c) * plane + i] - m).powi(2))
                            .sum::<f64>()
                            / cnt;
                        (m, v)
                    }
                    Mode::Eval => (get(ParamKind::BnMean)[c], get(ParamKind::BnVar)[c]),
                };
                let inv = 1.0 / (var + BN_EPS as f64).sqrt();
                for n in 0..y.n {
                    for i in 0..plane {
                        let v = &mut y.v[(n * y.c + c) * plane + i];
                        *v = g[c] * (*v - mean) * inv + b[c];
                    }
                }
            }
        }
        for v in &mut y.v {
            *v = act(layer.activation, *v);
        }
        x = y;
    }
    x
}

/// Reference PSNR with a 99 dB cap for identical inputs, peak 1.
pub fn psnr64(a: &[f64], b: &[f64]) -> f64 {
    let mse = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return 99.0;
    }
    (10.0 * (1.0 / mse).log10()).min(99.0)
}

/// Reference SSIM of one plane: mean over every 8×8 window at unit stride,
/// population moments, K1 = 0.01, K2 = 0.03, dynamic range 1.
pub fn ssim64(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let win = 8;
    let mut total = 0.0;
    let mut count = 0;
    for y0 in 0..=h - win {
        for x0 in 0..=w - win {
            let idx = || (y0..y0 + win).flat_map(move |y| (x0..x0 + win).map(move |x| y * w + x));
            let n = (win * win) as f64;
            let ma = idx().map(|i| a[i]).sum::<f64>() / n;
            let mb = idx().map(|i| b[i]).sum::<f64>() / n;
            let va = idx().map(|i| (a[i] - ma).powi(2)).sum::<f64>() / n;
            let vb = idx().map(|i| (b[i] - mb).powi(2)).sum::<f64>() / n;
            let cov = idx().map(|i| (a[i] - ma) * (b[i] - mb)).sum::<f64>() / n;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}
