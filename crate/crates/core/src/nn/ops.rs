//! Raw kernels over NCHW slices. Shapes are checked by the caller.

/// `c = a · b + beta · c` for row/column-strided operands.
///
/// `a` is `m×k`, `b` is `k×n`, `c` is `m×n` with row stride `rsc` and unit
/// column stride.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    rsa: usize,
    csa: usize,
    b: &[f32],
    rsb: usize,
    csb: usize,
    beta: f32,
    c: &mut [f32],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!((m - 1) * rsa + (k - 1) * csa < a.len(), "gemm: lhs out of bounds");
        assert!((k - 1) * rsb + (n - 1) * csb < b.len(), "gemm: rhs out of bounds");
    }
    assert!((m - 1) * rsc + n - 1 < c.len(), "gemm: output out of bounds");
    // SAFETY: every index touched by sgemm lies inside the slices, as checked above.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

#[inline]
fn out_size(size: usize, stride: usize) -> usize {
    (size - 1) / stride + 1
}

/// Unfolds one `c×h×w` sample into a `(c·9) × (ho·wo)` patch matrix for a
/// 3×3 kernel with one pixel of zero padding.
pub(crate) fn im2col(input: &[f32], c: usize, h: usize, w: usize, stride: usize, cols: &mut [f32]) {
    let ho = out_size(h, stride);
    let wo = out_size(w, stride);
    let p = ho * wo;
    debug_assert_eq!(cols.len(), c * 9 * p);
    for ci in 0..c {
        let plane = &input[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ci * 9) + ky * 3 + kx) * p..((ci * 9) + ky * 3 + kx + 1) * p];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - 1;
                    let dst = &mut row[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    if stride == 1 {
                        // ix = ox + kx - 1
                        let lo = if kx == 0 { 1 } else { 0 };
                        let hi = if kx == 2 { wo - 1 } else { wo };
                        if lo > 0 {
                            dst[0] = 0.0;
                        }
                        if hi < wo {
                            dst[wo - 1] = 0.0;
                        }
                        dst[lo..hi].copy_from_slice(&src[lo + kx - 1..hi + kx - 1]);
                    } else {
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * stride + kx) as isize - 1;
                            *d = if ix < 0 || ix >= w as isize {
                                0.0
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patch gradients back onto the image.
pub(crate) fn col2im(cols: &[f32], c: usize, h: usize, w: usize, stride: usize, out: &mut [f32]) {
    let ho = out_size(h, stride);
    let wo = out_size(w, stride);
    let p = ho * wo;
    for ci in 0..c {
        let plane = &mut out[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ci * 9) + ky * 3 + kx) * p..((ci * 9) + ky * 3 + kx + 1) * p];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let src = &row[oy * wo..(oy + 1) * wo];
                    for (ox, &g) in src.iter().enumerate() {
                        let ix = (ox * stride + kx) as isize - 1;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += g;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) struct ConvShape {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub stride: usize,
}

impl ConvShape {
    pub fn ho(&self) -> usize {
        out_size(self.h, self.stride)
    }
    pub fn wo(&self) -> usize {
        out_size(self.w, self.stride)
    }
    pub fn k(&self) -> usize {
        self.cin * 9
    }
    pub fn p(&self) -> usize {
        self.ho() * self.wo()
    }
}

/// Forward 3×3 convolution of a whole batch.
pub(crate) fn conv_forward(
    s: &ConvShape,
    batch: usize,
    input: &[f32],
    weight: &[f32],
    bias: &[f32],
    out: &mut [f32],
) {
    let (k, p) = (s.k(), s.p());
    let in_len = s.cin * s.h * s.w;
    let out_len = s.cout * p;
    let mut cols = vec![0.0f32; k * p];
    for n in 0..batch {
        im2col(&input[n * in_len..(n + 1) * in_len], s.cin, s.h, s.w, s.stride, &mut cols);
        let o = &mut out[n * out_len..(n + 1) * out_len];
        for (co, row) in o.chunks_exact_mut(p).enumerate() {
            row.fill(bias[co]);
        }
        gemm(s.cout, k, p, weight, k, 1, &cols, p, 1, 1.0, o, p);
    }
}

/// Backward 3×3 convolution. Accumulates into `dweight`/`dbias` when given
/// and writes the input gradient into `dinput` when given.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    s: &ConvShape,
    batch: usize,
    input: &[f32],
    weight: &[f32],
    dout: &[f32],
    mut dweight: Option<&mut [f32]>,
    mut dbias: Option<&mut [f32]>,
    mut dinput: Option<&mut [f32]>,
) {
    let (k, p) = (s.k(), s.p());
    let in_len = s.cin * s.h * s.w;
    let out_len = s.cout * p;
    let mut cols = vec![0.0f32; k * p];
    let mut dcols = vec![0.0f32; k * p];
    for n in 0..batch {
        let g = &dout[n * out_len..(n + 1) * out_len];
        if let Some(db) = dbias.as_deref_mut() {
            for (co, row) in g.chunks_exact(p).enumerate() {
                db[co] += row.iter().map(|&v| v as f64).sum::<f64>() as f32;
            }
        }
        if let Some(dw) = dweight.as_deref_mut() {
            im2col(&input[n * in_len..(n + 1) * in_len], s.cin, s.h, s.w, s.stride, &mut cols);
            // dW[cout×k] += dout[cout×p] · colsᵀ[p×k]
            gemm(s.cout, p, k, g, p, 1, &cols, 1, p, 1.0, dw, k);
        }
        if let Some(di) = dinput.as_deref_mut() {
            // dcols[k×p] = Wᵀ[k×cout] · dout[cout×p]
            gemm(k, s.cout, p, weight, 1, k, g, p, 1, 0.0, &mut dcols, p);
            let d = &mut di[n * in_len..(n + 1) * in_len];
            d.fill(0.0);
            col2im(&dcols, s.cin, s.h, s.w, s.stride, d);
        }
    }
}

/// 2×2 max pooling with stride 2. Records the winning input offset per output.
pub(crate) fn maxpool_forward(
    planes: usize,
    h: usize,
    w: usize,
    input: &[f32],
    out: &mut [f32],
    argmax: &mut [u32],
) {
    let (ho, wo) = (h / 2, w / 2);
    for pl in 0..planes {
        let src = &input[pl * h * w..(pl + 1) * h * w];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = (2 * oy) * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = (2 * oy + dy) * w + 2 * ox + dx;
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                let o = pl * ho * wo + oy * wo + ox;
                out[o] = src[best];
                argmax[o] = best as u32;
            }
        }
    }
}

pub(crate) fn maxpool_backward(
    planes: usize,
    h: usize,
    w: usize,
    argmax: &[u32],
    dout: &[f32],
    dinput: &mut [f32],
) {
    let (ho, wo) = (h / 2, w / 2);
    dinput.fill(0.0);
    for pl in 0..planes {
        for i in 0..ho * wo {
            let o = pl * ho * wo + i;
            dinput[pl * h * w + argmax[o] as usize] += dout[o];
        }
    }
}

/// `out[n×o] = x[n×i] · Wᵀ + b`
pub(crate) fn fc_forward(
    batch: usize,
    inputs: usize,
    outputs: usize,
    x: &[f32],
    weight: &[f32],
    bias: &[f32],
    out: &mut [f32],
) {
    for row in out.chunks_exact_mut(outputs) {
        row.copy_from_slice(bias);
    }
    gemm(batch, inputs, outputs, x, inputs, 1, weight, 1, inputs, 1.0, out, outputs);
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn fc_backward(
    batch: usize,
    inputs: usize,
    outputs: usize,
    x: &[f32],
    weight: &[f32],
    dout: &[f32],
    dweight: Option<&mut [f32]>,
    dbias: Option<&mut [f32]>,
    dinput: Option<&mut [f32]>,
) {
    if let Some(db) = dbias {
        for row in dout.chunks_exact(outputs) {
            for (d, g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }
    }
    if let Some(dw) = dweight {
        // dW[o×i] += doutᵀ[o×n] · x[n×i]
        gemm(outputs, batch, inputs, dout, 1, outputs, x, inputs, 1, 1.0, dw, inputs);
    }
    if let Some(di) = dinput {
        gemm(batch, outputs, inputs, dout, outputs, 1, weight, inputs, 1, 0.0, di, inputs);
    }
}

/// Numerically stable softmax of one logit vector.
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f64> = logits.iter().map(|&z| ((z - max) as f64).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| (e / sum) as f32).collect()
}

/// `log(softmax(logits)[idx])` computed through log-sum-exp.
pub fn log_softmax_at(logits: &[f32], idx: usize) -> f64 {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let lse = logits.iter().map(|&z| (z as f64 - max).exp()).sum::<f64>().ln() + max;
    logits[idx] as f64 - lse
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(s: &ConvShape, input: &[f32], weight: &[f32], bias: &[f32]) -> Vec<f32> {
        let (ho, wo) = (s.ho(), s.wo());
        let mut out = vec![0.0; s.cout * ho * wo];
        for co in 0..s.cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bias[co] as f64;
                    for ci in 0..s.cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * s.stride + ky) as isize - 1;
                                let ix = (ox * s.stride + kx) as isize - 1;
                                if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                                    continue;
                                }
                                acc += weight[((co * s.cin + ci) * 3 + ky) * 3 + kx] as f64
                                    * input[(ci * s.h + iy as usize) * s.w + ix as usize] as f64;
                            }
                        }
                    }
                    out[(co * ho + oy) * wo + ox] = acc as f32;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loops() {
        for stride in [1, 2] {
            let s = ConvShape {
                cin: 3,
                h: 7,
                w: 6,
                cout: 4,
                stride,
            };
            let input: Vec<f32> = (0..3 * 7 * 6).map(|i| ((i * 37 % 11) as f32 - 5.0) / 7.0).collect();
            let weight: Vec<f32> = (0..4 * 27).map(|i| ((i * 13 % 7) as f32 - 3.0) / 5.0).collect();
            let bias = [0.1, -0.2, 0.3, 0.0];
            let mut out = vec![0.0; s.cout * s.p()];
            conv_forward(&s, 1, &input, &weight, &bias, &mut out);
            let want = naive_conv(&s, &input, &weight, &bias);
            for (a, b) in out.iter().zip(&want) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        for stride in [1, 2] {
            let (c, h, w) = (2, 5, 6);
            let p = ((h - 1) / stride + 1) * ((w - 1) / stride + 1);
            let x: Vec<f32> = (0..c * h * w).map(|i| (i % 7) as f32 - 3.0).collect();
            let y: Vec<f32> = (0..c * 9 * p).map(|i| (i % 5) as f32 - 2.0).collect();
            let mut cols = vec![0.0; c * 9 * p];
            im2col(&x, c, h, w, stride, &mut cols);
            let mut back = vec![0.0; c * h * w];
            col2im(&y, c, h, w, stride, &mut back);
            let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| (*a * *b) as f64).sum();
            let rhs: f64 = x.iter().zip(&back).map(|(a, b)| (*a * *b) as f64).sum();
            assert!((lhs - rhs).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_basics() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        assert_eq!(softmax(&[1000.0, 1000.0]), vec![0.5, 0.5]);
        let p = softmax(&[1.0, 2.0, 3.0]);
        let e: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|z| z.exp()).collect();
        let s: f64 = e.iter().sum();
        for (a, b) in p.iter().zip(&e) {
            assert!((*a as f64 - b / s).abs() < 1e-6);
        }
        assert!((log_softmax_at(&[20.0, -20.0], 1) + 40.0).abs() < 1e-6);
    }
}
