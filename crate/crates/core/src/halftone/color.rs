use crate::nn::{Dims, Tensor};

use super::SynthError;

/// Subtractive mixing of C, M, Y, K coverage planes into RGB.
///
/// `R = (1 − C)(1 − K)`, `G = (1 − M)(1 − K)`, `B = (1 − Y)(1 − K)`.
pub fn cmyk_to_rgb(cmyk: &Tensor) -> Result<Tensor, SynthError> {
    let d = cmyk.dims();
    if d.c != 4 {
        return Err(SynthError::Channels { expected: 4, dims: d });
    }
    let mut rgb = Tensor::zeros(Dims::new(d.n, 3, d.h, d.w));
    for n in 0..d.n {
        let k = cmyk.plane(n, 3);
        for ch in 0..3 {
            let ink = cmyk.plane(n, ch);
            for ((o, &i), &kk) in rgb.plane_mut(n, ch).iter_mut().zip(ink).zip(k) {
                *o = ((1.0 - i) * (1.0 - kk)).clamp(0.0, 1.0);
            }
        }
    }
    Ok(rgb)
}

/// Textbook RGB → CMYK separation used as the non-learned baseline.
///
/// `K = min(1 − R, 1 − G, 1 − B)`, `C = ((1 − R) − K) / (1 − K)` and so on;
/// where `K = 1` the chromatic channels are zero.
pub fn naive_profile_decompose(rgb: &Tensor) -> Result<Tensor, SynthError> {
    let d = rgb.dims();
    if d.c != 3 {
        return Err(SynthError::Channels { expected: 3, dims: d });
    }
    let mut out = Tensor::zeros(Dims::new(d.n, 4, d.h, d.w));
    let plane = d.plane_len();
    for n in 0..d.n {
        let src = rgb.sample(n);
        let dst = out.sample_mut(n);
        for i in 0..plane {
            let inv = [
                1.0 - src[i].clamp(0.0, 1.0),
                1.0 - src[plane + i].clamp(0.0, 1.0),
                1.0 - src[2 * plane + i].clamp(0.0, 1.0),
            ];
            let k = inv[0].min(inv[1]).min(inv[2]);
            let sep = if k >= 1.0 {
                [0.0, 0.0, 0.0, 1.0]
            } else {
                let s = 1.0 / (1.0 - k);
                [(inv[0] - k) * s, (inv[1] - k) * s, (inv[2] - k) * s, k]
            };
            for (ch, v) in sep.iter().enumerate() {
                dst[ch * plane + i] = v.clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}
