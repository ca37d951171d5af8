//! Image quality metrics for values in [0, 1].

use thiserror::Error;

use crate::nn::{Dims, Tensor};

/// Returned by [`psnr`] for identical inputs.
pub const PSNR_CAP_DB: f64 = 99.0;
pub const SSIM_WINDOW: usize = 8;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("dims differ: {0} vs {1}")]
    DimMismatch(Dims, Dims),
    #[error("planes of {0} are smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")]
    TooSmall(Dims),
    #[error("empty input")]
    Empty,
}

fn check(a: &Tensor, b: &Tensor) -> Result<(), MetricError> {
    if a.dims() != b.dims() {
        return Err(MetricError::DimMismatch(a.dims(), b.dims()));
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB over all elements, peak 1.
pub fn psnr(a: &Tensor, b: &Tensor) -> Result<f64, MetricError> {
    check(a, b)?;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Summed-area table with a zero first row and column.
struct Integral {
    w: usize,
    s: Vec<f64>,
}

impl Integral {
    fn new(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let w1 = w + 1;
        let mut s = vec![0.0; (h + 1) * w1];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += f(y, x);
                s[(y + 1) * w1 + x + 1] = s[y * w1 + x + 1] + row;
            }
        }
        Self { w: w1, s }
    }

    fn window(&self, y: usize, x: usize, k: usize) -> f64 {
        let w = self.w;
        self.s[(y + k) * w + x + k] - self.s[y * w + x + k] - self.s[(y + k) * w + x]
            + self.s[y * w + x]
    }
}

/// Single-scale SSIM of two planes of size `h`×`w` (row-major), averaged
/// over every 8×8 window position (stride 1). Window statistics use
/// population variances.
pub fn ssim_plane(a: &[f32], b: &[f32], h: usize, w: usize) -> f64 {
    let k = SSIM_WINDOW;
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let at = |y: usize, x: usize| a[y * w + x] as f64;
    let bt = |y: usize, x: usize| b[y * w + x] as f64;
    let sa = Integral::new(h, w, at);
    let sb = Integral::new(h, w, bt);
    let saa = Integral::new(h, w, |y, x| at(y, x) * at(y, x));
    let sbb = Integral::new(h, w, |y, x| bt(y, x) * bt(y, x));
    let sab = Integral::new(h, w, |y, x| at(y, x) * bt(y, x));
    let n = (k * k) as f64;
    let mut total = 0.0;
    for y in 0..=h - k {
        for x in 0..=w - k {
            let ma = sa.window(y, x, k) / n;
            let mb = sb.window(y, x, k) / n;
            let va = (saa.window(y, x, k) / n - ma * ma).max(0.0);
            let vb = (sbb.window(y, x, k) / n - mb * mb).max(0.0);
            let cov = sab.window(y, x, k) / n - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    total / ((h - k + 1) * (w - k + 1)) as f64
}

/// Mean SSIM over all (batch, channel) planes.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64, MetricError> {
    check(a, b)?;
    let d = a.dims();
    if d.h < SSIM_WINDOW || d.w < SSIM_WINDOW {
        return Err(MetricError::TooSmall(d));
    }
    let mut total = 0.0;
    for n in 0..d.n {
        for c in 0..d.c {
            total += ssim_plane(a.plane(n, c), b.plane(n, c), d.h, d.w);
        }
    }
    Ok(total / (d.n * d.c) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(v: f32) -> Tensor {
        Tensor::filled(Dims::new(1, 1, 16, 16), v)
    }

    #[test]
    fn psnr_closed_forms() {
        assert_eq!(psnr(&plane(0.3), &plane(0.3)).unwrap(), PSNR_CAP_DB);
        let p = psnr(&plane(0.2), &plane(0.3)).unwrap();
        assert!((p - 20.0).abs() < 1e-4, "{p}");
    }

    #[test]
    fn ssim_constant_images() {
        assert!((ssim(&plane(0.4), &plane(0.4)).unwrap() - 1.0).abs() < 1e-12);
        let c1 = SSIM_K1 * SSIM_K1;
        let s = ssim(&plane(0.0), &plane(1.0)).unwrap();
        assert!((s - c1 / (1.0 + c1)).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let small = Tensor::zeros(Dims::new(1, 1, 4, 4));
        assert!(matches!(ssim(&small, &small), Err(MetricError::TooSmall(_))));
        assert!(matches!(psnr(&small, &plane(0.0)), Err(MetricError::DimMismatch(..))));
    }
}
