use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::nn::Tensor;

use super::VirtualPrinter;

/// Normalized 1-D Gaussian kernel of radius `ceil(3σ)`.
fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as usize;
    let w: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| (v / s) as f32).collect()
}

/// Separable Gaussian blur of every plane, clamping at the borders.
pub fn gaussian_blur(img: &Tensor, sigma: f64) -> Tensor {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let d = img.dims();
    let (h, w) = (d.h as isize, d.w as isize);
    let mut out = img.clone();
    let mut tmp = vec![0.0f32; d.plane_len()];
    for n in 0..d.n {
        for c in 0..d.c {
            let src = img.plane(n, c);
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for (i, kv) in k.iter().enumerate() {
                        let xx = (x + i as isize - r).clamp(0, w - 1);
                        acc += kv * src[(y * w + xx) as usize];
                    }
                    tmp[(y * w + x) as usize] = acc;
                }
            }
            let dst = out.plane_mut(n, c);
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for (i, kv) in k.iter().enumerate() {
                        let yy = (y + i as isize - r).clamp(0, h - 1);
                        acc += kv * tmp[(yy * w + x) as usize];
                    }
                    dst[(y * w + x) as usize] = acc;
                }
            }
        }
    }
    out
}

/// Simulates photographing a print: blur, then a left-to-right illumination
/// ramp (additive, spanning `illumination_slope` from the first to the last
/// column), then Gaussian sensor noise; the result is clamped to [0, 1].
pub fn camera_degrade(rgb: &Tensor, printer: &VirtualPrinter, seed: u64) -> Tensor {
    let mut out = gaussian_blur(rgb, printer.blur_sigma);
    let d = out.dims();
    if printer.illumination_slope != 0.0 && d.w > 1 {
        let slope = printer.illumination_slope;
        let ramp: Vec<f32> = (0..d.w)
            .map(|x| (slope * (x as f64 / (d.w - 1) as f64 - 0.5)) as f32)
            .collect();
        for n in 0..d.n {
            for c in 0..d.c {
                for row in out.plane_mut(n, c).chunks_exact_mut(d.w) {
                    for (v, r) in row.iter_mut().zip(&ramp) {
                        *v += r;
                    }
                }
            }
        }
    }
    if printer.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f32, printer.noise_sigma as f32).expect("positive sigma");
        for v in out.data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    out.map_inplace(|v| v.clamp(0.0, 1.0));
    out
}
