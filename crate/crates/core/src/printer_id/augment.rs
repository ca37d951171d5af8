use rand::Rng;

use crate::nn::{Dims, Tensor};

use super::PiError;

pub const REGION: usize = 96;
pub const BLOCK: usize = 64;

/// Scale and rotation choices for phase-2 training.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentPolicy {
    pub scales: Vec<f64>,
    /// Degrees.
    pub angles: Vec<f64>,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            scales: vec![0.8, 1.0, 1.2],
            angles: vec![-10.0, 0.0, 10.0],
        }
    }
}

impl AugmentPolicy {
    /// Only the untransformed block.
    pub fn identity() -> Self {
        Self {
            scales: vec![1.0],
            angles: vec![0.0],
        }
    }

    pub fn validate(&self) -> Result<(), PiError> {
        if self.scales.is_empty() || self.angles.is_empty() {
            return Err(PiError::Config("augmentation sets must be nonempty".into()));
        }
        if !self.scales.contains(&1.0) || !self.angles.contains(&0.0) {
            return Err(PiError::Config("augmentation sets must contain scale 1 and angle 0".into()));
        }
        for &s in &self.scales {
            check_params(s, 0.0)?;
        }
        for &a in &self.angles {
            check_params(1.0, a)?;
        }
        Ok(())
    }

    /// Independent uniform draw of (scale, angle).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let s = self.scales[rng.gen_range(0..self.scales.len())];
        let a = self.angles[rng.gen_range(0..self.angles.len())];
        (s, a)
    }
}

fn check_params(scale: f64, theta: f64) -> Result<(), PiError> {
    if !(0.5..=2.0).contains(&scale) || !(theta.abs() <= 45.0) {
        return Err(PiError::Transform { scale, theta });
    }
    Ok(())
}

/// Scales by `scale` and rotates by `theta` degrees (counterclockwise on
/// screen) about the image center, sampling `out_h`×`out_w` output pixels
/// around that same center. Bilinear, clamped at the borders.
pub fn warp(img: &Tensor, scale: f64, theta: f64, out_h: usize, out_w: usize) -> Tensor {
    let d = img.dims();
    let (cy, cx) = ((d.h as f64 - 1.0) / 2.0, (d.w as f64 - 1.0) / 2.0);
    let (oy, ox) = ((out_h as f64 - 1.0) / 2.0, (out_w as f64 - 1.0) / 2.0);
    let (sin, cos) = theta.to_radians().sin_cos();
    let inv = 1.0 / scale;
    let mut out = Tensor::zeros(Dims::new(d.n, d.c, out_h, out_w));
    let (hmax, wmax) = (d.h as f64 - 1.0, d.w as f64 - 1.0);
    for y in 0..out_h {
        for x in 0..out_w {
            let (u, v) = (x as f64 - ox, y as f64 - oy);
            // inverse map; y points down, so a counterclockwise turn on
            // screen is clockwise in (u, v)
            let sx = (cos * u - sin * v) * inv + cx;
            let sy = (sin * u + cos * v) * inv + cy;
            let sx = sx.clamp(0.0, wmax);
            let sy = sy.clamp(0.0, hmax);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(d.w - 1), (y0 + 1).min(d.h - 1));
            let (fx, fy) = ((sx - x0 as f64) as f32, (sy - y0 as f64) as f32);
            for n in 0..d.n {
                for c in 0..d.c {
                    let p = img.plane(n, c);
                    let top = p[y0 * d.w + x0] * (1.0 - fx) + p[y0 * d.w + x1] * fx;
                    let bot = p[y1 * d.w + x0] * (1.0 - fx) + p[y1 * d.w + x1] * fx;
                    out.set(n, c, y, x, top * (1.0 - fy) + bot * fy);
                }
            }
        }
    }
    out
}

/// Turns a 96×96 source region into a transformed 64×64 block.
/// The identity transform returns the central crop unchanged.
pub fn augment_block(region: &Tensor, scale: f64, theta: f64) -> Result<Tensor, PiError> {
    check_params(scale, theta)?;
    let d = region.dims();
    if d.h < BLOCK || d.w < BLOCK {
        return Err(PiError::TooSmall(d));
    }
    if scale == 1.0 && theta == 0.0 {
        return Ok(region.crop((d.h - BLOCK) / 2, (d.w - BLOCK) / 2, BLOCK, BLOCK)?);
    }
    Ok(warp(region, scale, theta, BLOCK, BLOCK))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Tensor {
        Tensor::from_fn(Dims::new(1, 3, REGION, REGION), |_, c, y, x| {
            ((x * 3 + y * 7 + c * 11) % 97) as f32 / 97.0
        })
    }

    #[test]
    fn identity_is_the_central_crop() {
        let r = ramp();
        assert_eq!(augment_block(&r, 1.0, 0.0).unwrap(), r.crop(16, 16, 64, 64).unwrap());
        // the general warp agrees too, since every sample lands on a pixel
        assert_eq!(warp(&r, 1.0, 0.0, 64, 64), r.crop(16, 16, 64, 64).unwrap());
    }

    #[test]
    fn rejects_out_of_range() {
        let r = ramp();
        assert!(augment_block(&r, 0.4, 0.0).is_err());
        assert!(augment_block(&r, 1.0, 50.0).is_err());
        assert!(augment_block(&r.crop(0, 0, 40, 40).unwrap(), 1.0, 0.0).is_err());
    }

    #[test]
    fn quarter_turn_moves_right_to_top() {
        let img = Tensor::from_fn(Dims::new(1, 1, 5, 5), |_, _, _, x| x as f32);
        let out = warp(&img, 1.0, 90.0, 5, 5);
        // counterclockwise: the right column (x = 4) ends up as the top row
        for x in 0..5 {
            assert!((out.at(0, 0, 0, x) - 4.0).abs() < 1e-5);
        }
    }

    #[test]
    fn policy_contains_identity() {
        assert!(AugmentPolicy::default().validate().is_ok());
        let p = AugmentPolicy {
            scales: vec![0.8],
            angles: vec![0.0],
        };
        assert!(p.validate().is_err());
    }
}
