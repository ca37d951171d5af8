use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::nn::{Dims, Tensor};

use super::{SynthError, MIN_PITCH};
use crate::seeds::splitmix64;

/// One ink channel's halftone screen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScreenConfig {
    angle: f64,
    pitch: f64,
    dot_gain: f64,
}

impl ScreenConfig {
    /// `angle` in degrees (normalized to [0, 180)), `pitch` is the dot-cell
    /// size in pixels, `dot_gain` in [-0.2, 0.2] scales dot radii by `1 + gain`.
    pub fn new(angle: f64, pitch: f64, dot_gain: f64) -> Result<Self, SynthError> {
        if !(pitch >= MIN_PITCH) {
            return Err(SynthError::PitchTooSmall(pitch));
        }
        if !(-0.2..=0.2).contains(&dot_gain) {
            return Err(SynthError::DotGain(dot_gain));
        }
        if !angle.is_finite() {
            return Err(SynthError::Angle(angle));
        }
        Ok(Self {
            angle: angle.rem_euclid(180.0),
            pitch,
            dot_gain,
        })
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn dot_gain(&self) -> f64 {
        self.dot_gain
    }
}

/// Fraction of a unit cell covered by a centered disc of radius `r`.
pub fn disc_cell_area(r: f64) -> f64 {
    if r <= 0.5 {
        PI * r * r
    } else if r >= FRAC_1_SQRT_2 {
        1.0
    } else {
        // disc minus the four caps that spill over the cell edges
        let cap = r * r * (0.5 / r).acos() - 0.5 * (r * r - 0.25).sqrt();
        PI * r * r - 4.0 * cap
    }
}

/// Uniform value in [-1, 1) keyed by a seed and two lattice coordinates.
pub(crate) fn lattice_hash(seed: u64, i: i64, j: i64, salt: u64) -> f64 {
    let h = splitmix64(
        seed ^ splitmix64((i as u64).wrapping_mul(0x9E37_79B1) ^ splitmix64((j as u64) ^ salt)),
    );
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// Clustered-dot ordered screening of one coverage plane.
///
/// Pixels are mapped into the rotated dot lattice; each cell holds one round
/// dot whose area fraction equals the local coverage. Dot centers are
/// displaced by up to `jitter` cell widths, drawn per dot from `seed`.
pub fn halftone_channel(
    coverage: &Tensor,
    screen: &ScreenConfig,
    jitter: f64,
    seed: u64,
) -> Result<Tensor, SynthError> {
    let d = coverage.dims();
    if d.n != 1 || d.c != 1 {
        return Err(SynthError::PlaneShape(d));
    }
    if screen.pitch < MIN_PITCH {
        return Err(SynthError::PitchTooSmall(screen.pitch));
    }
    let (sin, cos) = screen.angle.to_radians().sin_cos();
    let inv_pitch = 1.0 / screen.pitch;
    let grow = 1.0 + screen.dot_gain;
    let mut out = Tensor::zeros(Dims::new(1, 1, d.h, d.w));
    let cov = coverage.data();
    let dst = out.data_mut();
    for y in 0..d.h {
        let py = y as f64 + 0.5;
        for x in 0..d.w {
            let c = cov[y * d.w + x] as f64;
            let ink = if c >= 1.0 {
                true
            } else if c <= 0.0 {
                false
            } else {
                let px = x as f64 + 0.5;
                let u = (px * cos + py * sin) * inv_pitch;
                let v = (-px * sin + py * cos) * inv_pitch;
                let (i, j) = (u.floor(), v.floor());
                let (mut cu, mut cv) = (i + 0.5, j + 0.5);
                if jitter > 0.0 {
                    cu += jitter * lattice_hash(seed, i as i64, j as i64, 1);
                    cv += jitter * lattice_hash(seed, i as i64, j as i64, 2);
                }
                let r = ((u - cu).powi(2) + (v - cv).powi(2)).sqrt() / grow;
                disc_cell_area(r) < c
            };
            dst[y * d.w + x] = if ink { 1.0 } else { 0.0 };
        }
    }
    Ok(out)
}
