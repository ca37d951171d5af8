//! Smooth pseudo-random coverage maps standing in for printed document content.

use crate::nn::{Dims, Tensor};

use super::screen::lattice_hash;

/// Lattice spacing (pixels) of the coarse noise octave.
pub const CONTENT_SCALE: f64 = 24.0;

/// Coverage range per ink: chromatic inks vary widely, black stays light
/// so that the colour layers remain visible underneath it.
const RANGES: [(f32, f32); 4] = [(0.05, 0.85), (0.05, 0.85), (0.05, 0.85), (0.0, 0.45)];

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(seed: u64, salt: u64, x: f64, y: f64, scale: f64) -> f64 {
    let (gx, gy) = (x / scale, y / scale);
    let (ix, iy) = (gx.floor(), gy.floor());
    let (fx, fy) = (smooth(gx - ix), smooth(gy - iy));
    let (ix, iy) = (ix as i64, iy as i64);
    let v = |i, j| 0.5 * (lattice_hash(seed, i, j, salt) + 1.0);
    let top = v(ix, iy) * (1.0 - fx) + v(ix + 1, iy) * fx;
    let bot = v(ix, iy + 1) * (1.0 - fx) + v(ix + 1, iy + 1) * fx;
    top * (1.0 - fy) + bot * fy
}

/// Four coverage planes (C, M, Y, K) of size `h`×`w`, shape (1, 4, h, w).
pub fn coverage_field(seed: u64, h: usize, w: usize) -> Tensor {
    let mut out = Tensor::zeros(Dims::new(1, 4, h, w));
    for (ch, &(lo, hi)) in RANGES.iter().enumerate() {
        let salt = 0x100 + ch as u64;
        let plane = out.plane_mut(0, ch);
        for y in 0..h {
            for x in 0..w {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let v = 0.7 * value_noise(seed, salt, px, py, CONTENT_SCALE)
                    + 0.3 * value_noise(seed, salt + 0x10, px, py, CONTENT_SCALE / 2.0);
                // stretch the centre-heavy distribution towards the full range
                let v = (0.5 + 1.6 * (v - 0.5)).clamp(0.0, 1.0) as f32;
                plane[y * w + x] = lo + (hi - lo) * v;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_is_deterministic_and_bounded() {
        let a = coverage_field(5, 64, 64);
        assert_eq!(a, coverage_field(5, 64, 64));
        assert_ne!(a, coverage_field(6, 64, 64));
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn crops_agree_with_larger_fields() {
        let big = coverage_field(9, 96, 96);
        let small = coverage_field(9, 64, 64);
        assert_eq!(big.crop(0, 0, 64, 64).unwrap(), small);
    }

    #[test]
    fn blocks_have_tonal_variation() {
        let f = coverage_field(11, 64, 64);
        for ch in 0..3 {
            let p = f.plane(0, ch);
            let (mn, mx) = p.iter().fold((1.0f32, 0.0f32), |(a, b), &v| (a.min(v), b.max(v)));
            assert!(mx - mn > 0.1, "channel {ch} flat: {mn}..{mx}");
        }
    }
}
