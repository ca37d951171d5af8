//! Synthetic color laser prints.
//!
//! A [`VirtualPrinter`] bundles four halftone screens with a camera model.
//! Rendering draws smooth coverage maps, screens each ink with a rotated
//! clustered-dot lattice, mixes the inks into RGB and finally "photographs"
//! the result. The screened CMYK planes are kept as ground truth.

mod camera;
mod color;
mod content;
pub mod dataset;
mod screen;

use thiserror::Error;

use crate::nn::{Dims, Tensor};

pub use camera::{camera_degrade, gaussian_blur};
pub use color::{cmyk_to_rgb, naive_profile_decompose};
pub use content::{coverage_field, CONTENT_SCALE};
pub use screen::{disc_cell_area, halftone_channel, ScreenConfig};

use crate::seeds::splitmix64;

/// Smallest dot pitch (pixels) for which a dot is still resolvable.
pub const MIN_PITCH: f64 = 2.0;

/// Conventional screen angles for C, M, Y, K in degrees.
pub const DEFAULT_ANGLES: [f64; 4] = [15.0, 75.0, 0.0, 45.0];

pub const BLOCK: usize = 64;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("dot pitch {0} is below the 2-pixel minimum")]
    PitchTooSmall(f64),
    #[error("dot gain {0} outside [-0.2, 0.2]")]
    DotGain(f64),
    #[error("screen angle {0} is not finite")]
    Angle(f64),
    #[error("expected a single plane, got {0}")]
    PlaneShape(Dims),
    #[error("expected {expected} channels, got {dims}")]
    Channels { expected: usize, dims: Dims },
    #[error("printers {0} and {1} share the same screen signature")]
    NotIdentifiable(u32, u32),
    #[error("no printer preset {0}; presets exist for ids 0..8")]
    UnknownPreset(u32),
}

/// Parameterized printing + photographing signature.
#[derive(Clone, Debug, PartialEq)]
pub struct VirtualPrinter {
    pub id: u32,
    /// C, M, Y, K screens.
    pub screens: [ScreenConfig; 4],
    pub blur_sigma: f64,
    pub noise_sigma: f64,
    /// Additive brightness change from the left to the right image edge.
    pub illumination_slope: f64,
    /// Dot-center displacement scale in cell widths.
    pub geometric_jitter: f64,
}

/// (angle offset, pitch, jitter, dot gain) of the built-in printers.
///
/// Presets come in pairs sharing a pitch but with screens rotated 30° apart;
/// 6 and 7 reuse the screens of 0 and 3 and differ only in jitter, like two
/// units of the same model.
const PRESETS: [(f64, f64, f64, f64); 8] = [
    (0.0, 4.0, 0.04, 0.0),
    (30.0, 4.0, 0.04, 0.05),
    (0.0, 7.0, 0.08, -0.05),
    (30.0, 7.0, 0.08, 0.0),
    (15.0, 5.5, 0.02, 0.1),
    (45.0, 5.5, 0.10, -0.1),
    (0.0, 4.0, 0.15, 0.0),
    (30.0, 7.0, 0.15, 0.05),
];

impl VirtualPrinter {
    pub fn new(
        id: u32,
        angle_offset: f64,
        pitch: f64,
        jitter: f64,
        dot_gain: f64,
    ) -> Result<Self, SynthError> {
        let mut screens = [ScreenConfig::new(0.0, pitch, dot_gain)?; 4];
        for (s, base) in screens.iter_mut().zip(DEFAULT_ANGLES) {
            *s = ScreenConfig::new(base + angle_offset, pitch, dot_gain)?;
        }
        Ok(Self {
            id,
            screens,
            blur_sigma: 0.8,
            noise_sigma: 0.02,
            illumination_slope: 0.05,
            geometric_jitter: jitter,
        })
    }

    /// One of eight built-in printers.
    pub fn try_preset(id: u32) -> Result<Self, SynthError> {
        let &(off, pitch, jitter, gain) = PRESETS
            .get(id as usize)
            .ok_or(SynthError::UnknownPreset(id))?;
        Self::new(id, off, pitch, jitter, gain)
    }

    /// Panics for ids ≥ 8.
    pub fn preset(id: u32) -> Self {
        Self::try_preset(id).expect("preset id below 8")
    }

    /// The first `n` presets.
    pub fn family(n: usize) -> Result<Vec<Self>, SynthError> {
        (0..n as u32).map(Self::try_preset).collect()
    }

    /// Same printer seen through a different camera.
    pub fn with_camera(&self, blur_sigma: f64, noise_sigma: f64, illumination_slope: f64) -> Self {
        Self {
            blur_sigma,
            noise_sigma,
            illumination_slope,
            ..self.clone()
        }
    }

    fn signature(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self
            .screens
            .iter()
            .flat_map(|sc| [sc.angle().to_bits(), sc.pitch().to_bits()])
            .collect();
        s.push(self.geometric_jitter.to_bits());
        s
    }
}

/// Fails if two printers share every screen angle, pitch and jitter.
pub fn check_identifiable(printers: &[VirtualPrinter]) -> Result<(), SynthError> {
    for (i, a) in printers.iter().enumerate() {
        for b in &printers[i + 1..] {
            if a.signature() == b.signature() {
                return Err(SynthError::NotIdentifiable(a.id, b.id));
            }
        }
    }
    Ok(())
}

/// A 64×64 RGB block with its exact CMYK ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    /// (1, 3, 64, 64), camera-degraded.
    pub rgb: Tensor,
    /// (1, 4, 64, 64), the screened planes the RGB was mixed from.
    pub cmyk: Tensor,
    pub printer_id: u32,
    pub content_seed: u64,
    pub noise_seed: u64,
}

/// Screens fresh content with the printer's screens; returns the CMYK planes
/// and their mixed RGB before any camera effects.
pub fn render_clean(
    printer: &VirtualPrinter,
    h: usize,
    w: usize,
    content_seed: u64,
    noise_seed: u64,
) -> (Tensor, Tensor) {
    let coverage = coverage_field(content_seed, h, w);
    let mut cmyk = Tensor::zeros(Dims::new(1, 4, h, w));
    for (ch, screen) in printer.screens.iter().enumerate() {
        let plane = Tensor::from_vec(Dims::new(1, 1, h, w), coverage.plane(0, ch).to_vec())
            .expect("plane dims");
        let seed = splitmix64(noise_seed ^ (0x5C4E_E000 + ch as u64));
        let screened = halftone_channel(&plane, screen, printer.geometric_jitter, seed)
            .expect("screens are validated at construction");
        cmyk.plane_mut(0, ch).copy_from_slice(screened.data());
    }
    let rgb = cmyk_to_rgb(&cmyk).expect("four planes");
    (cmyk, rgb)
}

/// Renders and photographs an `h`×`w` page. Returns (rgb, cmyk).
pub fn render_page(
    printer: &VirtualPrinter,
    h: usize,
    w: usize,
    content_seed: u64,
    noise_seed: u64,
) -> (Tensor, Tensor) {
    let (cmyk, clean) = render_clean(printer, h, w, content_seed, noise_seed);
    let rgb = camera_degrade(&clean, printer, splitmix64(noise_seed ^ 0xCA3E_7A00));
    (rgb, cmyk)
}

pub fn generate_sample(printer: &VirtualPrinter, content_seed: u64, noise_seed: u64) -> SyntheticSample {
    let (rgb, cmyk) = render_page(printer, BLOCK, BLOCK, content_seed, noise_seed);
    SyntheticSample {
        rgb,
        cmyk,
        printer_id: printer.id,
        content_seed,
        noise_seed,
    }
}
