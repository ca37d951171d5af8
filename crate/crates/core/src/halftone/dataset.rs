//! On-disk dataset layout.
//!
//! ```text
//! <root>/manifest.tsv
//! <root>/printer_<id>/sample_<n>.png        8-bit RGB
//! <root>/printer_<id>/sample_<n>.cmyk.png   8-bit C, M, Y, K in the R, G, B, A channels
//! ```
//!
//! `manifest.tsv` has a header row followed by one row per image:
//! relative path, printer id, content seed, noise seed.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Rgb, Rgba};
use thiserror::Error;

use crate::nn::{Dims, Tensor};

use super::SyntheticSample;

pub const MANIFEST: &str = "manifest.tsv";
const HEADER: &str = "path\tprinter_id\tcontent_seed\tnoise_seed";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("{0}: expected {1} channels")]
    Channels(PathBuf, usize),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Path of the RGB image relative to the dataset root.
    pub path: String,
    pub printer_id: u32,
    pub content_seed: u64,
    pub noise_seed: u64,
}

impl ManifestEntry {
    /// Relative path of the CMYK ground truth belonging to this entry.
    pub fn cmyk_path(&self) -> String {
        cmyk_path_for(&self.path)
    }
}

pub fn cmyk_path_for(rgb_path: &str) -> String {
    match rgb_path.strip_suffix(".png") {
        Some(stem) => format!("{stem}.cmyk.png"),
        None => format!("{rgb_path}.cmyk.png"),
    }
}

pub fn write_manifest(root: &Path, entries: &[ManifestEntry]) -> Result<(), DatasetError> {
    let mut s = String::from(HEADER);
    s.push('\n');
    for e in entries {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            e.path, e.printer_id, e.content_seed, e.noise_seed
        ));
    }
    let path = root.join(MANIFEST);
    fs::write(&path, s).map_err(io_err(&path))
}

pub fn read_manifest(root: &Path) -> Result<Vec<ManifestEntry>, DatasetError> {
    let path = root.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != HEADER {
                return Err(DatasetError::Manifest {
                    line: 1,
                    reason: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| DatasetError::Manifest {
            line: i + 1,
            reason: reason.to_string(),
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(bad("expected 4 columns"));
        }
        out.push(ManifestEntry {
            path: cols[0].to_string(),
            printer_id: cols[1].parse().map_err(|_| bad("bad printer id"))?,
            content_seed: cols[2].parse().map_err(|_| bad("bad content seed"))?,
            noise_seed: cols[3].parse().map_err(|_| bad("bad noise seed"))?,
        });
    }
    Ok(out)
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes batch item 0 of a 3-channel tensor as an 8-bit RGB PNG.
pub fn save_rgb_png(t: &Tensor, path: &Path) -> Result<(), DatasetError> {
    let d = t.dims();
    if d.c != 3 {
        return Err(DatasetError::Channels(path.to_path_buf(), 3));
    }
    let img = ImageBuffer::from_fn(d.w as u32, d.h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Rgb([to_u8(t.at(0, 0, y, x)), to_u8(t.at(0, 1, y, x)), to_u8(t.at(0, 2, y, x))])
    });
    img.save(path).map_err(|source| DatasetError::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes batch item 0 of a 4-channel tensor as an 8-bit RGBA PNG.
pub fn save_cmyk_png(t: &Tensor, path: &Path) -> Result<(), DatasetError> {
    let d = t.dims();
    if d.c != 4 {
        return Err(DatasetError::Channels(path.to_path_buf(), 4));
    }
    let img = ImageBuffer::from_fn(d.w as u32, d.h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Rgba([
            to_u8(t.at(0, 0, y, x)),
            to_u8(t.at(0, 1, y, x)),
            to_u8(t.at(0, 2, y, x)),
            to_u8(t.at(0, 3, y, x)),
        ])
    });
    img.save(path).map_err(|source| DatasetError::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn open(path: &Path) -> Result<image::DynamicImage, DatasetError> {
    image::open(path).map_err(|source| DatasetError::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads any PNG as a (1, 3, h, w) tensor in [0, 1].
pub fn load_rgb_png(path: &Path) -> Result<Tensor, DatasetError> {
    let img = open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Tensor::from_fn(Dims::new(1, 3, h, w), |_, c, y, x| {
        img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    }))
}

pub fn load_cmyk_png(path: &Path) -> Result<Tensor, DatasetError> {
    let img = open(path)?.to_rgba8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Tensor::from_fn(Dims::new(1, 4, h, w), |_, c, y, x| {
        img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    }))
}

/// Relative path for image `n` of printer `printer_id` with the given stem.
pub fn image_path(printer_id: u32, stem: &str, n: usize) -> String {
    format!("printer_{printer_id}/{stem}_{n}.png")
}

/// Writes samples (RGB + CMYK ground truth) and their manifest under `root`.
pub fn write_samples(root: &Path, samples: &[SyntheticSample]) -> Result<Vec<ManifestEntry>, DatasetError> {
    let mut entries = Vec::with_capacity(samples.len());
    for (n, s) in samples.iter().enumerate() {
        let rel = image_path(s.printer_id, "sample", n);
        let full = root.join(&rel);
        if let Some(dir) = full.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        save_rgb_png(&s.rgb, &full)?;
        save_cmyk_png(&s.cmyk, &root.join(cmyk_path_for(&rel)))?;
        entries.push(ManifestEntry {
            path: rel,
            printer_id: s.printer_id,
            content_seed: s.content_seed,
            noise_seed: s.noise_seed,
        });
    }
    write_manifest(root, &entries)?;
    Ok(entries)
}

/// Loads every manifest entry with its RGB image and, when present, its CMYK planes.
pub fn read_samples(root: &Path) -> Result<Vec<(ManifestEntry, Tensor, Option<Tensor>)>, DatasetError> {
    read_manifest(root)?
        .into_iter()
        .map(|e| {
            let rgb = load_rgb_png(&root.join(&e.path))?;
            let cpath = root.join(e.cmyk_path());
            let cmyk = if cpath.exists() {
                Some(load_cmyk_png(&cpath)?)
            } else {
                None
            };
            Ok((e, rgb, cmyk))
        })
        .collect()
}
