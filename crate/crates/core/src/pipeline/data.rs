use rand::seq::{index, SliceRandom};

use crate::halftone::{generate_sample, render_page, VirtualPrinter};
use crate::nn::Tensor;
use crate::printer_id::{RegionSet, BLOCK, REGION};
use crate::seeds;

use super::{PipelineError, RunConfig};

/// Side of the identified part of a page.
pub const PAGE: usize = 512;
/// Extra border rendered around each page so that rotated or scaled views
/// of the central 512×512 never sample outside the print.
pub const MARGIN: usize = 72;
pub const PAGE_WITH_MARGIN: usize = PAGE + 2 * MARGIN;

pub(crate) const TAG_GAN_SYNTH: u64 = 101;
pub(crate) const TAG_GAN_REAL: u64 = 102;
pub(crate) const TAG_HCD_TRAIN: u64 = 103;
pub(crate) const TAG_HCD_EVAL: u64 = 104;
pub(crate) const TAG_PAGES: u64 = 105;

/// The run's printers as seen by the synthetic renderer.
pub fn synthetic_printers(cfg: &RunConfig) -> Result<Vec<VirtualPrinter>, PipelineError> {
    Ok(VirtualPrinter::family(cfg.printers)?
        .into_iter()
        .map(|p| p.with_camera(cfg.synth_blur, cfg.synth_noise, cfg.synth_slope))
        .collect())
}

/// The same printers as seen by the stand-in camera.
pub fn photographed_printers(cfg: &RunConfig) -> Result<Vec<VirtualPrinter>, PipelineError> {
    Ok(VirtualPrinter::family(cfg.printers)?
        .into_iter()
        .map(|p| p.with_camera(cfg.real_blur, cfg.real_noise, cfg.real_slope))
        .collect())
}

/// `n` 64×64 samples cycling through `printers`: (rgb, cmyk, content seeds).
pub fn sample_set(
    printers: &[VirtualPrinter],
    n: usize,
    stream: u64,
) -> Result<(Tensor, Tensor, Vec<u64>), PipelineError> {
    let mut rgb = Vec::with_capacity(n);
    let mut cmyk = Vec::with_capacity(n);
    let mut keys = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let p = &printers[i as usize % printers.len()];
        let s = generate_sample(p, seeds::derive(stream, 2 * i), seeds::derive(stream, 2 * i + 1));
        keys.push(s.content_seed);
        rgb.push(s.rgb);
        cmyk.push(s.cmyk);
    }
    Ok((Tensor::stack(&rgb)?, Tensor::stack(&cmyk)?, keys))
}

/// Synthetic and photographed image sets for refiner training. The two
/// sets use unrelated content.
pub fn gan_sets(cfg: &RunConfig) -> Result<(Tensor, Tensor), PipelineError> {
    let synth = sample_set(
        &synthetic_printers(cfg)?,
        cfg.gan_samples,
        seeds::derive(cfg.seed, TAG_GAN_SYNTH),
    )?;
    let real = sample_set(
        &photographed_printers(cfg)?,
        cfg.gan_samples,
        seeds::derive(cfg.seed, TAG_GAN_REAL),
    )?;
    Ok((synth.0, real.0))
}

/// Identity of one photographed page.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PageRef {
    pub printer: usize,
    pub content_seed: u64,
    pub noise_seed: u64,
}

/// `pages_per_printer` pages for every printer, grouped by printer.
pub fn page_catalog(cfg: &RunConfig) -> Vec<PageRef> {
    let stream = seeds::derive(cfg.seed, TAG_PAGES);
    let mut out = Vec::with_capacity(cfg.printers * cfg.pages_per_printer);
    for printer in 0..cfg.printers {
        for k in 0..cfg.pages_per_printer {
            let i = (printer * cfg.pages_per_printer + k) as u64;
            out.push(PageRef {
                printer,
                content_seed: seeds::derive(stream, 2 * i),
                noise_seed: seeds::derive(stream, 2 * i + 1),
            });
        }
    }
    out
}

/// Photograph of a page including its margin: (1, 3, 656, 656).
pub fn render_photo(printers: &[VirtualPrinter], page: &PageRef) -> Tensor {
    render_page(
        &printers[page.printer],
        PAGE_WITH_MARGIN,
        PAGE_WITH_MARGIN,
        page.content_seed,
        page.noise_seed,
    )
    .0
}

/// 96×96 regions centred on the 64×64 blocks of the listed pages. With
/// `per_page < 64` a seeded subset of each page's blocks is used.
pub fn region_set(
    printers: &[VirtualPrinter],
    pages: &[PageRef],
    per_page: usize,
    seed: u64,
) -> Result<RegionSet, PipelineError> {
    let mut rng = seeds::rng(seed);
    let per_side = PAGE / BLOCK;
    let pad = (REGION - BLOCK) / 2;
    let mut regions = Vec::with_capacity(pages.len() * per_page);
    let mut labels = Vec::with_capacity(pages.len() * per_page);
    for page in pages {
        let photo = render_photo(printers, page);
        let mut chosen = index::sample(&mut rng, per_side * per_side, per_page.min(per_side * per_side)).into_vec();
        chosen.sort_unstable();
        for b in chosen {
            let (by, bx) = (b / per_side, b % per_side);
            let y = MARGIN + by * BLOCK - pad;
            let x = MARGIN + bx * BLOCK - pad;
            regions.push(photo.crop(y, x, REGION, REGION)?);
            labels.push(page.printer);
        }
    }
    Ok(RegionSet::new(Tensor::stack(&regions)?, labels)?)
}

/// One train/validation/test assignment of item indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CvSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Two-fold cross-validation with the held-out half of each fold split
/// into validation and test quarters, used both ways round. Returns four
/// configurations; every class is divided separately.
pub fn crossval_split(labels: &[usize], seed: u64) -> Result<Vec<CvSplit>, PipelineError> {
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut rng = seeds::rng(seed);
    let mut halves = [Vec::new(), Vec::new()];
    let mut quarters = [[Vec::new(), Vec::new()], [Vec::new(), Vec::new()]];
    for c in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.len() < 4 {
            return Err(PipelineError::TooFewImages { class: c, found: idx.len() });
        }
        idx.shuffle(&mut rng);
        let (a, b) = idx.split_at(idx.len() / 2);
        for (h, part) in [a, b].into_iter().enumerate() {
            halves[h].extend_from_slice(part);
            let (q0, q1) = part.split_at(part.len() / 2);
            quarters[h][0].extend_from_slice(q0);
            quarters[h][1].extend_from_slice(q1);
        }
    }
    let mut out = Vec::with_capacity(4);
    for (train, held) in [(0, 1), (1, 0)] {
        for (v, t) in [(0, 1), (1, 0)] {
            out.push(CvSplit {
                train: halves[train].clone(),
                val: quarters[held][v].clone(),
                test: quarters[held][t].clone(),
            });
        }
    }
    Ok(out)
}
