//! End-to-end experiment: refiner, decomposition network, two-phase printer
//! identification, then reports.

mod config;
mod data;
mod report;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::decompose::{evaluate_decomposition, train_hcd, DecomposeError, DecompositionReport, TrainedHcd};
use crate::gan::{refine, train_refiner, GanError, TrainedGan};
use crate::halftone::dataset::DatasetError;
use crate::halftone::SynthError;
use crate::nn::{load_checkpoint, save_checkpoint, CheckpointError, NetworkParams, NetworkSpec, NnError, Tensor};
use crate::printer_id::{
    argmax, block_scores, train_phase1, train_phase2, transfer_init, warp, PiError, RegionSet, TrainedPi,
    TransferMap,
};
use crate::seeds;

pub use crate::metrics::{psnr, ssim};
pub use config::{ConfigError, RunConfig, KEYS};
pub use data::{
    crossval_split, gan_sets, page_catalog, photographed_printers, region_set, render_photo, sample_set,
    synthetic_printers, CvSplit, PageRef, MARGIN, PAGE, PAGE_WITH_MARGIN,
};
pub use report::{robustness_tsv, Axis, ConfusionMatrix, RobustnessCurve, RobustnessPoint, ROTATIONS, SCALES};

use data::{TAG_HCD_EVAL, TAG_HCD_TRAIN};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error(transparent)]
    Pi(#[from] PiError),
    #[error("{path}: {source}")]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: CheckpointError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("printer {class} has {found} images; cross-validation needs at least 4")]
    TooFewImages { class: usize, found: usize },
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<PipelineError>,
    },
}

fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T, PipelineError>) -> Result<T, PipelineError> {
    log::info!("stage {name}");
    f().map_err(|e| PipelineError::Stage {
        stage: name,
        source: Box::new(e),
    })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_file(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_params(params: &NetworkParams, path: &Path) -> Result<(), PipelineError> {
    save_checkpoint(params, path).map_err(|source| PipelineError::Checkpoint {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_params(path: &Path) -> Result<NetworkParams, PipelineError> {
    load_checkpoint(path).map_err(|source| PipelineError::Checkpoint {
        path: path.to_path_buf(),
        source,
    })
}

/// Central 512×512 view of a page photographed at `scale` and `theta`
/// degrees.
pub fn view(page: &Tensor, scale: f64, theta: f64) -> Tensor {
    warp(page, scale, theta, PAGE, PAGE)
}

/// Image- and block-level results over a labeled image set.
#[derive(Clone, Debug, PartialEq)]
pub struct Identification {
    pub confusion: ConfusionMatrix,
    pub blocks_correct: u64,
    pub blocks_total: u64,
}

impl Identification {
    pub fn accuracy(&self) -> f64 {
        self.confusion.accuracy()
    }

    pub fn block_accuracy(&self) -> f64 {
        match self.blocks_total {
            0 => 0.0,
            t => self.blocks_correct as f64 / t as f64,
        }
    }
}

/// Identifies every `(image, printer)` pair by block averaging.
pub fn evaluate_identification(
    spec: &NetworkSpec,
    params: &NetworkParams,
    images: &[(Tensor, usize)],
    classes: usize,
) -> Result<Identification, PipelineError> {
    let mut out = Identification {
        confusion: ConfusionMatrix::new(classes),
        blocks_correct: 0,
        blocks_total: 0,
    };
    for (img, label) in images {
        let scores = block_scores(spec, params, img)?;
        for row in &scores.rows {
            out.blocks_total += 1;
            if argmax(row.iter().map(|&p| p as f64)) == *label {
                out.blocks_correct += 1;
            }
        }
        out.confusion.record(*label, scores.predicted());
    }
    Ok(out)
}

/// Image-level accuracy at each grid point of `axis`; `pages` carry their
/// margins.
pub fn robustness_sweep(
    spec: &NetworkSpec,
    params: &NetworkParams,
    pages: &[(Tensor, usize)],
    axis: Axis,
    classes: usize,
) -> Result<Vec<f64>, PipelineError> {
    let mut acc = Vec::with_capacity(axis.grid().len());
    for &value in axis.grid() {
        let (s, a) = axis.transform(value);
        let views: Vec<(Tensor, usize)> = pages.iter().map(|(p, l)| (view(p, s, a), *l)).collect();
        acc.push(evaluate_identification(spec, params, &views, classes)?.accuracy());
    }
    Ok(acc)
}

/// Refiner training on the run's synthetic and photographed sets.
pub fn train_gan_stage(cfg: &RunConfig) -> Result<TrainedGan, PipelineError> {
    let (synth, real) = gan_sets(cfg)?;
    Ok(train_refiner(&cfg.gan_config(), &synth, &real, seeds::derive(cfg.seed, 201))?)
}

/// Synthetic training pairs for the decomposition network, refined when a
/// refiner is given: (rgb, cmyk, keys).
pub fn hcd_training_set(
    cfg: &RunConfig,
    refiner: Option<(&NetworkSpec, &NetworkParams)>,
) -> Result<(Tensor, Tensor, Vec<u64>), PipelineError> {
    let (rgb, cmyk, keys) = sample_set(
        &synthetic_printers(cfg)?,
        cfg.hcd_samples,
        seeds::derive(cfg.seed, TAG_HCD_TRAIN),
    )?;
    let rgb = match refiner {
        Some((spec, params)) => refine(spec, params, &rgb)?,
        None => rgb,
    };
    Ok((rgb, cmyk, keys))
}

/// Held-out photographed pairs with known separations: (rgb, cmyk).
pub fn hcd_eval_set(cfg: &RunConfig) -> Result<(Tensor, Tensor), PipelineError> {
    let (rgb, cmyk, _) = sample_set(
        &photographed_printers(cfg)?,
        cfg.hcd_eval_samples,
        seeds::derive(cfg.seed, TAG_HCD_EVAL),
    )?;
    Ok((rgb, cmyk))
}

pub fn train_hcd_stage(
    cfg: &RunConfig,
    refiner: Option<(&NetworkSpec, &NetworkParams)>,
) -> Result<TrainedHcd, PipelineError> {
    let (rgb, cmyk, keys) = hcd_training_set(cfg, refiner)?;
    Ok(train_hcd(&cfg.hcd_config(), &rgb, &cmyk, &keys, seeds::derive(cfg.seed, 202))?)
}

pub fn evaluate_hcd(cfg: &RunConfig, hcd: &NetworkParams) -> Result<DecompositionReport, PipelineError> {
    let (rgb, cmyk) = hcd_eval_set(cfg)?;
    Ok(evaluate_decomposition(&cfg.hcd_config().spec(), hcd, &rgb, &cmyk)?)
}

/// Test-set results of one cross-validation configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct CvScores {
    pub phase1: Identification,
    pub phase2: Identification,
    /// Accuracy along [`ROTATIONS`] for phase 1 and phase 2.
    pub rotation: [Vec<f64>; 2],
    /// Accuracy along [`SCALES`] for phase 1 and phase 2.
    pub scaling: [Vec<f64>; 2],
}

/// Both identification models of one configuration.
#[derive(Clone, Debug)]
pub struct CvModels {
    pub phase1: TrainedPi,
    pub phase2: TrainedPi,
}

fn labeled_photos(cfg: &RunConfig, pages: &[PageRef], idx: &[usize]) -> Result<Vec<(Tensor, usize)>, PipelineError> {
    let printers = photographed_printers(cfg)?;
    Ok(idx
        .iter()
        .map(|&i| (render_photo(&printers, &pages[i]), pages[i].printer))
        .collect())
}

/// Scores phase-1 and phase-2 parameters on the split's test pages.
pub fn evaluate_pi(
    cfg: &RunConfig,
    pages: &[PageRef],
    split: &CvSplit,
    phase1: &NetworkParams,
    phase2: &NetworkParams,
) -> Result<CvScores, PipelineError> {
    let spec = cfg.pi_config().spec();
    let photos = labeled_photos(cfg, pages, &split.test)?;
    let identity: Vec<(Tensor, usize)> = photos.iter().map(|(p, l)| (view(p, 1.0, 0.0), *l)).collect();
    let k = cfg.printers;
    let id1 = evaluate_identification(&spec, phase1, &identity, k)?;
    let id2 = evaluate_identification(&spec, phase2, &identity, k)?;
    let sweep = |params, axis| robustness_sweep(&spec, params, &photos, axis, k);
    Ok(CvScores {
        phase1: id1,
        phase2: id2,
        rotation: [sweep(phase1, Axis::Rotation)?, sweep(phase2, Axis::Rotation)?],
        scaling: [sweep(phase1, Axis::Scaling)?, sweep(phase2, Axis::Scaling)?],
    })
}

fn run_stream(cfg: &RunConfig, run: usize) -> u64 {
    seeds::derive(cfg.seed, 300 + run as u64)
}

/// The run's page catalog with its cross-validation configurations.
pub fn cv_pages(cfg: &RunConfig) -> Result<(Vec<PageRef>, Vec<CvSplit>), PipelineError> {
    let pages = page_catalog(cfg);
    let labels: Vec<usize> = pages.iter().map(|p| p.printer).collect();
    let splits = crossval_split(&labels, seeds::derive(cfg.seed, 203))?;
    Ok((pages, splits))
}

/// Training and validation regions of configuration `run`.
pub fn pi_region_sets(
    cfg: &RunConfig,
    pages: &[PageRef],
    split: &CvSplit,
    run: usize,
) -> Result<(RegionSet, RegionSet), PipelineError> {
    let base = run_stream(cfg, run);
    let printers = photographed_printers(cfg)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| pages[i]).collect::<Vec<_>>();
    let per_page = cfg.train_blocks_per_page;
    let train = region_set(&printers, &pick(&split.train), per_page, seeds::derive(base, 1))?;
    let val = region_set(&printers, &pick(&split.val), per_page, seeds::derive(base, 2))?;
    Ok((train, val))
}

/// Transfer initialization from `hcd` followed by untransformed training.
pub fn pi_phase1_stage(
    cfg: &RunConfig,
    hcd: &NetworkParams,
    train: &RegionSet,
    val: &RegionSet,
    run: usize,
) -> Result<TrainedPi, PipelineError> {
    let base = run_stream(cfg, run);
    let pi_cfg = cfg.pi_config();
    let init = transfer_init(
        &cfg.hcd_config().spec(),
        hcd,
        &pi_cfg.spec(),
        &TransferMap::default(),
        seeds::derive(base, 3),
    )?;
    let phase1 = train_phase1(&pi_cfg, train, val, &init, seeds::derive(base, 4))?;
    log::info!(
        "cv {run}: phase 1 best epoch {} of {}",
        phase1.best_epoch,
        phase1.stop_epoch
    );
    Ok(phase1)
}

/// Augmented fine-tuning of phase-1 parameters.
pub fn pi_phase2_stage(
    cfg: &RunConfig,
    phase1: &NetworkParams,
    train: &RegionSet,
    val: &RegionSet,
    run: usize,
) -> Result<TrainedPi, PipelineError> {
    Ok(train_phase2(
        &cfg.phase2_config(),
        train,
        val,
        phase1,
        &cfg.policy(),
        seeds::derive(run_stream(cfg, run), 5),
    )?)
}

/// Both identification phases on configuration `run` of the split.
pub fn train_pi_stage(
    cfg: &RunConfig,
    hcd: &NetworkParams,
    pages: &[PageRef],
    split: &CvSplit,
    run: usize,
) -> Result<CvModels, PipelineError> {
    let (train, val) = pi_region_sets(cfg, pages, split, run)?;
    let phase1 = pi_phase1_stage(cfg, hcd, &train, &val, run)?;
    let phase2 = pi_phase2_stage(cfg, &phase1.params, &train, &val, run)?;
    Ok(CvModels { phase1, phase2 })
}

/// Checkpoint file names of configuration `run`.
pub fn pi_checkpoint_names(run: usize) -> (String, String) {
    if run == 0 {
        ("pi_phase1.hfck".into(), "pi.hfck".into())
    } else {
        (format!("pi_phase1_cv{run}.hfck"), format!("pi_cv{run}.hfck"))
    }
}

/// Everything reported about a finished run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub dir: PathBuf,
    pub decomposition: DecompositionReport,
    pub runs: Vec<CvScores>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

impl RunReport {
    /// Phase-2 image-level accuracy averaged over configurations.
    pub fn final_accuracy(&self) -> f64 {
        mean(self.runs.iter().map(|r| r.phase2.accuracy()))
    }

    pub fn phase1_accuracy(&self) -> f64 {
        mean(self.runs.iter().map(|r| r.phase1.accuracy()))
    }

    pub fn phase1_block_accuracy(&self) -> f64 {
        mean(self.runs.iter().map(|r| r.phase1.block_accuracy()))
    }

    /// Phase-2 confusion summed over configurations.
    pub fn confusion(&self) -> ConfusionMatrix {
        let k = self.runs.first().map_or(0, |r| r.phase2.confusion.classes());
        let mut m = ConfusionMatrix::new(k);
        for r in &self.runs {
            m.merge(&r.phase2.confusion);
        }
        m
    }

    /// Rotation and scaling curves of phase `phase` (0 or 1).
    pub fn curves(&self, phase: usize) -> Vec<RobustnessCurve> {
        let rot: Vec<Vec<f64>> = self.runs.iter().map(|r| r.rotation[phase].clone()).collect();
        let sca: Vec<Vec<f64>> = self.runs.iter().map(|r| r.scaling[phase].clone()).collect();
        vec![
            RobustnessCurve::from_runs(Axis::Rotation, &rot),
            RobustnessCurve::from_runs(Axis::Scaling, &sca),
        ]
    }

    pub fn summary_tsv(&self) -> String {
        let mut s = String::from("key\tvalue\n");
        let _ = writeln!(s, "final_accuracy\t{}", self.final_accuracy());
        let _ = writeln!(s, "phase1_accuracy\t{}", self.phase1_accuracy());
        let _ = writeln!(s, "phase1_block_accuracy\t{}", self.phase1_block_accuracy());
        for (i, r) in self.runs.iter().enumerate() {
            let _ = writeln!(s, "cv{i}_phase1_accuracy\t{}", r.phase1.accuracy());
            let _ = writeln!(s, "cv{i}_phase1_block_accuracy\t{}", r.phase1.block_accuracy());
            let _ = writeln!(s, "cv{i}_phase2_accuracy\t{}", r.phase2.accuracy());
            let _ = writeln!(s, "cv{i}_phase2_block_accuracy\t{}", r.phase2.block_accuracy());
        }
        s
    }

    /// Writes decomposition, confusion, robustness and summary reports into
    /// the run directory.
    pub fn write(&self) -> Result<(), PipelineError> {
        write_file(&self.dir.join("decomposition.tsv"), self.decomposition.to_tsv())?;
        let confusion = self.confusion();
        write_file(&self.dir.join("confusion.tsv"), confusion.to_tsv())?;
        let png = self.dir.join("confusion.png");
        confusion
            .heat_image(32)
            .save(&png)
            .map_err(|source| PipelineError::Image { path: png, source })?;
        write_file(
            &self.dir.join("robustness.tsv"),
            robustness_tsv(&self.curves(0), &self.curves(1)),
        )?;
        write_file(&self.dir.join("summary.tsv"), self.summary_tsv())
    }
}

/// Creates a fresh `run-<unix seconds>` directory under `root`.
pub fn create_run_dir(root: &Path) -> Result<PathBuf, PipelineError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PipelineError::Io { path, source }
    };
    fs::create_dir_all(root).map_err(io(root))?;
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    for k in 0.. {
        let name = if k == 0 {
            format!("run-{secs}")
        } else {
            format!("run-{secs}-{k}")
        };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(io(&dir)(e)),
        }
    }
    unreachable!("unbounded search")
}

fn gan_history_tsv(gan: &TrainedGan) -> String {
    let mut s = String::from("iter\tkind\tloss\tadversarial\tregularization\n");
    for r in &gan.history {
        let _ = writeln!(
            s,
            "{}\t{:?}\t{:.6}\t{:.6}\t{:.6}",
            r.iter, r.kind, r.loss, r.adversarial, r.regularization
        );
    }
    s
}

fn curve_tsv(header: &str, rows: &[(String, &[f64], &[f64])]) -> String {
    let mut s = format!("{header}\n");
    for (prefix, a, b) in rows {
        for (e, (x, y)) in a.iter().zip(b.iter()).enumerate() {
            let _ = writeln!(s, "{prefix}{}\t{x:.6}\t{y:.6}", e + 1);
        }
    }
    s
}

/// Runs every stage in order inside a new directory under `cfg.out_dir`,
/// writing checkpoints as soon as each stage finishes so that a failure
/// leaves the earlier artifacts in place.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let dir = create_run_dir(&cfg.out_dir)?;
    log::info!("run directory {}", dir.display());
    write_file(&dir.join("config.txt"), cfg.to_text())?;

    let gan = if cfg.skip_refinement {
        None
    } else {
        Some(stage("refiner", || {
            let gan = train_gan_stage(cfg)?;
            save_params(&gan.refiner, &dir.join("refiner.hfck"))?;
            save_params(&gan.discriminator, &dir.join("discriminator.hfck"))?;
            write_file(&dir.join("gan_history.tsv"), gan_history_tsv(&gan))?;
            Ok(gan)
        })?)
    };

    let (hcd, decomposition) = stage("decomposition", || {
        let hcd = train_hcd_stage(cfg, gan.as_ref().map(|g| (&g.refiner_spec, &g.refiner)))?;
        save_params(&hcd.params, &dir.join("hcd.hfck"))?;
        write_file(
            &dir.join("hcd_training.tsv"),
            curve_tsv(
                "epoch\ttrain_loss\tval_loss",
                &[(String::new(), &hcd.train_loss, &hcd.val_loss)],
            ),
        )?;
        let report = evaluate_hcd(cfg, &hcd.params)?;
        write_file(&dir.join("decomposition.tsv"), report.to_tsv())?;
        Ok((hcd, report))
    })?;

    let runs = stage("identification", || {
        let (pages, splits) = cv_pages(cfg)?;
        let mut runs = Vec::with_capacity(cfg.cv_runs);
        let mut training = Vec::new();
        for (r, split) in splits.iter().take(cfg.cv_runs).enumerate() {
            let models = train_pi_stage(cfg, &hcd.params, &pages, split, r)?;
            let (n1, n2) = pi_checkpoint_names(r);
            save_params(&models.phase1.params, &dir.join(n1))?;
            save_params(&models.phase2.params, &dir.join(n2))?;
            let scores = evaluate_pi(cfg, &pages, split, &models.phase1.params, &models.phase2.params)?;
            log::info!(
                "cv {r}: phase 1 {:.4} (blocks {:.4}), phase 2 {:.4}",
                scores.phase1.accuracy(),
                scores.phase1.block_accuracy(),
                scores.phase2.accuracy()
            );
            training.push((r, models));
            runs.push(scores);
        }
        let rows: Vec<(String, &[f64], &[f64])> = training
            .iter()
            .flat_map(|(r, m)| {
                [
                    (format!("{r}\t1\t"), &m.phase1.train_loss[..], &m.phase1.val_accuracy[..]),
                    (format!("{r}\t2\t"), &m.phase2.train_loss[..], &m.phase2.val_accuracy[..]),
                ]
            })
            .collect();
        write_file(
            &dir.join("pi_training.tsv"),
            curve_tsv("cv\tphase\tepoch\ttrain_loss\tval_accuracy", &rows),
        )?;
        Ok(runs)
    })?;

    let report = RunReport {
        dir,
        decomposition,
        runs,
    };
    stage("reports", || report.write())?;
    Ok(report)
}

/// Recomputes every report of a finished run from its saved configuration
/// and checkpoints.
pub fn reevaluate(dir: &Path) -> Result<RunReport, PipelineError> {
    let cfg = RunConfig::from_text(&read_file(&dir.join("config.txt"))?)?;
    let hcd = load_params(&dir.join("hcd.hfck"))?;
    let decomposition = evaluate_hcd(&cfg, &hcd)?;
    let (pages, splits) = cv_pages(&cfg)?;
    let mut runs = Vec::with_capacity(cfg.cv_runs);
    for (r, split) in splits.iter().take(cfg.cv_runs).enumerate() {
        let (n1, n2) = pi_checkpoint_names(r);
        let p1 = load_params(&dir.join(n1))?;
        let p2 = load_params(&dir.join(n2))?;
        runs.push(evaluate_pi(&cfg, &pages, split, &p1, &p2)?);
    }
    Ok(RunReport {
        dir: dir.to_path_buf(),
        decomposition,
        runs,
    })
}
