use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use halftrace::decompose::{evaluate_decomposition, train_hcd};
use halftrace::gan::{refine, train_refiner};
use halftrace::halftone::dataset::{read_samples, save_rgb_png, write_manifest, write_samples};
use halftrace::halftone::{generate_sample, VirtualPrinter};
use halftrace::nn::{NetworkParams, NetworkSpec};
use halftrace::pipeline::{
    cv_pages, evaluate_hcd, gan_sets, hcd_training_set, load_params, photographed_printers,
    pi_phase1_stage, pi_phase2_stage, pi_region_sets, reevaluate, render_photo, robustness_sweep, run_experiment,
    save_params, synthetic_printers, Axis, RunConfig,
};
use halftrace::printer_id::identify_image;
use halftrace::{seeds, Tensor};

#[derive(Parser, Debug)]
#[command(name = "halftrace", version, about = "Printer identification from photographed halftone prints")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Global seed; same as --set seed=N.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Camera {
    /// The renderer's own degradation.
    Synthetic,
    /// The heavier stand-in camera.
    Photographed,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AxisArg {
    Rotation,
    Scaling,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a dataset of 64×64 samples with CMYK ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        count: usize,
        #[arg(long, value_enum, default_value_t = Camera::Synthetic)]
        camera: Camera,
    },
    /// Train the refiner and its discriminator.
    TrainRefiner {
        /// Synthetic dataset; generated from the configuration when absent.
        #[arg(long, requires = "real")]
        synthetic: Option<PathBuf>,
        /// Photographed dataset.
        #[arg(long, requires = "synthetic")]
        real: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine a synthetic dataset into a parallel directory.
    Refine {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the decomposition network.
    TrainHcd {
        /// Dataset with CMYK ground truth; generated when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Refiner applied to the generated set.
        #[arg(long, conflicts_with = "data")]
        refiner: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decomposition report (TSV) against the profile baseline.
    EvalDecompose {
        #[arg(long)]
        model: PathBuf,
        /// Dataset with CMYK ground truth; the held-out photographed set when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train one identification phase on a cross-validation configuration.
    TrainPi {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        phase: u8,
        /// Decomposition checkpoint (phase 1) or phase-1 checkpoint (phase 2).
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Identify the printer of PNG images; prints TSV.
    Identify {
        #[arg(required = true)]
        images: Vec<PathBuf>,
        #[arg(long)]
        model: PathBuf,
    },
    /// Regenerate the reports of a run directory.
    Evaluate { run_dir: PathBuf },
    /// Accuracy of a model along a rotation or scaling grid on the test pages.
    Robustness {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        axis: Option<AxisArg>,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Run every stage and write a run directory.
    RunAll,
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &g.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
    }
    for kv in &g.set {
        let Some((k, v)) = kv.split_once('=') else {
            bail!("--set expects KEY=VALUE, got {kv:?}");
        };
        cfg.set(k, v)?;
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_for(spec: &NetworkSpec, path: &Path) -> Result<NetworkParams> {
    let p = load_params(path)?;
    p.validate(spec)
        .with_context(|| format!("{} does not fit the configured network", path.display()))?;
    Ok(p)
}

/// Loads a dataset directory as stacked (rgb, cmyk, content seeds).
fn load_dataset(dir: &Path, need_cmyk: bool) -> Result<(Tensor, Option<Tensor>, Vec<u64>)> {
    let samples = read_samples(dir).with_context(|| format!("reading dataset {}", dir.display()))?;
    ensure!(!samples.is_empty(), "{} holds no samples", dir.display());
    let keys = samples.iter().map(|s| s.0.content_seed).collect();
    let rgb = Tensor::stack(samples.iter().map(|s| &s.1))?;
    let cmyk = if samples.iter().all(|s| s.2.is_some()) {
        Some(Tensor::stack(samples.iter().map(|s| s.2.as_ref().unwrap()))?)
    } else {
        ensure!(!need_cmyk, "{} lacks CMYK ground truth", dir.display());
        None
    };
    Ok((rgb, cmyk, keys))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn synth(cfg: &RunConfig, out: &Path, count: usize, camera: Camera) -> Result<()> {
    let (printers, tag): (Vec<VirtualPrinter>, u64) = match camera {
        Camera::Synthetic => (synthetic_printers(cfg)?, 401),
        Camera::Photographed => (photographed_printers(cfg)?, 402),
    };
    let stream = seeds::derive(cfg.seed, tag);
    let samples: Vec<_> = (0..count as u64)
        .map(|i| {
            let p = &printers[i as usize % printers.len()];
            generate_sample(p, seeds::derive(stream, 2 * i), seeds::derive(stream, 2 * i + 1))
        })
        .collect();
    create_dir(out)?;
    write_samples(out, &samples)?;
    println!("{count} samples written to {}", out.display());
    Ok(())
}

fn train_refiner_cmd(cfg: &RunConfig, sets: Option<(&Path, &Path)>, out: &Path) -> Result<()> {
    let (synth, real) = match sets {
        Some((s, r)) => (load_dataset(s, false)?.0, load_dataset(r, false)?.0),
        None => gan_sets(cfg)?,
    };
    let gan = train_refiner(&cfg.gan_config(), &synth, &real, seeds::derive(cfg.seed, 201))?;
    create_dir(out)?;
    save_params(&gan.refiner, &out.join("refiner.hfck"))?;
    save_params(&gan.discriminator, &out.join("discriminator.hfck"))?;
    let mut tsv = String::from("iter\tkind\tloss\tadversarial\tregularization\n");
    for r in &gan.history {
        tsv.push_str(&format!(
            "{}\t{:?}\t{:.6}\t{:.6}\t{:.6}\n",
            r.iter, r.kind, r.loss, r.adversarial, r.regularization
        ));
    }
    write(&out.join("gan_history.tsv"), &tsv)?;
    println!("refiner written to {}", out.display());
    Ok(())
}

fn refine_cmd(cfg: &RunConfig, input: &Path, model: &Path, out: &Path) -> Result<()> {
    let spec = cfg.gan_config().refiner_spec();
    let params = load_for(&spec, model)?;
    let samples = read_samples(input).with_context(|| format!("reading dataset {}", input.display()))?;
    ensure!(!samples.is_empty(), "{} holds no samples", input.display());
    let rgb = Tensor::stack(samples.iter().map(|s| &s.1))?;
    let refined = refine(&spec, &params, &rgb)?;
    let entries: Vec<_> = samples.into_iter().map(|s| s.0).collect();
    for (i, e) in entries.iter().enumerate() {
        let dst = out.join(&e.path);
        if let Some(dir) = dst.parent() {
            create_dir(dir)?;
        }
        save_rgb_png(&refined.item(i), &dst)?;
        let (src_c, dst_c) = (input.join(e.cmyk_path()), out.join(e.cmyk_path()));
        if src_c.exists() {
            fs::copy(&src_c, &dst_c).with_context(|| format!("copying {}", src_c.display()))?;
        }
    }
    write_manifest(out, &entries)?;
    println!("{} refined samples written to {}", entries.len(), out.display());
    Ok(())
}

fn train_hcd_cmd(cfg: &RunConfig, data: Option<&Path>, refiner: Option<&Path>, out: &Path) -> Result<()> {
    let (rgb, cmyk, keys) = match (data, refiner) {
        (Some(dir), _) => {
            let (rgb, cmyk, keys) = load_dataset(dir, true)?;
            (rgb, cmyk.expect("checked"), keys)
        }
        (None, Some(path)) => {
            let spec = cfg.gan_config().refiner_spec();
            let params = load_for(&spec, path)?;
            hcd_training_set(cfg, Some((&spec, &params)))?
        }
        (None, None) => hcd_training_set(cfg, None)?,
    };
    let hcd = train_hcd(&cfg.hcd_config(), &rgb, &cmyk, &keys, seeds::derive(cfg.seed, 202))?;
    create_dir(out)?;
    save_params(&hcd.params, &out.join("hcd.hfck"))?;
    let mut tsv = String::from("epoch\ttrain_loss\tval_loss\n");
    for (e, (t, v)) in hcd.train_loss.iter().zip(&hcd.val_loss).enumerate() {
        tsv.push_str(&format!("{}\t{t:.6}\t{v:.6}\n", e + 1));
    }
    write(&out.join("hcd_training.tsv"), &tsv)?;
    println!("decomposition network written to {} (best epoch {})", out.display(), hcd.best_epoch);
    Ok(())
}

fn eval_decompose(cfg: &RunConfig, model: &Path, data: Option<&Path>) -> Result<()> {
    let spec = cfg.hcd_config().spec();
    let params = load_for(&spec, model)?;
    let report = match data {
        Some(dir) => {
            let (rgb, cmyk, _) = load_dataset(dir, true)?;
            evaluate_decomposition(&spec, &params, &rgb, &cmyk.expect("checked"))?
        }
        None => evaluate_hcd(cfg, &params)?,
    };
    print!("{}", report.to_tsv());
    Ok(())
}

fn train_pi_cmd(cfg: &RunConfig, phase: u8, init: &Path, out: &Path, run: usize) -> Result<()> {
    let (pages, splits) = cv_pages(cfg)?;
    ensure!(run < splits.len(), "run must be below {}", splits.len());
    let (train, val) = pi_region_sets(cfg, &pages, &splits[run], run)?;
    let (trained, name) = if phase == 1 {
        let hcd = load_for(&cfg.hcd_config().spec(), init)?;
        (pi_phase1_stage(cfg, &hcd, &train, &val, run)?, "pi_phase1.hfck")
    } else {
        let p1 = load_for(&cfg.pi_config().spec(), init)?;
        (pi_phase2_stage(cfg, &p1, &train, &val, run)?, "pi.hfck")
    };
    create_dir(out)?;
    save_params(&trained.params, &out.join(name))?;
    let mut tsv = String::from("epoch\ttrain_loss\tval_accuracy\n");
    for (e, (t, v)) in trained.train_loss.iter().zip(&trained.val_accuracy).enumerate() {
        tsv.push_str(&format!("{}\t{t:.6}\t{v:.6}\n", e + 1));
    }
    write(&out.join(format!("pi_phase{phase}_training.tsv")), &tsv)?;
    println!(
        "phase {phase} written to {} (best epoch {}, validation accuracy {:.4})",
        out.join(name).display(),
        trained.best_epoch,
        trained.val_accuracy.get(trained.best_epoch.saturating_sub(1)).copied().unwrap_or(0.0)
    );
    Ok(())
}

fn identify(cfg: &RunConfig, images: &[PathBuf], model: &Path) -> Result<()> {
    let spec = cfg.pi_config().spec();
    let params = load_for(&spec, model)?;
    let mut out = std::io::stdout().lock();
    let scores: Vec<String> = (1..=cfg.printers).map(|k| format!("score_{k}")).collect();
    writeln!(out, "path\tpredicted_id\t{}", scores.join("\t"))?;
    for path in images {
        let img = halftrace::halftone::dataset::load_rgb_png(path)?;
        let (pred, mean) = identify_image(&spec, &params, &img)?;
        let cols: Vec<String> = mean.iter().map(|p| format!("{p:.6}")).collect();
        writeln!(out, "{}\t{pred}\t{}", path.display(), cols.join("\t"))?;
    }
    Ok(())
}

fn robustness(cfg: &RunConfig, model: &Path, axis: Option<AxisArg>, run: usize) -> Result<()> {
    let spec = cfg.pi_config().spec();
    let params = load_for(&spec, model)?;
    let (pages, splits) = cv_pages(cfg)?;
    ensure!(run < splits.len(), "run must be below {}", splits.len());
    let printers = photographed_printers(cfg)?;
    let photos: Vec<(Tensor, usize)> = splits[run]
        .test
        .iter()
        .map(|&i| (render_photo(&printers, &pages[i]), pages[i].printer))
        .collect();
    let axes = match axis {
        Some(AxisArg::Rotation) => vec![Axis::Rotation],
        Some(AxisArg::Scaling) => vec![Axis::Scaling],
        None => vec![Axis::Rotation, Axis::Scaling],
    };
    println!("axis\tvalue\taccuracy");
    for a in axes {
        let acc = robustness_sweep(&spec, &params, &photos, a, cfg.printers)?;
        for (v, x) in a.grid().iter().zip(acc) {
            println!("{}\t{v}\t{x:.6}", a.name());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Synth { out, count, camera } => synth(&cfg, &out, count, camera),
        Command::TrainRefiner { synthetic, real, out } => {
            train_refiner_cmd(&cfg, synthetic.as_deref().zip(real.as_deref()), &out)
        }
        Command::Refine { input, model, out } => refine_cmd(&cfg, &input, &model, &out),
        Command::TrainHcd { data, refiner, out } => train_hcd_cmd(&cfg, data.as_deref(), refiner.as_deref(), &out),
        Command::EvalDecompose { model, data } => eval_decompose(&cfg, &model, data.as_deref()),
        Command::TrainPi { phase, init, out, run } => train_pi_cmd(&cfg, phase, &init, &out, run),
        Command::Identify { images, model } => identify(&cfg, &images, &model),
        Command::Evaluate { run_dir } => {
            let report = reevaluate(&run_dir)?;
            report.write()?;
            print!("{}", report.summary_tsv());
            Ok(())
        }
        Command::Robustness { model, axis, run } => robustness(&cfg, &model, axis, run),
        Command::RunAll => {
            let report = run_experiment(&cfg)?;
            println!("run directory\t{}", report.dir.display());
            print!("{}", report.summary_tsv());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
