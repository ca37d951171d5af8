use std::path::Path;

use halftrace::pipeline::{reevaluate, run_experiment, PipelineError, RunConfig};

fn tiny(out: &Path) -> RunConfig {
    let mut c = RunConfig {
        out_dir: out.to_path_buf(),
        ..RunConfig::default()
    };
    for (k, v) in [
        ("width_div", "16"),
        ("gan_samples", "16"),
        ("gan_iters", "2"),
        ("gan_batch", "4"),
        ("gan_buffer", "8"),
        ("hcd_samples", "40"),
        ("hcd_eval_samples", "8"),
        ("hcd_epochs", "1"),
        ("pages_per_printer", "4"),
        ("train_blocks_per_page", "4"),
        ("pi_batch", "8"),
        ("pi_epochs", "1"),
        ("phase2_epochs", "1"),
    ] {
        c.set(k, v).unwrap();
    }
    c
}

const ARTIFACTS: [&str; 14] = [
    "config.txt",
    "refiner.hfck",
    "discriminator.hfck",
    "gan_history.tsv",
    "hcd.hfck",
    "hcd_training.tsv",
    "decomposition.tsv",
    "pi_phase1.hfck",
    "pi.hfck",
    "pi_training.tsv",
    "confusion.tsv",
    "confusion.png",
    "robustness.tsv",
    "summary.tsv",
];

#[test]
fn run_writes_artifacts_and_reports_regenerate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path());
    let report = run_experiment(&cfg).unwrap();
    for name in ARTIFACTS {
        assert!(report.dir.join(name).is_file(), "missing {name}");
    }
    let saved = RunConfig::from_text(&std::fs::read_to_string(report.dir.join("config.txt")).unwrap()).unwrap();
    assert_eq!(saved, cfg);

    let robustness = std::fs::read_to_string(report.dir.join("robustness.tsv")).unwrap();
    assert_eq!(robustness.lines().count(), 1 + 10);
    let confusion = std::fs::read_to_string(report.dir.join("confusion.tsv")).unwrap();
    assert_eq!(confusion.lines().count(), 1 + 4);

    let again = reevaluate(&report.dir).unwrap();
    assert_eq!(again, report);
    let summary = std::fs::read_to_string(report.dir.join("summary.tsv")).unwrap();
    assert_eq!(summary, again.summary_tsv());
}

#[test]
fn fixed_seed_reproduces_bit_identical_results() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path());
    cfg.set("skip_refinement", "true").unwrap();
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_ne!(a.dir, b.dir);
    assert_eq!(a.final_accuracy().to_bits(), b.final_accuracy().to_bits());
    for name in ["hcd.hfck", "pi_phase1.hfck", "pi.hfck", "summary.tsv"] {
        assert_eq!(
            std::fs::read(a.dir.join(name)).unwrap(),
            std::fs::read(b.dir.join(name)).unwrap(),
            "{name}"
        );
    }
    assert!(!a.dir.join("refiner.hfck").exists());
}

#[test]
fn failed_stage_keeps_earlier_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path());
    cfg.set("hcd_lr", "1e30").unwrap();
    let err = run_experiment(&cfg).unwrap_err();
    assert!(
        matches!(err, PipelineError::Stage { stage: "decomposition", .. }),
        "{err}"
    );
    let run = std::fs::read_dir(tmp.path()).unwrap().next().unwrap().unwrap().path();
    assert!(run.join("refiner.hfck").is_file());
    assert!(run.join("config.txt").is_file());
    assert!(!run.join("hcd.hfck").exists());
}
