use halftrace::decompose::HcdConfig;
use halftrace::gan::{train_refiner, GanConfig, StepKind};
use halftrace::nn::checkpoint::{decode, encode};
use halftrace::nn::{infer_range, load_checkpoint, save_checkpoint, xavier_init, CheckpointError, NetworkSpec};
use halftrace::printer_id::{transfer_init, PiConfig, TransferMap};
use halftrace::{Dims, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIV: usize = 8;

fn four_networks() -> Vec<(&'static str, NetworkSpec)> {
    vec![
        ("refiner", NetworkSpec::refiner(DIV)),
        ("discriminator", NetworkSpec::discriminator(DIV)),
        ("hcd", NetworkSpec::hcd(DIV)),
        ("pi", NetworkSpec::pi(4, DIV)),
    ]
}

fn random_block(n: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(Dims::new(n, 3, 64, 64), |_, _, _, _| rng.gen_range(0.0..1.0))
}

#[test]
fn checkpoints_roundtrip_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    for (i, (name, spec)) in four_networks().into_iter().enumerate() {
        let mut p = xavier_init(&spec, 40 + i as u64).unwrap();
        // make batch-norm state nontrivial
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        for (_, t) in p.entries.iter_mut() {
            for v in t.data_mut() {
                *v += rng.gen_range(-0.01..0.01);
            }
        }
        let path = dir.path().join(format!("{name}.hfck"));
        save_checkpoint(&p, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        back.validate(&spec).unwrap();
        assert_eq!(back.rng_seed, p.rng_seed);
        for ((ka, a), (kb, b)) in p.entries.iter().zip(back.entries.iter()) {
            assert_eq!(ka, kb);
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b), "{name} {ka}");
        }
        assert_eq!(encode(&back).unwrap(), std::fs::read(&path).unwrap());
    }
}

#[test]
fn corrupted_headers_are_rejected_distinctly() {
    let p = xavier_init(&NetworkSpec::hcd(DIV), 1).unwrap();
    let good = encode(&p).unwrap();

    let mut magic = good.clone();
    magic[0] = b'X';
    assert!(matches!(decode(&magic), Err(CheckpointError::BadMagic(_))));

    let mut version = good.clone();
    version[4] = 0xEE;
    assert!(matches!(decode(&version), Err(CheckpointError::UnsupportedVersion(_))));

    assert!(matches!(decode(&good[..7]), Err(CheckpointError::Truncated(_))));
    assert!(matches!(decode(&good[..good.len() - 3]), Err(CheckpointError::Truncated(_))));

    let mut trailing = good.clone();
    trailing.extend_from_slice(&[0, 1, 2]);
    assert!(matches!(decode(&trailing), Err(CheckpointError::TrailingBytes(3))));

    let mut count = good.clone();
    count[6..10].copy_from_slice(&u32::MAX.to_le_bytes());
    assert!(decode(&count).is_err());
}

#[test]
fn transferred_layers_reproduce_the_decomposer() {
    let hcd_spec = HcdConfig {
        width_div: DIV,
        ..HcdConfig::default()
    }
    .spec();
    let pi_spec = PiConfig {
        width_div: DIV,
        n_printers: 4,
        ..PiConfig::default()
    }
    .spec();
    let mut hcd = xavier_init(&hcd_spec, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (_, t) in hcd.entries.iter_mut() {
        for v in t.data_mut() {
            *v += rng.gen_range(0.0..0.05);
        }
    }
    let pi = transfer_init(&hcd_spec, &hcd, &pi_spec, &TransferMap::default(), 4).unwrap();
    let x = random_block(3, 5);
    let a = infer_range(&hcd_spec, &hcd, &x, 0..7).unwrap();
    let b = infer_range(&pi_spec, &pi, &x, 0..7).unwrap();
    assert_eq!(a.dims(), b.dims());
    let worst = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0f32, f32::max);
    assert!(worst <= 1e-6, "max difference {worst}");
}

#[test]
fn algorithm_runs_two_refiner_updates_per_discriminator_update() {
    let cfg = GanConfig {
        batch_size: 4,
        max_iters: 5,
        buffer_capacity: 8,
        width_div: 16,
        refiner_lr: 1e-3,
        disc_lr: 1e-3,
        lambda: 0.1,
    };
    let synth = random_block(8, 1);
    let real = random_block(8, 2);
    let trained = train_refiner(&cfg, &synth, &real, 3).unwrap();
    let count = |k| trained.history.iter().filter(|r| r.kind == k).count();
    assert_eq!(count(StepKind::Refiner), 2 * cfg.max_iters);
    assert_eq!(count(StepKind::Discriminator), cfg.max_iters);
    for it in 1..=cfg.max_iters {
        let kinds: Vec<StepKind> = trained.history.iter().filter(|r| r.iter == it).map(|r| r.kind).collect();
        assert_eq!(kinds, [StepKind::Refiner, StepKind::Refiner, StepKind::Discriminator]);
    }
}
