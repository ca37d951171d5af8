mod common;

use common::{psnr64, ssim64};
use halftrace::gan::{buffer_update, disc_batch, HistoryBuffer};
use halftrace::halftone::{halftone_channel, ScreenConfig};
use halftrace::metrics::{psnr, ssim};
use halftrace::nn::softmax;
use halftrace::{Dims, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 32 cases of 40 to 60 updates each: more than 1,000 updates in total.
fn batches() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec((1usize..9).prop_map(|h| 2 * h), 40..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn buffer_size_and_replacement_law(capacity in 1usize..40, sizes in batches(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut buf = HistoryBuffer::new(capacity);
        let mut next_id = 0u64;
        for b in sizes {
            let batch: Vec<u64> = (next_id..next_id + b as u64).collect();
            next_id += b as u64;
            let before = buf.items().to_vec();
            let was_full = buf.is_full();
            buffer_update(&mut buf, &batch, &mut rng).unwrap();
            let after = buf.items();
            if was_full {
                prop_assert_eq!(after.len(), capacity);
                let changed: Vec<usize> = (0..capacity).filter(|&i| after[i] != before[i]).collect();
                prop_assert_eq!(changed.len(), (b / 2).min(capacity));
                let mut fresh: Vec<u64> = changed.iter().map(|&i| after[i]).collect();
                prop_assert!(fresh.iter().all(|v| batch.contains(v)));
                fresh.sort_unstable();
                fresh.dedup();
                prop_assert_eq!(fresh.len(), changed.len(), "each batch image placed at most once");
            } else {
                prop_assert_eq!(after.len(), (before.len() + b).min(capacity));
                prop_assert_eq!(&after[..before.len()], &before[..]);
                prop_assert_eq!(&after[before.len()..], &batch[..after.len() - before.len()]);
            }
        }
    }

    #[test]
    fn discriminator_batch_halves(capacity in 4usize..40, b in (1usize..9).prop_map(|h| 2 * h), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut buf = HistoryBuffer::new(capacity);
        let fill: Vec<u64> = (0..(capacity + capacity % 2) as u64).collect();
        buffer_update(&mut buf, &fill, &mut rng).unwrap();
        let fresh: Vec<u64> = (1000..1000 + b as u64).collect();
        let out = disc_batch(&buf, &fresh, b, &mut rng).unwrap();
        prop_assert_eq!(out.len(), b);
        prop_assert!(out[..b / 2].iter().all(|v| buf.items().contains(v)));
        let mut tail = out[b / 2..].to_vec();
        prop_assert!(tail.iter().all(|v| fresh.contains(v)));
        tail.sort_unstable();
        tail.dedup();
        prop_assert_eq!(tail.len(), b / 2);
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-30.0f32..30.0, 1..12), shift in -50.0f32..50.0) {
        let p = softmax(&logits);
        let sum: f64 = p.iter().map(|&v| v as f64).sum();
        prop_assert!((sum - 1.0).abs() < 1e-5);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let shifted: Vec<f32> = logits.iter().map(|v| v + shift).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn more_coverage_never_removes_ink(
        angle in 0.0f64..180.0,
        pitch in 2.0f64..10.0,
        gain in -0.2f64..0.2,
        jitter in 0.0f64..0.3,
        base in prop::collection::vec(0.0f32..1.0, 24 * 24),
        extra in prop::collection::vec(0.0f32..0.5, 24 * 24),
        seed in any::<u64>(),
    ) {
        let screen = ScreenConfig::new(angle, pitch, gain).unwrap();
        let d = Dims::new(1, 1, 24, 24);
        let lo = Tensor::from_vec(d, base.clone()).unwrap();
        let hi = Tensor::from_vec(d, base.iter().zip(&extra).map(|(a, e)| (a + e).min(1.0)).collect()).unwrap();
        let a = halftone_channel(&lo, &screen, jitter, seed).unwrap();
        let b = halftone_channel(&hi, &screen, jitter, seed).unwrap();
        prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x <= y));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn metrics_match_reference(
        c in 1usize..4,
        h in 8usize..20,
        w in 8usize..20,
        seed in any::<u64>(),
        noise in 0.0f32..0.5,
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Dims::new(1, c, h, w);
        let a = Tensor::from_fn(d, |_, _, _, _| rng.gen_range(0.0..1.0));
        let b = Tensor::from_fn(d, |n, ch, y, x| (a.at(n, ch, y, x) + rng.gen_range(-noise..=noise)).clamp(0.0, 1.0));
        let a64: Vec<f64> = a.data().iter().map(|&v| v as f64).collect();
        let b64: Vec<f64> = b.data().iter().map(|&v| v as f64).collect();
        prop_assert!((psnr(&a, &b).unwrap() - psnr64(&a64, &b64)).abs() < 1e-4);
        let plane = h * w;
        let reference = (0..c)
            .map(|k| ssim64(&a64[k * plane..(k + 1) * plane], &b64[k * plane..(k + 1) * plane], h, w))
            .sum::<f64>()
            / c as f64;
        prop_assert!((ssim(&a, &b).unwrap() - reference).abs() < 1e-6);
        prop_assert_eq!(psnr(&a, &a).unwrap(), 99.0);
        prop_assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }
}

#[test]
fn long_run_replaces_half_a_batch_per_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut buf = HistoryBuffer::new(24);
    let mut replaced_total = 0;
    for k in 0..1000u64 {
        let batch: Vec<u64> = (k * 8..k * 8 + 8).map(|v| v + 1).collect();
        let before = buf.items().to_vec();
        let was_full = buf.is_full();
        buffer_update(&mut buf, &batch, &mut rng).unwrap();
        if was_full {
            let changed = (0..24).filter(|&i| buf.items()[i] != before[i]).count();
            assert_eq!(changed, 4);
            replaced_total += changed;
        }
    }
    assert_eq!(buf.len(), 24);
    assert_eq!(replaced_total, 4 * (1000 - 3));
}
