mod common;

use common::{forward64, params64, Arr};
use halftrace::halftone::{render_page, VirtualPrinter};
use halftrace::nn::{xavier_init, Activation, LayerSpec, Mode, NetworkSpec, ParamKind};
use halftrace::printer_id::{identify_image, tile_blocks};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small stand-in classifier with the same block interface as the PI
/// network, so that the f64 oracle stays cheap.
fn small_classifier() -> NetworkSpec {
    NetworkSpec::new(
        vec![
            LayerSpec::conv(4, 2).bn().act(Activation::Relu),
            LayerSpec::max_pool(),
            LayerSpec::conv(4, 2).act(Activation::LeakyRelu),
            LayerSpec::max_pool(),
            LayerSpec::fc(4),
            LayerSpec::softmax(),
        ],
        (3, 64, 64),
    )
    .unwrap()
}

#[test]
fn block_average_argmax_matches_brute_force() {
    let spec = small_classifier();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut params = xavier_init(&spec, 11).unwrap();
    for (key, t) in params.entries.iter_mut() {
        let (lo, hi) = match key.kind {
            ParamKind::BnMean => (-0.1f32, 0.1),
            ParamKind::BnVar => (0.5, 2.0),
            ParamKind::BnScale => (0.5, 1.5),
            _ => continue,
        };
        t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(lo..hi));
    }
    let p64 = params64(&params);
    let printers = VirtualPrinter::family(4).unwrap();
    for i in 0..100u64 {
        let (img, _) = render_page(&printers[i as usize % 4], 512, 512, 1000 + i, 2000 + i);
        let (pred, mean) = identify_image(&spec, &params, &img).unwrap();

        let blocks = tile_blocks(&img).unwrap();
        assert_eq!(blocks.batch(), 64);
        let out = forward64(&spec, &p64, &Arr::from_tensor(&blocks), Mode::Eval);
        let mut avg = [0.0f64; 4];
        for b in 0..64 {
            for (k, a) in avg.iter_mut().enumerate() {
                *a += out.v[b * 4 + k] / 64.0;
            }
        }
        let mut best = 0;
        for k in 1..4 {
            if avg[k] > avg[best] {
                best = k;
            }
        }
        assert_eq!(pred, best, "image {i}: {mean:?} vs {avg:?}");
        for (m, a) in mean.iter().zip(&avg) {
            assert!((m - a).abs() < 1e-5);
        }
    }
}
