use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use halftrace::halftone::{generate_sample, render_page, VirtualPrinter};
use halftrace::nn::{backward, forward, infer, xavier_init, Mode, NetworkSpec};
use halftrace::printer_id::{identify_image, warp};
use halftrace::{Dims, Tensor};

const DIV: usize = 8;

fn blocks(n: usize) -> Tensor {
    Tensor::from_fn(Dims::new(n, 3, 64, 64), |n, c, y, x| ((n * 7 + c * 5 + y * 3 + x) % 17) as f32 / 16.0)
}

fn networks(c: &mut Criterion) {
    let x = blocks(8);
    for (name, spec) in [
        ("refiner", NetworkSpec::refiner(DIV)),
        ("discriminator", NetworkSpec::discriminator(DIV)),
        ("hcd", NetworkSpec::hcd(DIV)),
        ("pi", NetworkSpec::pi(4, DIV)),
    ] {
        let p = xavier_init(&spec, 1).unwrap();
        c.bench_function(&format!("{name}/infer x8"), |b| b.iter(|| infer(&spec, &p, black_box(&x)).unwrap()));
        c.bench_function(&format!("{name}/train step x8"), |b| {
            b.iter(|| {
                let (y, cache) = forward(&spec, &p, black_box(&x), Mode::Train).unwrap();
                backward(&spec, &p, &cache, &Tensor::filled(y.dims(), 1e-3)).unwrap()
            })
        });
    }
}

fn identification(c: &mut Criterion) {
    let spec = NetworkSpec::pi(4, DIV);
    let p = xavier_init(&spec, 2).unwrap();
    let printer = VirtualPrinter::preset(0);
    let (page, _) = render_page(&printer, 512, 512, 3, 4);
    c.bench_function("identify 512x512", |b| b.iter(|| identify_image(&spec, &p, black_box(&page)).unwrap()));
    c.bench_function("warp 512x512", |b| b.iter(|| warp(black_box(&page), 1.1, 5.0, 512, 512)));
}

fn synthesis(c: &mut Criterion) {
    let printer = VirtualPrinter::preset(1);
    let mut seed = 0u64;
    c.bench_function("generate sample", |b| {
        b.iter_batched(
            || {
                seed += 1;
                seed
            },
            |s| generate_sample(&printer, s, s ^ 0xABCD),
            BatchSize::SmallInput,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = networks, identification, synthesis
}
criterion_main!(benches);
