use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use neck_core::analysis::BenchOptions;
use neck_core::kernels::{conv, Geometry};
use neck_core::{AttentionDownsample, AttentionUpsample, Block, CspPac, NeckConfig, NeckGraph, SeedStream, Tensor};

fn kernels(c: &mut Criterion) {
    let rng = SeedStream::new(1);
    let mut group = c.benchmark_group("conv2d");
    for dilation in [1, 2, 3] {
        let x: Tensor<f32> = rng.uniform("x", [1, 32, 40, 40], -1.0, 1.0);
        let w: Tensor<f32> = rng.uniform("w", [32, 32, 3, 3], -0.1, 0.1);
        let g = Geometry {
            stride: 1,
            padding: dilation,
            dilation,
        };
        group.bench_with_input(BenchmarkId::new("3x3 c32 40x40 d", dilation), &g, |b, &g| {
            b.iter(|| conv::conv2d(&x, &w, None, g).unwrap())
        });
    }
    group.finish();
}

fn blocks(c: &mut Criterion) {
    let rng = SeedStream::new(2);
    let x: Tensor<f32> = rng.uniform("x", [1, 64, 20, 20], -1.0, 1.0);
    let wide: Tensor<f32> = rng.uniform("wide", [1, 128, 20, 20], -1.0, 1.0);
    let au = AttentionUpsample::<f32>::new("au", 64, &rng).unwrap();
    let ad = AttentionDownsample::<f32>::new("ad", 64, &rng).unwrap();
    let csp = CspPac::<f32>::new("csp", 128, 32, 64, &rng);
    let mut group = c.benchmark_group("blocks c64 20x20");
    group.bench_function("attention_upsample", |b| b.iter(|| au.run(&x).unwrap()));
    group.bench_function("attention_downsample", |b| b.iter(|| ad.run(&x).unwrap()));
    group.bench_function("csp_pac 128->64", |b| b.iter(|| csp.run(&wide).unwrap()));
    group.finish();
}

fn neck(c: &mut Criterion) {
    let mut group = c.benchmark_group("neck hidden 64 input 320");
    group.sample_size(BenchOptions::default().iters);
    for (name, cfg) in [
        ("full", NeckConfig::default()),
        ("baseline", NeckConfig::default().baseline()),
    ] {
        let graph = NeckGraph::<f32>::build(&cfg).unwrap();
        let rng = SeedStream::new(cfg.seed);
        let levels = cfg.level_dims(1).map(|d| rng.uniform::<f32>("p", d, 0.0, 1.0));
        group.bench_function(name, |b| {
            b.iter(|| graph.run([&levels[0], &levels[1], &levels[2]]).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, kernels, blocks, neck);
criterion_main!(benches);
