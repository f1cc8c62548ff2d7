use aegis_core::raster::{dct8, jpeg_attack, Block8};
use aegis_core::robustness::texture;
use aegis_core::watermark::{detect, embed, WatermarkConfig, WatermarkPayload};
use criterion::{criterion_group, criterion_main, Criterion};

fn raster(c: &mut Criterion) {
    let block: Block8 = std::array::from_fn(|y| std::array::from_fn(|x| ((x * 31 + y * 17) % 256) as f64));
    c.bench_function("dct8", |b| b.iter(|| dct8(std::hint::black_box(&block))));
    let img = texture(1, 512);
    c.bench_function("jpeg_attack 512 q75", |b| b.iter(|| jpeg_attack(&img, 75).unwrap()));
}

fn watermark(c: &mut Criterion) {
    let img = texture(2, 512);
    let cfg = WatermarkConfig::default();
    let p = WatermarkPayload::from_id(42);
    c.bench_function("embed 512", |b| b.iter(|| embed(&img, &p, &cfg).unwrap()));
    let marked = embed(&img, &p, &cfg).unwrap();
    let mut group = c.benchmark_group("detect");
    group.sample_size(10);
    group.bench_function("clean 512", |b| b.iter(|| detect(&marked, &cfg, None).unwrap()));
    let unmarked_cfg = WatermarkConfig { key: 1, ..cfg.clone() };
    group.bench_function("exhaustive 512", |b| b.iter(|| detect(&marked, &unmarked_cfg, None).unwrap()));
    group.finish();
}

criterion_group!(benches, raster, watermark);
criterion_main!(benches);
