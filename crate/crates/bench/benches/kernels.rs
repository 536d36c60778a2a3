use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ocscreen_core::imaging::{degrade_to_tier, resample_bilinear, to_input_tensor, Image};
use ocscreen_core::tensor::{self, ConvKernelSet, Tensor};
use ocscreen_core::{Model, ModelConfig, ResolutionTier};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_image(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Image {
    Image::new(w, h, (0..w * h * 3).map(|_| rng.random()).collect()).unwrap()
}

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_tensor(&mut rng, &[16, 64, 64]);
    let k = ConvKernelSet::new(
        random_tensor(&mut rng, &[32, 16, 3, 3]),
        random_tensor(&mut rng, &[32]),
        1,
        1,
    )
    .unwrap();
    let y = tensor::conv2d_forward(&x, &k).unwrap();
    let g = random_tensor(&mut rng, y.shape());

    c.bench_function("conv2d_forward 16x64x64 -> 32", |b| {
        b.iter(|| tensor::conv2d_forward(black_box(&x), black_box(&k)).unwrap())
    });
    c.bench_function("conv2d_backward 16x64x64 -> 32", |b| {
        b.iter(|| tensor::conv2d_backward(black_box(&x), black_box(&k), black_box(&g)).unwrap())
    });
}

fn model(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (name, cfg) in [("default", ModelConfig::default()), ("reduced", ModelConfig::reduced())] {
        let m = Model::build(cfg.clone()).unwrap();
        let side = cfg.input_size;
        let input = random_tensor(&mut rng, &[3, side, side]);
        c.bench_function(&format!("model forward ({name})"), |b| {
            b.iter(|| m.forward(black_box(&input)).unwrap())
        });
        c.bench_function(&format!("model forward+backward ({name})"), |b| {
            b.iter(|| {
                let (logits, cache) = m.forward(black_box(&input)).unwrap();
                let (_, g) = tensor::cross_entropy(&tensor::softmax(&logits), 0).unwrap();
                m.backward(&cache, &g).unwrap()
            })
        });
    }
}

fn imaging(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let img = random_image(&mut rng, 1920, 1080);
    c.bench_function("resample_bilinear 1080p -> 128", |b| {
        b.iter(|| resample_bilinear(black_box(&img), 128, 128).unwrap())
    });
    c.bench_function("degrade_to_tier 1080p -> 144p", |b| {
        b.iter(|| degrade_to_tier(black_box(&img), ResolutionTier::R144))
    });
    c.bench_function("to_input_tensor 1080p -> 128", |b| {
        b.iter(|| to_input_tensor(black_box(&img), 128))
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = conv, model, imaging
}
criterion_main!(benches);
