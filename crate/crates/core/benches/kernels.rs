//! Parallel vs sequential kernels. With the `parallel` feature disabled both
//! arms run the sequential path.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rinr_core::model::{Model, ModelConfig, Variant};
use rinr_core::par::set_parallel;
use rinr_core::tensor::{self, adam_step, conv2d, AdamConfig, AdamState, Tensor};

fn random(shape: [usize; 4], seed: u64, param: bool) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    if param {
        Tensor::parameter(shape, data).unwrap()
    } else {
        Tensor::new(shape, data).unwrap()
    }
}

const MODES: [(&str, bool); 2] = [("parallel", true), ("sequential", false)];

fn conv_forward(c: &mut Criterion) {
    let mut g = c.benchmark_group("conv2d_forward");
    let x = random([1, 16, 32, 64], 1, false);
    let w = random([32, 16, 3, 3], 2, false);
    let b = random([1, 32, 1, 1], 3, false);
    for (name, on) in MODES {
        set_parallel(on);
        g.bench_function(name, |bench| bench.iter(|| conv2d(&x, &w, &b, 1, 1).unwrap()));
    }
    g.finish();
}

fn conv_backward(c: &mut Criterion) {
    let mut g = c.benchmark_group("conv2d_backward");
    let x = random([1, 16, 32, 64], 1, true);
    let w = random([32, 16, 3, 3], 2, true);
    let b = random([1, 32, 1, 1], 3, true);
    for (name, on) in MODES {
        set_parallel(on);
        g.bench_function(name, |bench| {
            bench.iter_batched(
                || tensor::sum(&conv2d(&x, &w, &b, 1, 1).unwrap()),
                |loss| tensor::backward(&loss).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    g.finish();
}

fn train_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("train_step_64x128");
    g.sample_size(20);
    let config = ModelConfig::desk(Variant::Baseline, 64, 128, 50_000);
    let model: Model<f32> = Model::build(&config, 0).unwrap();
    let params = model.params();
    let mut states: Vec<_> = params.iter().map(|p| AdamState::new(p, AdamConfig::default())).collect();
    let frame = random([1, 3, 64, 128], 4, false);
    for (name, on) in MODES {
        set_parallel(on);
        g.bench_function(name, |bench| {
            bench.iter(|| {
                model.zero_grad();
                let out = model.forward(&frame, None).unwrap();
                let loss = tensor::mse_loss(&out, &frame).unwrap();
                tensor::backward(&loss).unwrap();
                adam_step(&params, &mut states).unwrap();
            })
        });
    }
    g.finish();
}

criterion_group!(benches, conv_forward, conv_backward, train_step);
criterion_main!(benches);
