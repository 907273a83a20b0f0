use std::hint::black_box;

use cellfree_core::ml::{backward, dl_e2e_spec, forward_batch, unfolded_stage_spec, MlpParams};
use cellfree_core::seed;
use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DMatrix;

fn bench_networks(c: &mut Criterion) {
    let mut rng = seed::rng(1);
    for (name, spec) in [("dl-e2e", dl_e2e_spec(40)), ("unfolded-stage", unfolded_stage_spec(40))] {
        let params = MlpParams::init(&spec, &mut rng);
        let x = DMatrix::from_fn(40, 256, |i, j| ((i * 31 + j * 17) % 97) as f64 / 97.0);
        let y = x.map(|v| 1.0 - v);
        c.bench_function(&format!("{name}/forward-1"), |b| {
            let one = x.columns(0, 1).into_owned();
            b.iter(|| forward_batch(&params, &spec, black_box(&one)))
        });
        c.bench_function(&format!("{name}/backward-256"), |b| {
            b.iter(|| backward(&params, &spec, black_box(&x), black_box(&y), 1e-4))
        });
    }
}

criterion_group!(benches, bench_networks);
criterion_main!(benches);
