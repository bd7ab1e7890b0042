use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use fcfuzzy::cnn_ae::{build_autoencoder, matrix_tensor};
use fcfuzzy::connectivity::connectivity_matrix;
use fcfuzzy::fcm::{fcm_cluster, FcmConfig};
use fcfuzzy::it2fr::{fit_init, It2frConfig};
use fcfuzzy_bench::{demo_matrices, demo_subjects, random_matrix};

fn connectivity(c: &mut Criterion) {
    let rec = demo_subjects(1, 1).remove(0);
    c.bench_function("pearson_118_roi", |b| {
        b.iter(|| connectivity_matrix(black_box(&rec)).unwrap())
    });
}

fn autoencoder(c: &mut Criterion) {
    let ae = build_autoencoder(118, 0).unwrap();
    let (mats, _) = demo_matrices(1, 2);
    let x = matrix_tensor(&mats[0], 118).unwrap();
    c.bench_function("ae_forward_118", |b| {
        b.iter(|| ae.net.forward(black_box(&x)).unwrap())
    });
    c.bench_function("ae_loss_and_grad_118", |b| {
        b.iter(|| {
            ae.net
                .loss_and_grad(
                    black_box(&x),
                    &fcfuzzy::nn::Target::Tensor(x.clone()),
                    fcfuzzy::nn::Loss::Mse,
                )
                .unwrap()
        })
    });
}

fn fuzzy(c: &mut Criterion) {
    let x = random_matrix(150, 225, 3);
    let cfg = FcmConfig {
        clusters: 3,
        ..Default::default()
    };
    c.bench_function("fcm_150x225_m3", |b| {
        b.iter(|| fcm_cluster(black_box(&x), &cfg, 0).unwrap())
    });
    let y: Vec<f64> = (0..150).map(|i| (i % 2) as f64).collect();
    let model = fit_init(&x, &y, &It2frConfig::default(), 0).unwrap();
    let row = x.row(0).to_vec();
    c.bench_function("it2fr_predict_225", |b| {
        b.iter(|| model.predict(black_box(&row)).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = connectivity, autoencoder, fuzzy
}
criterion_main!(benches);
