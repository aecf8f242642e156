use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use svlibor_core::charfn::{caplet_cf_params, heston_cf};
use svlibor_core::fixtures::{table_market, table_model, CAPLET_DECAY, SWAPTION_DECAY};
use svlibor_core::fourier::{caplet_prices, swaption_prices, QuadMode, QuadratureConfig};
use svlibor_core::montecarlo::{mc_caplets, McConfig};
use svlibor_core::Complex64;

const STRIKES: [f64; 7] = [0.0, 0.005, 0.01, 0.015, 0.02, 0.025, 0.03];

fn charfn(c: &mut Criterion) {
    let market = table_market();
    let model = table_model(CAPLET_DECAY);
    let params = caplet_cf_params(5, &model, &market).unwrap();
    c.bench_function("heston_cf", |b| {
        b.iter(|| heston_cf(black_box(Complex64::new(3.7, -1.0)), &params))
    });
}

fn fourier(c: &mut Criterion) {
    let market = table_market();
    let caplet_model = table_model(CAPLET_DECAY);
    let swaption_model = table_model(SWAPTION_DECAY);
    let mut group = c.benchmark_group("fourier");
    for mode in [QuadMode::Adaptive, QuadMode::Panels, QuadMode::Fft] {
        let quad = QuadratureConfig::with_mode(mode);
        group.bench_function(format!("caplet_smile_{mode:?}"), |b| {
            b.iter(|| caplet_prices(5, black_box(&STRIKES), &caplet_model, &market, &quad).unwrap())
        });
    }
    let quad = QuadratureConfig::default();
    group.bench_function("swaption_smile", |b| {
        b.iter(|| swaption_prices(4, 20, black_box(&STRIKES), &swaption_model, &market, &quad).unwrap())
    });
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let market = table_market();
    let model = table_model(CAPLET_DECAY);
    let cfg = McConfig {
        paths: 2048,
        ..McConfig::default()
    };
    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(10);
    group.bench_function("caplet_t5_2048_paths", |b| {
        b.iter(|| mc_caplets(5, &STRIKES, &model, &market, black_box(&cfg)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, charfn, fourier, monte_carlo);
criterion_main!(benches);
