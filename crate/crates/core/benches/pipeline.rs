use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use insider_core::ae::{train_runs, AeArchitecture, AeKind, TrainConfig};
use insider_core::detect::ThresholdPolicy;
use insider_core::ingest::{build_positions, normalize_and_filter, PositionMatrix};
use insider_core::pca::PcaModel;
use insider_core::pipeline::ModelFamily;
use insider_core::select::{scan_k, StabilityRule};
use insider_core::synth::{generate, ScenarioConfig};

fn standard_positions() -> PositionMatrix {
    let s = generate(&ScenarioConfig::standard(0)).unwrap();
    normalize_and_filter(&build_positions(&s.records, &s.calendar).unwrap()).unwrap()
}

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let default = rayon::ThreadPoolBuilder::new().build().unwrap();
    let label = format!("default-{}", default.current_num_threads());
    vec![
        ("1-thread".into(), rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        (label, default),
    ]
}

fn bench(c: &mut Criterion) {
    let pm = standard_positions();
    let ks: Vec<usize> = (2..=24).collect();
    let policy = ThresholdPolicy::default();
    let cfg = TrainConfig::default();
    let pca = PcaModel::fit(&pm.x, 16).unwrap();
    let arch = AeArchitecture::make(AeKind::Ae2, 8).unwrap();
    let ae_cfg = TrainConfig { epochs: 5, ..TrainConfig::default() };

    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("scan_k", &name), |b| {
            b.iter(|| pool.install(|| scan_k(&pm, ModelFamily::Pca, &ks, &cfg, &policy, &StabilityRule::default()).unwrap()))
        });
        group.bench_function(BenchmarkId::new("pca_reconstruct", &name), |b| {
            b.iter(|| pool.install(|| pca.reconstruct(&pm.x).unwrap()))
        });
        group.bench_function(BenchmarkId::new("ae_runs", &name), |b| {
            b.iter(|| pool.install(|| train_runs(&pm.x, &arch, &ae_cfg, 4).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
