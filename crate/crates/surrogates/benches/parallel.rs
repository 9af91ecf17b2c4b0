//! Sequential vs rayon execution of one training epoch and of a test-set
//! evaluation. Both modes produce bit-identical results; only wall time differs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use wahls_core::benchmark::{evaluate_with, EvalOptions};
use wahls_core::dataset::{Dataset, Split};
use wahls_core::exec::Exec;
use wahls_core::synth::{generate_dataset, FamilyMix};
use wahls_surrogates::{train_with, ModelKind, TrainConfig};

fn data() -> (Dataset, Dataset) {
    let ds = generate_dataset(3, 320, &FamilyMix::default());
    let s = ds.samples();
    (
        Dataset::new(Split::Train, s[..256].to_vec()).unwrap(),
        Dataset::new(Split::Test, s[256..].to_vec()).unwrap(),
    )
}

fn modes() -> [(&'static str, Exec); 2] {
    [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)]
}

fn epoch(c: &mut Criterion) {
    let (tr, te) = data();
    let mut g = c.benchmark_group("train_epoch");
    g.sample_size(10);
    for kind in ModelKind::ALL {
        let cfg = TrainConfig { epochs: 1, ..TrainConfig::desk(kind) };
        for (name, exec) in modes() {
            g.bench_function(BenchmarkId::new(kind.as_str(), name), |b| {
                b.iter(|| train_with(kind, &tr, &te, &cfg, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let (tr, te) = data();
    let cfg = TrainConfig { epochs: 1, ..TrainConfig::desk(ModelKind::Gnn) };
    let model = train_with(ModelKind::Gnn, &tr, &te, &cfg, Exec::default()).unwrap();
    let mut g = c.benchmark_group("evaluate");
    g.sample_size(10);
    for (name, exec) in modes() {
        let opts = EvalOptions { record_timing: false, exec, ..Default::default() };
        g.bench_function(name, |b| b.iter(|| evaluate_with(&model, &te, &opts).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, epoch, evaluation);
criterion_main!(benches);
