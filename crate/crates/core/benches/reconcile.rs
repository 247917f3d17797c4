use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ctrecon::covariance::CovName;
use ctrecon::reconcile::reconcile_batch;
use ctrecon::simulate::{simulate, SimConfig};
use ctrecon::{
    CovarianceSet, CrossSectionalStructure, CrossTemporalStructure, Exec, Method, Order, ReconcileOptions, Reconciler,
    TemporalStructure,
};

fn structure() -> CrossTemporalStructure {
    let cs = CrossSectionalStructure::two_level(&[6, 10, 14]).unwrap();
    let te = TemporalStructure::new(&[24, 12, 8, 6, 4, 3, 2, 1]).unwrap();
    CrossTemporalStructure::new(cs, te).unwrap()
}

fn batch(c: &mut Criterion) {
    let ct = structure();
    let cfg = SimConfig {
        origins: 16,
        ..Default::default()
    };
    let data = simulate(&ct, &cfg, Exec::Parallel).unwrap();
    let covs = CovarianceSet::named(&ct, CovName::Wlsv, Some(&data.residuals)).unwrap();

    let mut group = c.benchmark_group("batch");
    group.sample_size(10);
    for method in [Method::Oct, Method::Ite(Order::Tcs), Method::Ka(Order::Cst)] {
        let rec = Reconciler::new(&ct, method, &covs, ReconcileOptions::default()).unwrap();
        for exec in [Exec::Sequential, Exec::Parallel] {
            let id = BenchmarkId::new(method.name(), format!("{exec:?}").to_lowercase());
            group.bench_with_input(id, &exec, |b, &exec| {
                b.iter(|| reconcile_batch(&rec, &data.base, exec))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
