use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use freegas::fermibox::{self, BoxConfig, Terms};
use freegas::lattice::{self, CovarianceMatrix, HoppingModel, MajoranaOperator, DEFAULT_P0};
use freegas::linalg;
use freegas::Exec;
use std::hint::black_box;

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn box_grid(c: &mut Criterion) {
    let mut g = c.benchmark_group("box_grid");
    g.sample_size(20);
    for n in [10usize, 100] {
        let cfg = BoxConfig::fermions(n);
        let sig = fermibox::closed_form_signal(&cfg, Terms::Basis(cfg.cutoff())).unwrap();
        let span = cfg.recurrence_time() / 2.0;
        for (name, exec) in POLICIES {
            g.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| black_box(sig.grid_values(0.0, span, 4096, exec)))
            });
        }
    }
    g.finish();
}

fn ring_single_mode(c: &mut Criterion) {
    let mut g = c.benchmark_group("ring_single_mode");
    g.sample_size(10);
    let l = 101;
    let model = HoppingModel::ring(l).unwrap();
    let gamma = CovarianceMatrix::neel(l);
    let phi = linalg::basis_vec(l, l / 2);
    for (name, exec) in POLICIES {
        g.bench_function(name, |b| {
            b.iter(|| black_box(lattice::single_mode_bound_check(&model, &gamma, &phi, 200.0, DEFAULT_P0, exec).unwrap()))
        });
    }
    g.finish();
}

fn ring_two_mode(c: &mut Criterion) {
    let mut g = c.benchmark_group("ring_two_mode");
    g.sample_size(10);
    let l = 101;
    let model = HoppingModel::ring(l).unwrap();
    let gamma = CovarianceMatrix::neel(l);
    let op = MajoranaOperator::hopping(40, 41);
    for (name, exec) in POLICIES {
        g.bench_function(name, |b| {
            b.iter(|| black_box(lattice::multi_mode_bound_check(&model, &gamma, &op, 200.0, DEFAULT_P0, exec).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, box_grid, ring_single_mode, ring_two_mode);
criterion_main!(benches);
