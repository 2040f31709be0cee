use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fealm::dissim::{nd, netlsd_signature, GraphProfile, Timescales};
use fealm::{build_knn_graph, symmetrize};
use fealm_bench::{gaussian_points, knn_pair};
use std::hint::black_box;

fn knn(c: &mut Criterion) {
    let mut group = c.benchmark_group("knn_graph");
    for n in [300, 800, 3200] {
        let x = gaussian_points(n, 4, 0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| {
            b.iter(|| build_knn_graph(black_box(x), 15).unwrap())
        });
    }
    group.finish();
}

fn signature(c: &mut Criterion) {
    let ts = Timescales::netlsd_default();
    let mut group = c.benchmark_group("netlsd_signature_q50");
    group.sample_size(20);
    for n in [300, 800, 3200] {
        let (g, _) = knn_pair(n, 15);
        let adj = symmetrize(&g);
        group.bench_with_input(BenchmarkId::from_parameter(n), &adj, |b, adj| {
            b.iter(|| netlsd_signature(black_box(adj), 50, &ts).unwrap())
        });
    }
    group.finish();
}

fn neighbor_dissimilarity(c: &mut Criterion) {
    let mut group = c.benchmark_group("nd");
    for n in [300, 800, 3200] {
        let pair = knn_pair(n, 15);
        group.bench_with_input(BenchmarkId::from_parameter(n), &pair, |b, (g, h)| {
            b.iter(|| nd(black_box(g), black_box(h)).unwrap())
        });
    }
    group.finish();
}

/// One objective-style evaluation: profile a fresh graph, compare with a cached one.
fn nsd_fresh_vs_cached(c: &mut Criterion) {
    let ts = Timescales::netlsd_default();
    let mut group = c.benchmark_group("nsd_fresh_vs_cached");
    group.sample_size(20);
    for n in [300, 800] {
        let (g, h) = knn_pair(n, 15);
        let cached = GraphProfile::new(h, 50, &ts).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &g, |b, g| {
            b.iter(|| {
                let fresh = GraphProfile::new(g.clone(), 50, &ts).unwrap();
                fresh.nsd(&cached, 1.0).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, knn, signature, neighbor_dissimilarity, nsd_fresh_vs_cached);
criterion_main!(benches);
