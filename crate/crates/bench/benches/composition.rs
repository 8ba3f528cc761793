use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use oppcomp_bench::{placement, Table};
use oppcomp_core::composition::{dijkstra_reuse, select_composition, GraphOptions, ServiceGraph};
use oppcomp_core::service::{IoType, NodeId};

fn plan(c: &mut Criterion) {
    let mut group = c.benchmark_group("plan");
    for nodes in [20, 100] {
        let table = Table::new(nodes);
        let placement = placement(nodes);
        group.bench_with_input(BenchmarkId::new("build_and_select", nodes), &nodes, |b, _| {
            b.iter(|| {
                let g = ServiceGraph::build(NodeId(0), &placement, &table, GraphOptions::load_aware());
                select_composition(&g, black_box(IoType(1)), black_box(IoType(6)))
            })
        });
        let g = ServiceGraph::build(NodeId(0), &placement, &table, GraphOptions::load_aware());
        group.bench_with_input(BenchmarkId::new("all_outputs", nodes), &nodes, |b, _| {
            b.iter(|| dijkstra_reuse(&g, black_box(IoType(1))))
        });
    }
    group.finish();
}

criterion_group!(benches, plan);
criterion_main!(benches);
