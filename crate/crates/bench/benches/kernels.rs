use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use cyclesearch_bench::{color_swap, pattern, search_config};
use cyclesearch_core::autodiff::Tape;
use cyclesearch_core::data::Side;
use cyclesearch_core::evaluation::proxy_frechet;
use cyclesearch_core::networks::{Model, Network};
use cyclesearch_core::rng::{rng_for, Stream};
use cyclesearch_core::search_engine::{Scheme, Search};
use std::hint::black_box;

fn conv(c: &mut Criterion) {
    let mut g = c.benchmark_group("conv2d");
    for channels in [8usize, 32] {
        let x = pattern(&[1, channels, 32, 32]);
        let w = pattern(&[channels, channels, 3, 3]);
        g.bench_with_input(BenchmarkId::new("forward_backward", channels), &channels, |b, _| {
            b.iter(|| {
                let mut t = Tape::new();
                let xv = t.leaf(x.clone(), true);
                let wv = t.leaf(w.clone(), true);
                let y = t.conv2d(xv, wv, None, 1, 1, 1).unwrap();
                let m = t.mean(y).unwrap();
                black_box(t.backward(m).unwrap());
            })
        });
    }
    g.finish();
}

fn supernet(c: &mut Criterion) {
    let mut rng = rng_for(1, Stream::Init, 0);
    let net = Network::generator_supernet(5, 8, 3, &mut rng).unwrap();
    let spec = net.to_spec(8).unwrap();
    let discrete = net.extract_discrete(&spec).unwrap();
    let x = pattern(&[1, 3, 32, 32]);
    c.bench_function("generator_supernet_forward_n5_h8", |b| b.iter(|| black_box(net.infer(&x).unwrap())));
    c.bench_function("generator_discrete_forward_n5_h8", |b| b.iter(|| black_box(discrete.infer(&x).unwrap())));
}

fn search_epoch(c: &mut Criterion) {
    let data = color_swap(16, 2);
    let mut g = c.benchmark_group("search_epoch");
    g.sample_size(10);
    for scheme in [Scheme::Of, Scheme::Th] {
        g.bench_function(scheme.name(), |b| {
            b.iter(|| {
                let mut s = Search::new(search_config(scheme, 3, 4), &data).unwrap();
                s.run_epoch().unwrap();
                black_box(s.optimizer_passes())
            })
        });
    }
    g.finish();
}

fn proxy(c: &mut Criterion) {
    let data = color_swap(32, 16);
    c.bench_function("proxy_frechet_16x32", |b| {
        b.iter(|| black_box(proxy_frechet(data.side(Side::A), data.side(Side::B)).unwrap()))
    });
}

criterion_group!(benches, conv, supernet, search_epoch, proxy);
criterion_main!(benches);
