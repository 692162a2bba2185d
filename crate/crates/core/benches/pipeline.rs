//! Parallel versus single-threaded runs of the heavy pipeline stages.
//!
//! With the `parallel` feature each stage runs once in a one-thread pool and
//! once in the global pool; without it only the sequential path is measured.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use extremecast::bootstrap::sieve_bootstrap_panel;
use extremecast::forecast::GaevPanel;
use extremecast::gaev::{coarse_lattice, select_dims, GaevDims};
use extremecast::simulate::{generate, monte_carlo, DgpSpec, EvalConfig, Forecaster};

fn modes() -> Vec<(&'static str, Option<usize>)> {
    if cfg!(feature = "parallel") {
        vec![("one_thread", Some(1)), ("all_threads", None)]
    } else {
        vec![("sequential", None)]
    }
}

fn in_mode<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        return rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f);
    }
    let _ = threads;
    f()
}

fn stages(c: &mut Criterion) {
    let truth = generate(&DgpSpec {
        setting: 2,
        seed: 1,
        ..DgpSpec::default()
    })
    .expect("generator");
    let dims = GaevDims::new(5, 5, 0).expect("dims");
    let panel = GaevPanel::fit(&truth.series, dims).expect("panel");

    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    for (name, threads) in modes() {
        g.bench_with_input(BenchmarkId::new("panel_fit", name), &threads, |b, &t| {
            b.iter(|| in_mode(t, || GaevPanel::fit(black_box(&truth.series), dims).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("select_dims", name), &threads, |b, &t| {
            b.iter(|| in_mode(t, || select_dims(black_box(&truth.series), &coarse_lattice(0)).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("bootstrap_b200", name), &threads, |b, &t| {
            b.iter(|| in_mode(t, || sieve_bootstrap_panel(black_box(&panel), 50, 0.999, 200, 7).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("monte_carlo_4reps", name), &threads, |b, &t| {
            let spec = DgpSpec {
                setting: 2,
                seed: 3,
                ..DgpSpec::default()
            };
            b.iter(|| {
                in_mode(t, || {
                    monte_carlo(&spec, 4, &Forecaster::COMPETITORS, &EvalConfig::default()).unwrap()
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
