//! Sequential against data-parallel execution of the particle search and the
//! full tracker. Without the `parallel` feature only the sequential rows run.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dualtrack::pso::{build_polygon, init_particles, run_frame, MultiSwarm, PsoParams};
use dualtrack::synth::{generate, SceneSpec};
use dualtrack::tracker::{run, TrackerConfig};
use dualtrack::{Point2, Rect};

/// One worker, then every core (at least two, so the pooled path always runs).
fn thread_counts() -> Vec<usize> {
    if cfg!(feature = "parallel") {
        let n = std::thread::available_parallelism().map_or(1, |n| n.get());
        vec![1, n.max(2)]
    } else {
        vec![1]
    }
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool")
            .install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

fn swarm_search(c: &mut Criterion) {
    let verts: Vec<Point2> = (0..12)
        .map(|i| {
            let a = f64::from(i) * std::f64::consts::TAU / 12.0;
            Point2::new(300.0 + 200.0 * a.cos(), 300.0 + 200.0 * a.sin())
        })
        .collect();
    let polygon = build_polygon(&verts, true).expect("polygon");
    let mut group = c.benchmark_group("swarm_search");
    for population in [200usize, 2000] {
        let params = PsoParams {
            population,
            ..PsoParams::default()
        };
        for threads in thread_counts() {
            group.bench_with_input(
                BenchmarkId::new(format!("threads={threads}"), population),
                &population,
                |b, _| {
                    b.iter(|| {
                        with_threads(threads, || {
                            let ps = init_particles(Rect::new(80.0, 80.0, 440.0, 440.0), &params, 7);
                            let mut ms = MultiSwarm::new(ps, &polygon, (600, 600));
                            black_box(run_frame(&mut ms, &polygon, &params))
                        })
                    })
                },
            );
        }
    }
    group.finish();
}

fn full_track(c: &mut Criterion) {
    let (frames, _) = generate(&SceneSpec::default()).expect("scene");
    let cfg = TrackerConfig {
        population: Some(400),
        ..TrackerConfig::default()
    };
    let mut group = c.benchmark_group("track_60_frames");
    group.sample_size(10);
    for threads in thread_counts() {
        group.bench_function(format!("threads={threads}"), |b| {
            b.iter(|| with_threads(threads, || black_box(run(&frames, &cfg).expect("track"))))
        });
    }
    group.finish();
}

criterion_group!(benches, swarm_search, full_track);
criterion_main!(benches);
