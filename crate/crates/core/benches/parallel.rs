//! Parallel against sequential execution for the two data-parallel hot spots:
//! the scan matcher's rotation sweep and a small benchmark suite.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fsnav_core::cone::{Cone, ConeColor};
use fsnav_core::geometry::{Pose2D, Vec2};
use fsnav_core::grid::OccupancyGrid;
use fsnav_core::harness::{run_bench, ExperimentConfig};
use fsnav_core::par::Execution;
use fsnav_core::sensors::{render_scan, LaserScan, NoiseConfig, SensorConfig};
use fsnav_core::slam::grid::{scan_match, GridSlamConfig, ScanMap, SearchWindow};
use fsnav_core::vehicle::VehicleState;

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn corridor() -> Vec<Cone> {
    (0..10)
        .flat_map(|k| {
            let x = -8.0 + 3.5 * k as f64;
            [Cone::new(x, 2.2 + 0.1 * (k % 3) as f64, ConeColor::Blue), Cone::new(x + 1.3, -2.0, ConeColor::Yellow)]
        })
        .collect()
}

fn scan_at(pose: Pose2D, cones: &[Cone]) -> LaserScan {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    render_scan(&VehicleState::at_rest(pose), cones, &NoiseConfig::zero(), &SensorConfig::default(), &mut rng)
}

fn scan_matching(c: &mut Criterion) {
    let cones = corridor();
    let mut map = ScanMap::new(OccupancyGrid::new(0.05, Vec2::new(-30.0, -30.0), 1200, 1200).unwrap());
    for x in [-2.0, 0.0, 2.0] {
        let p = Pose2D::new(x, 0.0, 0.0);
        map.integrate(&p, &scan_at(p, &cones), 0.4, 0.85, 10.0);
    }
    let truth = Pose2D::new(1.0, 0.1, 0.02);
    let scan = scan_at(truth, &cones);
    let prior = truth.compose(&Pose2D::new(0.08, 0.04, 0.01));
    let window = SearchWindow { dx: 0.3, dtheta: 0.05 };
    let mut g = c.benchmark_group("scan_match");
    for (name, exec) in MODES {
        let cfg = GridSlamConfig { execution: exec, ..Default::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| scan_match(black_box(&map), black_box(&scan), &prior, window, &cfg))
        });
    }
    g.finish();
}

fn suite(c: &mut Criterion) {
    let cfg = ExperimentConfig { id: "bench".into(), seeds: vec![0, 1], max_time: 8.0, ..ExperimentConfig::default() };
    let configs = [cfg];
    let mut g = c.benchmark_group("run_bench");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run_bench(black_box(&configs), exec)));
    }
    g.finish();
}

criterion_group!(benches, scan_matching, suite);
criterion_main!(benches);
