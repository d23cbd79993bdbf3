//! Ledger and propagation benchmarks. Build once with the default features
//! for the data-parallel path and once with --no-default-features for the
//! sequential fallback; the bench names carry the compiled mode so saved
//! baselines stay comparable.

use criterion::{criterion_group, criterion_main, Criterion};

use autotherm::scenarios::{preset_config, scenario_trajectory};
use autotherm::thermo::analyze;

const MODE: &str = if cfg!(feature = "parallel") {
    "parallel"
} else {
    "sequential"
};

fn bench_ledger(c: &mut Criterion) {
    let pure = {
        let mut cfg = preset_config("jc-excited-vacuum").unwrap();
        cfg.samples = 400;
        scenario_trajectory(&cfg).unwrap()
    };
    let mixed = {
        let mut cfg = preset_config("jc-mixed-vacuum").unwrap();
        cfg.samples = 400;
        scenario_trajectory(&cfg).unwrap()
    };
    c.bench_function(&format!("analyze-pure-400/{MODE}"), |b| {
        b.iter(|| analyze(&pure).unwrap())
    });
    c.bench_function(&format!("analyze-mixed-400/{MODE}"), |b| {
        b.iter(|| analyze(&mixed).unwrap())
    });

    let mut damped = preset_config("se-rc").unwrap();
    damped.t_max = 5.0;
    damped.samples = 100;
    let mut group = c.benchmark_group("propagation");
    group.sample_size(10);
    group.bench_function(&format!("damped-pair-100/{MODE}"), |b| {
        b.iter(|| scenario_trajectory(&damped).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_ledger);
criterion_main!(benches);
