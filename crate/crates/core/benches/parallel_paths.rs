//! Sequential vs rayon paths of the two hot data-parallel loops: Floquet
//! scans over drive frequency and per-input Lindblad runs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sideband_core::dynamics::CollapseOptions;
use sideband_core::exec::Executor;
use sideband_core::floquet::{period_options, scan_model};
use sideband_core::integrate::OdeOptions;
use sideband_core::model::{DrivenModel, DrivenSetup, SystemParams};
use sideband_core::synthesis::{cardinal_fidelities, compile, noon_encode, CompileConfig, SynthesisContext};
use sideband_core::hz;

const EXECUTORS: [(&str, Executor); 2] = [("sequential", Executor::Sequential), ("parallel", Executor::Parallel)];

fn floquet_scan(c: &mut Criterion) {
    let params = SystemParams::reference_device();
    let dm = DrivenModel::new(&params, DrivenSetup::new(2, 3, 3), 4).unwrap();
    let w0 = dm.bare_sideband_resonance();
    let grid: Vec<f64> = (0..16).map(|k| w0 - hz(8e6) + hz(1e6) * k as f64).collect();
    let mut g = c.benchmark_group("floquet_scan");
    g.sample_size(10);
    for (name, exec) in EXECUTORS {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| scan_model(&dm, hz(200e6), &grid, exec, &period_options()).unwrap())
        });
    }
    g.finish();
}

fn cardinal_runs(c: &mut Criterion) {
    let ctx = SynthesisContext::new(SystemParams::reference_device()).with_cutoff(2).with_transmon_levels(3);
    let p = noon_encode(1, 2, 4, &ctx).unwrap();
    let cp = compile(&p, &ctx, &CompileConfig::default(), None).unwrap();
    let ch = CollapseOptions::all(p.modes.clone());
    let mut g = c.benchmark_group("cardinal_fidelities");
    g.sample_size(10);
    for (name, exec) in EXECUTORS {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| cardinal_fidelities(&cp, &ch, &OdeOptions::default(), exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, floquet_scan, cardinal_runs);
criterion_main!(benches);
