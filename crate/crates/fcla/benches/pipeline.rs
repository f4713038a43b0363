//! Benchmarks: the data-parallel Monte Carlo harness against its sequential
//! fallback, plus the hot inner kernels (one BCD run, one SDR solve, channel
//! synthesis, and a placement PGD pass).
//!
//! Run with `cargo bench -p fcla`. The sweep group sizes are kept small so a
//! full bench pass stays in the minutes range; the parallel/sequential
//! comparison is the headline number.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use fcla::bcd::{self, BcdOptions};
use fcla::beamform::{solve_sdr, SdrInputs};
use fcla::channel::ChannelSet;
use fcla::fp::{update_eta, update_varpi};
use fcla::harness::{run_experiment, ExperimentKind, ExperimentSpec};
use fcla::placement::{pgd_optimize, PgdOptions};
use fcla::scenario::{initial_placement, sample_scenario, SamplingParams};
use fcla::ExecMode;

fn sweep_spec(mode: ExecMode, out: &str) -> ExperimentSpec {
    let dir = std::env::temp_dir().join("fcla_bench");
    std::fs::create_dir_all(&dir).unwrap();
    let mut spec = ExperimentSpec::new(ExperimentKind::PowerSweep, dir.join(out));
    spec.grid = vec![0.0, 10.0];
    spec.trials = 4;
    spec.bcd.max_outer_iters = 6;
    spec.mode = mode;
    spec
}

fn bench_sweep_modes(c: &mut Criterion) {
    let mut group = c.benchmark_group("monte_carlo_sweep");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        let spec = sweep_spec(ExecMode::Parallel, "bench_par.csv");
        b.iter(|| black_box(run_experiment(&spec).unwrap().rows.len()));
    });
    group.bench_function("sequential", |b| {
        let spec = sweep_spec(ExecMode::Sequential, "bench_seq.csv");
        b.iter(|| black_box(run_experiment(&spec).unwrap().rows.len()));
    });
    group.finish();
}

fn bench_kernels(c: &mut Criterion) {
    let sc = sample_scenario(7, &SamplingParams::default()).unwrap();
    let p = initial_placement(&sc.config).unwrap();
    let ch = ChannelSet::synthesize(&sc, &p).unwrap();
    let sol = bcd::initialize_beams(&sc, &ch);
    let eta = update_eta(&ch, &sol, &sc.sigma2_ir);
    let varpi = update_varpi(&ch, &sol, &sc.sigma2_ir);

    c.bench_function("channel_synthesis", |b| {
        b.iter(|| black_box(ChannelSet::synthesize(&sc, &p).unwrap()))
    });

    c.bench_function("sdr_solve", |b| {
        let inputs = SdrInputs {
            channels: &ch,
            eta: &eta,
            varpi: &varpi,
            sigma2_ir: &sc.sigma2_ir,
            sigma2_eve: sc.sigma2_eve,
            gamma_lin: sc.gamma_th_e_linear(),
            power: sc.power,
        };
        b.iter(|| black_box(solve_sdr(&inputs, 1e-7).unwrap().objective))
    });

    c.bench_function("placement_pgd", |b| {
        let opts = PgdOptions {
            max_iters: 10,
            ..PgdOptions::default()
        };
        b.iter(|| {
            black_box(
                pgd_optimize(&p, &sc, &sol, &eta, &varpi, &opts)
                    .unwrap()
                    .1
                    .len(),
            )
        })
    });

    let mut group = c.benchmark_group("bcd_run");
    group.sample_size(10);
    group.bench_function("default_scenario", |b| {
        let opts = BcdOptions {
            max_outer_iters: 5,
            ..BcdOptions::default()
        };
        b.iter(|| black_box(bcd::run(&sc, &p, &opts).unwrap().2.final_sum_rate()))
    });
    group.finish();
}

criterion_group!(benches, bench_sweep_modes, bench_kernels);
criterion_main!(benches);
