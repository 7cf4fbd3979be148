use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use lmreg_bench::{fixture, initial_residual};
use lmreg_core::gallery::estimate_stability_constants;
use lmreg_core::recon::{build_lattice_with_cap, compose_measured_model, lattice_radius, scan_pruned, ReconSettings};
use lmreg_core::step::GramSystem;
use lmreg_core::{lm_step, TheoryConstantsExact};

const IDS: [&str; 3] = ["scalar_linear", "exp_decay", "quadratic"];

fn gram(c: &mut Criterion) {
    let mut g = c.benchmark_group("gram_assemble");
    for id in IDS {
        let p = fixture(id);
        g.bench_function(id, |b| b.iter(|| GramSystem::assemble(&p.model, black_box(&p.x0)).unwrap()));
    }
    g.finish();
}

fn alpha(c: &mut Criterion) {
    let mut g = c.benchmark_group("select_alpha");
    for id in IDS {
        let p = fixture(id);
        let r = initial_residual(&p);
        let sys = GramSystem::assemble(&p.model, &p.x0).unwrap();
        g.bench_function(id, |b| b.iter(|| sys.select_alpha(black_box(&r), 0.5, 1e-10).unwrap()));
    }
    g.finish();
}

fn step(c: &mut Criterion) {
    let mut g = c.benchmark_group("lm_step");
    for id in IDS {
        let p = fixture(id);
        let y = p.exact_data();
        g.bench_function(id, |b| b.iter(|| lm_step(&p.model, black_box(&p.x0), &y, 0.5, 1e-10).unwrap()));
    }
    g.finish();
}

fn scan(c: &mut Criterion) {
    let p = fixture("exp_decay_pair");
    let measured = compose_measured_model(&p.model, &p.measurement).unwrap();
    let y = p.measured_data();
    let tc = TheoryConstantsExact::evaluate(&p.certificate, 0.5);
    let lattice = build_lattice_with_cap(&p.default_box, lattice_radius(&p.certificate, tc.rho), ReconSettings::default().lattice_cap).unwrap();
    let threshold = tc.rho / (2.0 * p.certificate.recon_const);
    let lip = p.certificate.forward_lip * p.certificate.q_norm;
    c.bench_function("scan_pruned/exp_decay_pair", |b| b.iter(|| scan_pruned(&lattice, &measured, black_box(&y), threshold, lip).unwrap()));
}

fn estimator(c: &mut Criterion) {
    let mut g = c.benchmark_group("estimate_constants");
    g.sample_size(10);
    let p = fixture("quadratic");
    for samples in [1_000usize, 10_000] {
        g.bench_with_input(BenchmarkId::from_parameter(samples), &samples, |b, &n| {
            b.iter(|| estimate_stability_constants(&p.model, &p.default_box, 1.0, n, 7).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, gram, alpha, step, scan, estimator);
criterion_main!(benches);
