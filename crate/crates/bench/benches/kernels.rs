use criterion::{black_box, criterion_group, criterion_main, Criterion};
use mzmetro_core::bayes::{Budget, Checkpoints};
use mzmetro_core::personick::DEFAULT_SUPPORT_CUTOFF;
use mzmetro_core::{build_scheme, make_probe, mse_repeated, optimal_strategy, FlatPrior, PhaseLikelihood, ProbeKind, SchemeKind};
use std::f64::consts::FRAC_PI_2;

fn personick(c: &mut Criterion) {
    let prior = FlatPrior::new(0.0, FRAC_PI_2).unwrap();
    for kind in [ProbeKind::coherent(), ProbeKind::tsv(), ProbeKind::ses()] {
        let probe = make_probe(kind, kind.default_dims()).unwrap();
        c.bench_function(&format!("optimal_strategy/{}", kind.label()), |b| {
            b.iter(|| optimal_strategy(black_box(&probe.state), &prior, DEFAULT_SUPPORT_CUTOFF).unwrap())
        });
    }
}

fn likelihood(c: &mut Criterion) {
    let kind = ProbeKind::tsv();
    let probe = make_probe(kind, kind.default_dims()).unwrap();
    let povm = build_scheme(&SchemeKind::CountingEven, probe.state.dims()).unwrap();
    let lik = PhaseLikelihood::new(&povm, &probe.state).unwrap();
    let mut out = vec![0.0; lik.outcome_count()];
    c.bench_function("likelihood/tsv-counting", |b| b.iter(|| lik.probabilities(black_box(0.3), &mut out)));
}

fn monte_carlo(c: &mut Criterion) {
    let prior = FlatPrior::new(0.0, FRAC_PI_2).unwrap();
    let kind = ProbeKind::coherent();
    let probe = make_probe(kind, kind.default_dims()).unwrap();
    let strategy = optimal_strategy(&probe.state, &prior, DEFAULT_SUPPORT_CUTOFF).unwrap();
    let povm = build_scheme(&SchemeKind::OptimalSingleShot(Box::new(strategy)), probe.state.dims()).unwrap();
    let budget = Budget { samples: 500, force_monte_carlo: true, checkpoints: Checkpoints::All, ..Budget::default() };
    let mut g = c.benchmark_group("mse_repeated");
    g.sample_size(10);
    g.bench_function("coherent-optimal/mu50/500", |b| b.iter(|| mse_repeated(&probe.state, &povm, &prior, 50, &budget).unwrap()));
    g.finish();
}

criterion_group!(benches, personick, likelihood, monte_carlo);
criterion_main!(benches);
