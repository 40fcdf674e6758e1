use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use surrex_core::doe::{candidate_set, initial_design, Acquirer};
use surrex_core::env::ImportanceSample;
use surrex_core::estimator::compute_h_k;
use surrex_core::fixtures::fixture_a;
use surrex_core::gp::{GPosterior, GpOptions};
use surrex_core::oracle::{mc_marginal_cdf, SyntheticProblem};
use surrex_core::response::{mle_fit, Dataset, Observation};
use surrex_core::ut::{default_kappa, sigma_points, SigmaPointSet};
use surrex_core::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn setup() -> (SyntheticProblem, Dataset, GPosterior, ImportanceSample, SigmaPointSet) {
    let p = fixture_a();
    let records = initial_design(&p.env, 12, 1)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            let fit = mle_fit(p.family, &p.simulate(x.coords(), 200, i as u64)).unwrap();
            Observation {
                x,
                theta_obs: fit.theta,
                sigma: fit.sigma,
                n_samples: 200,
                seed: i as u64,
            }
        })
        .collect();
    let data = Dataset::from_records(records).unwrap();
    let gp = GPosterior::fit(&data, &p.env.bounds, &GpOptions::default(), 1).unwrap();
    let is = p.env.draw_importance_samples_retained(2_000, 2, Exec::Parallel).unwrap();
    let sp = sigma_points(2, default_kappa(2)).unwrap();
    (p, data, gp, is, sp)
}

fn bench_h_k(c: &mut Criterion) {
    let (p, _, gp, is, sp) = setup();
    let mut g = c.benchmark_group("compute_h_k");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| compute_h_k(&gp, &is, &sp, &p.spec, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_acquisition(c: &mut Criterion) {
    let (p, data, gp, is, sp) = setup();
    let cands = candidate_set(&p.env, 32, 3).unwrap();
    let mut g = c.benchmark_group("acquisition_sweep");
    g.sample_size(10);
    for (name, exec) in MODES {
        let acq = Acquirer::new(&gp, &data, &is, &sp, &p.spec, exec).unwrap();
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| acq.score_all(&cands, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_oracle(c: &mut Criterion) {
    let p = fixture_a();
    let mut g = c.benchmark_group("mc_marginal_cdf");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| mc_marginal_cdf(&p, 3.0, 100_000, 1, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_h_k, bench_acquisition, bench_oracle);
criterion_main!(benches);
