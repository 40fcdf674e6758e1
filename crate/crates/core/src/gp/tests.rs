use super::*;
use crate::response::Observation;
use rand_distr::StandardNormal;

fn scalar_data(xs: &[f64], ys: &[f64], noise: f64) -> Dataset {
    Dataset::from_records(
        xs.iter()
            .zip(ys)
            .map(|(&x, &y)| Observation {
                x: EnvPoint(vec![x]),
                theta_obs: ParamVector::raw(Family::Exponential, vec![y]),
                sigma: vec![noise],
                n_samples: 100,
                seed: 0,
            })
            .collect(),
    )
    .unwrap()
}

fn weibull_data() -> Dataset {
    let pts = [
        [0.1, 0.2],
        [0.8, 0.3],
        [0.4, 0.9],
        [0.55, 0.5],
        [0.2, 0.7],
        [0.9, 0.85],
        [0.35, 0.1],
    ];
    Dataset::from_records(
        pts.iter()
            .enumerate()
            .map(|(i, p)| Observation {
                x: EnvPoint(p.to_vec()),
                theta_obs: ParamVector::raw(
                    Family::Weibull,
                    vec![1.5 + 0.3 * p[0], 2.0 + 0.5 * p[0] * p[0] + 0.3 * p[1]],
                ),
                sigma: vec![1e-3 * (1.0 + i as f64 * 0.1), 0.0, 0.0, 2e-3],
                n_samples: 200,
                seed: i as u64,
            })
            .collect(),
    )
    .unwrap()
}

fn unit1() -> Bounds {
    Bounds::unit(1)
}

fn probes_2d(n: usize) -> Vec<EnvPoint> {
    (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            EnvPoint(vec![(7.3 * t).fract(), (3.1 * t + 0.05).fract()])
        })
        .collect()
}

#[test]
fn noise_free_interpolation() {
    let xs = [0.1, 0.5, 0.9];
    let ys = [1.0, 2.5, 1.7];
    let gp = GPosterior::fit(&scalar_data(&xs, &ys, 0.0), &unit1(), &GpOptions::default(), 1).unwrap();
    for (x, y) in xs.iter().zip(&ys) {
        let p = gp.posterior_at(&EnvPoint(vec![*x]));
        assert!((p.mu[0] - y).abs() <= 1e-6, "mean {} vs {y}", p.mu[0]);
        assert!(p.cov[0] <= 1e-8, "var {}", p.cov[0]);
    }
}

#[test]
fn huge_noise_reverts_to_prior_mean() {
    let xs = [0.1, 0.5, 0.9];
    let ys = [1.0, 2.5, 1.7];
    let gp = GPosterior::fit(&scalar_data(&xs, &ys, 1e6), &unit1(), &GpOptions::default(), 1).unwrap();
    let prior = gp.config().components[0].mean;
    for x in xs {
        let p = gp.posterior_at(&EnvPoint(vec![x]));
        assert!(((p.mu[0] - prior) / prior).abs() < 0.05);
    }
}

#[test]
fn recovers_sine() {
    let xs: Vec<f64> = (0..15).map(|i| i as f64 / 14.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (2.0 * std::f64::consts::PI * x).sin()).collect();
    let gp = GPosterior::fit(&scalar_data(&xs, &ys, 1e-4), &unit1(), &GpOptions::default(), 3).unwrap();
    let n = 500;
    let mse: f64 = (0..n)
        .map(|i| {
            let x = i as f64 / (n - 1) as f64;
            let p = gp.posterior_at(&EnvPoint(vec![x]));
            (p.mu[0] - (2.0 * std::f64::consts::PI * x).sin()).powi(2)
        })
        .sum::<f64>()
        / n as f64;
    assert!(mse.sqrt() <= 0.05, "rmse {}", mse.sqrt());
}

fn fixed_config(dim: usize, comps: usize) -> GPConfig {
    GPConfig {
        kernel: KernelKind::Matern52,
        jitter: 1e-10,
        components: (0..comps)
            .map(|j| ComponentHyper {
                lengthscales: vec![0.25 + 0.1 * j as f64; dim],
                signal_variance: 0.5 + j as f64,
                mean: 1.0 + j as f64,
            })
            .collect(),
    }
}

#[test]
fn reverts_to_prior_far_away() {
    let data = scalar_data(&[0.1, 0.5, 0.9], &[1.0, 2.5, 1.7], 1e-4);
    let cfg = fixed_config(1, 1);
    let gp = GPosterior::from_config(&data, &unit1(), &cfg).unwrap();
    let p = gp.posterior_at(&EnvPoint(vec![0.9 + 10.0 * 0.25 + 0.1]));
    let h = &cfg.components[0];
    assert!(((p.mu[0] - h.mean) / h.mean).abs() < 0.01);
    assert!(((p.cov[0] - h.signal_variance) / h.signal_variance).abs() < 0.01);
}

#[test]
fn reflection_symmetry() {
    let data = scalar_data(&[0.3, 0.7], &[2.0, 2.0], 1e-3);
    let gp = GPosterior::from_config(&data, &unit1(), &fixed_config(1, 1)).unwrap();
    for t in [0.0, 0.05, 0.13, 0.2] {
        let a = gp.posterior_at(&EnvPoint(vec![0.5 - t]));
        let b = gp.posterior_at(&EnvPoint(vec![0.5 + t]));
        assert!((a.mu[0] - b.mu[0]).abs() < 1e-12);
        assert!((a.cov[0] - b.cov[0]).abs() < 1e-12);
    }
}

#[test]
fn realize_identity_and_scale() {
    let data = scalar_data(&[0.2, 0.6], &[1.0, 3.0], 1e-2);
    let mut cfg = fixed_config(1, 1);
    cfg.components[0].signal_variance = 4.0;
    let gp = GPosterior::from_config(&data, &unit1(), &cfg).unwrap();
    let x = EnvPoint(vec![0.95]);
    let p = gp.posterior_at(&x);
    assert_eq!(gp.realize(&x, &[0.0]).unwrap().values, p.mu);
    let r = gp.realize(&x, &[1.0]).unwrap().values[0];
    assert!((r - (p.mu[0] + p.cov[0].sqrt())).abs() < 1e-14);
    // far away: var -> 4, L -> 2
    let far = EnvPoint(vec![50.0]);
    let pf = gp.posterior_at(&far);
    let rf = gp.realize(&far, &[1.0]).unwrap().values[0];
    assert!((rf - pf.mu[0] - 2.0).abs() < 1e-9);
    assert!(gp.realize(&x, &[1.0, 2.0]).is_err());
}

#[test]
fn realize_empirical_covariance() {
    let gp = GPosterior::from_config(&weibull_data(), &Bounds::unit(2), &fixed_config(2, 2)).unwrap();
    let x = EnvPoint(vec![0.65, 0.05]);
    let p = gp.posterior_at(&x);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 100_000;
    let draws: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let u: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
            gp.realize(&x, &u).unwrap().values
        })
        .collect();
    for j in 0..2 {
        let m = draws.iter().map(|d| d[j]).sum::<f64>() / n as f64;
        let v = draws.iter().map(|d| (d[j] - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!(((v - p.cov[j * 2 + j]) / p.cov[j * 2 + j]).abs() < 0.03);
    }
}

#[test]
fn fit_is_deterministic() {
    let data = weibull_data();
    let a = GPosterior::fit(&data, &Bounds::unit(2), &GpOptions::default(), 5).unwrap();
    let b = GPosterior::fit_with(&data, &Bounds::unit(2), &GpOptions::default(), 5, Exec::Sequential)
        .unwrap();
    assert_eq!(a.config(), b.config());
}

#[test]
fn fitted_likelihood_beats_default_start() {
    let data = weibull_data();
    let gp = GPosterior::fit(&data, &Bounds::unit(2), &GpOptions::default(), 5).unwrap();
    let mut cfg = gp.config().clone();
    for c in &mut cfg.components {
        c.lengthscales = vec![0.3, 0.3];
    }
    let other = GPosterior::from_config(&data, &Bounds::unit(2), &cfg).unwrap();
    for j in 0..2 {
        assert!(gp.log_marginal_likelihood(j) >= other.log_marginal_likelihood(j) - 1e-9);
    }
}

#[test]
fn permutation_invariant_predictions() {
    let data = weibull_data();
    let mut recs = data.records().to_vec();
    recs.reverse();
    recs.swap(1, 4);
    let perm = Dataset::from_records(recs).unwrap();
    let cfg = fixed_config(2, 2);
    let a = GPosterior::from_config(&data, &Bounds::unit(2), &cfg).unwrap();
    let b = GPosterior::from_config(&perm, &Bounds::unit(2), &cfg).unwrap();
    for x in probes_2d(40) {
        let (pa, pb) = (a.posterior_at(&x), b.posterior_at(&x));
        for j in 0..2 {
            assert!((pa.mu[j] - pb.mu[j]).abs() < 1e-12);
            assert!((pa.cov[j * 2 + j] - pb.cov[j * 2 + j]).abs() < 1e-12);
        }
    }
}

#[test]
fn variance_bounded_by_prior() {
    let gp = GPosterior::fit(&weibull_data(), &Bounds::unit(2), &GpOptions::default(), 2).unwrap();
    for x in probes_2d(200) {
        let p = gp.posterior_at(&x);
        for j in 0..2 {
            let s2 = gp.config().components[j].signal_variance;
            assert!(p.cov[j * 2 + j] <= s2 + 1e-12);
            assert!(p.cov[j * 2 + j] >= 0.0);
        }
    }
}

#[test]
fn exact_conditioning_collapses_variance() {
    let gp = GPosterior::from_config(&weibull_data(), &Bounds::unit(2), &fixed_config(2, 2)).unwrap();
    let xs = EnvPoint(vec![0.7, 0.6]);
    let p = gp.posterior_at(&xs);
    let g2 = gp.condition_on(&xs, &p.mu, &[0.0; 4]).unwrap();
    let q = g2.posterior_at(&xs);
    for j in 0..2 {
        assert!(q.cov[j * 2 + j] <= 1e-9);
        assert!((q.mu[j] - p.mu[j]).abs() < 1e-9);
    }
    for x in probes_2d(100) {
        let (a, b) = (gp.posterior_at(&x), g2.posterior_at(&x));
        for j in 0..2 {
            assert!(b.cov[j * 2 + j] <= a.cov[j * 2 + j] + 1e-12);
        }
    }
}

#[test]
fn uninformative_fantasy_changes_nothing() {
    let gp = GPosterior::from_config(&weibull_data(), &Bounds::unit(2), &fixed_config(2, 2)).unwrap();
    let xs = EnvPoint(vec![0.3, 0.4]);
    let g2 = gp.condition_on(&xs, &[10.0, -4.0], &[1e12, 0.0, 0.0, 1e12]).unwrap();
    for x in probes_2d(50) {
        let (a, b) = (gp.posterior_at(&x), g2.posterior_at(&x));
        for j in 0..4 {
            assert!((a.mu.get(j).unwrap_or(&0.0) - b.mu.get(j).unwrap_or(&0.0)).abs() < 1e-6);
            assert!((a.cov[j] - b.cov[j]).abs() < 1e-6);
        }
    }
}

#[test]
fn fantasy_matches_rebuild() {
    let data = weibull_data();
    let bounds = Bounds::unit(2);
    let gp = GPosterior::fit(&data, &bounds, &GpOptions::default(), 4).unwrap();
    let xs = EnvPoint(vec![0.62, 0.21]);
    let theta = [1.9, 2.4];
    let noise = [2e-3, 0.0, 0.0, 5e-3];
    let fast = gp.condition_on(&xs, &theta, &noise).unwrap();

    let mut recs = data.records().to_vec();
    recs.push(Observation {
        x: xs.clone(),
        theta_obs: ParamVector::raw(Family::Weibull, theta.to_vec()),
        sigma: noise.to_vec(),
        n_samples: 0,
        seed: 0,
    });
    let rebuilt =
        GPosterior::from_config(&Dataset::from_records(recs).unwrap(), &bounds, gp.config()).unwrap();
    for x in probes_2d(50) {
        let (a, b) = (fast.posterior_at(&x), rebuilt.posterior_at(&x));
        for j in 0..2 {
            assert!((a.mu[j] - b.mu[j]).abs() < 1e-10);
            assert!((a.cov[j * 2 + j] - b.cov[j * 2 + j]).abs() < 1e-10);
        }
    }
}

#[test]
fn fantasy_plan_matches_condition_on() {
    let gp = GPosterior::fit(&weibull_data(), &Bounds::unit(2), &GpOptions::default(), 4).unwrap();
    let probes = probes_2d(60);
    let cache = gp.fantasy_cache(&probes, Exec::Parallel);
    assert_eq!(cache.field(), gp.field(&probes, Exec::Sequential));
    let xs = EnvPoint(vec![0.45, 0.75]);
    let noise = [3e-3, 1e-3];
    let plan = gp.fantasy_plan(&cache, &xs, &noise);
    let theta = [plan.mu_x[0] + 0.7 * plan.sd_x[0], plan.mu_x[1] - 1.3 * plan.sd_x[1]];
    let field = plan.apply(&cache, &theta);
    let exact = gp
        .condition_on(&xs, &theta, &[noise[0], 0.0, 0.0, noise[1]])
        .unwrap()
        .field(&probes, Exec::Sequential);
    for j in 0..2 {
        for m in 0..probes.len() {
            assert!((field.means[j][m] - exact.means[j][m]).abs() < 1e-10);
            assert!((field.sds[j][m].powi(2) - exact.sds[j][m].powi(2)).abs() < 1e-10);
        }
    }
}

#[test]
fn adding_data_never_increases_variance() {
    let data = weibull_data();
    let bounds = Bounds::unit(2);
    let cfg = fixed_config(2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut gp = GPosterior::from_config(&data, &bounds, &cfg).unwrap();
    let probes = probes_2d(80);
    for _ in 0..10 {
        let x = EnvPoint(vec![rng.random(), rng.random()]);
        let next = gp
            .condition_on(&x, &[rng.random(), rng.random()], &[rng.random::<f64>() * 0.01, 0.0, 0.0, 0.0])
            .unwrap();
        let (a, b) = (gp.field(&probes, Exec::Sequential), next.field(&probes, Exec::Sequential));
        for j in 0..2 {
            for m in 0..probes.len() {
                assert!(b.sds[j][m] <= a.sds[j][m] + 1e-12);
            }
        }
        gp = next;
    }
}

#[test]
fn config_mismatch_is_rejected() {
    assert!(GPosterior::from_config(&weibull_data(), &Bounds::unit(2), &fixed_config(2, 1)).is_err());
    assert!(GPosterior::fit(&Dataset::new(), &Bounds::unit(2), &GpOptions::default(), 0).is_err());
}

#[test]
fn single_record_uses_default_hyperparameters() {
    let data = scalar_data(&[0.4], &[2.0], 1e-3);
    let gp = GPosterior::fit(&data, &unit1(), &GpOptions::default(), 0).unwrap();
    let p = gp.posterior_at(&EnvPoint(vec![0.95]));
    assert!(p.cov[0] > 0.0);
}
