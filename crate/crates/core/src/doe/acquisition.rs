//! Expected posterior variance of the quantity of interest after one more
//! experiment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::{EnvPoint, ImportanceSample};
use crate::error::{Error, Result};
use crate::estimator::{compute_h_k, estimate_from_field, estimate_from_field_hinted, ExtremeSpec, QoIEstimate};
use crate::exec::Exec;
use crate::gp::{FantasyCache, GPosterior};
use crate::response::Dataset;
use crate::ut::SigmaPointSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionValue {
    pub x: EnvPoint,
    pub s_k: f64,
    /// `Ĥ_{k+1,q}` for each sigma point.
    pub per_sigma_h: Vec<f64>,
}

/// Covariance (row-major) of the record nearest to `x` in standardized
/// coordinates. Ties go to the lowest record index.
pub fn sigma_tilde(x: &EnvPoint, data: &Dataset, bounds: &crate::env::Bounds) -> Result<Vec<f64>> {
    let z = bounds.standardize(x.coords());
    let mut best: Option<(f64, usize)> = None;
    for (i, r) in data.records().iter().enumerate() {
        let zr = bounds.standardize(r.x.coords());
        let d2: f64 = z.iter().zip(&zr).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.is_none_or(|(b, _)| d2 < b) {
            best = Some((d2, i));
        }
    }
    match best {
        Some((_, i)) => Ok(data.records()[i].sigma.clone()),
        None => Err(Error::Input("noise heuristic needs a nonempty dataset".into())),
    }
}

fn diagonal(m: &[f64], d: usize) -> Vec<f64> {
    (0..d).map(|j| m[j * d + j]).collect()
}

/// Scores candidates against a fixed surrogate, reusing per-point posterior
/// quantities across all fantasy updates.
pub struct Acquirer<'a> {
    gp: &'a GPosterior,
    data: &'a Dataset,
    is: &'a ImportanceSample,
    sp: &'a SigmaPointSet,
    spec: &'a ExtremeSpec,
    cache: FantasyCache,
    current: QoIEstimate,
}

impl<'a> Acquirer<'a> {
    pub fn new(
        gp: &'a GPosterior,
        data: &'a Dataset,
        is: &'a ImportanceSample,
        sp: &'a SigmaPointSet,
        spec: &'a ExtremeSpec,
        exec: Exec,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Input("acquisition needs at least one record".into()));
        }
        let cache = gp.fantasy_cache(&is.points, exec);
        let current = estimate_from_field(gp.family(), &cache.field(), &is.weights, sp, spec, exec)?;
        Ok(Self {
            gp,
            data,
            is,
            sp,
            spec,
            cache,
            current,
        })
    }

    /// Estimate under the current surrogate.
    pub fn current(&self) -> &QoIEstimate {
        &self.current
    }

    pub fn score(&self, x: &EnvPoint) -> Result<AcquisitionValue> {
        let d = self.gp.n_components();
        let noise = diagonal(&sigma_tilde(x, self.data, self.gp.bounds())?, d);
        let plan = self.gp.fantasy_plan(&self.cache, x, &noise);
        let mut per_sigma_h = Vec::with_capacity(self.sp.len());
        for u in &self.sp.points {
            let theta: Vec<f64> = (0..d).map(|j| plan.mu_x[j] + plan.sd_x[j] * u[j]).collect();
            let field = plan.apply(&self.cache, &theta);
            let est = estimate_from_field_hinted(
                self.gp.family(),
                &field,
                &self.is.weights,
                self.sp,
                self.spec,
                Some(&self.current.z_per_sigma),
                Exec::Sequential,
            )?;
            per_sigma_h.push(est.variance);
        }
        let s_k = weighted_sum(&self.sp.weights, &per_sigma_h);
        Ok(AcquisitionValue {
            x: x.clone(),
            s_k,
            per_sigma_h,
        })
    }

    /// Scores every candidate, in candidate order.
    pub fn score_all(&self, candidates: &[EnvPoint], exec: Exec) -> Result<Vec<AcquisitionValue>> {
        exec.try_map(candidates.len(), |i| self.score(&candidates[i]))
    }

    /// Index and value of the minimizing candidate; ties go to the lowest index.
    pub fn select_next(&self, candidates: &[EnvPoint], exec: Exec) -> Result<(usize, AcquisitionValue)> {
        let scores = self.score_all(candidates, exec)?;
        argmin(scores)
    }

    /// The `count` importance points with the largest weight times posterior
    /// variance (each component scaled by its signal variance).
    pub fn high_variance_points(&self, count: usize) -> Vec<EnvPoint> {
        let field = self.cache.field();
        let scale: Vec<f64> = self
            .gp
            .config()
            .components
            .iter()
            .map(|c| c.signal_variance)
            .collect();
        let mut ranked: Vec<(f64, usize)> = (0..field.len())
            .map(|m| {
                let v: f64 = (0..field.n_components())
                    .map(|j| field.sds[j][m].powi(2) / scale[j])
                    .sum();
                (self.is.weights[m] * v, m)
            })
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        ranked
            .into_iter()
            .take(count)
            .map(|(_, m)| self.is.points[m].clone())
            .collect()
    }
}

fn weighted_sum(w: &[f64], v: &[f64]) -> f64 {
    w.iter().zip(v).map(|(a, b)| a * b).sum::<f64>().max(0.0)
}

fn argmin(scores: Vec<AcquisitionValue>) -> Result<(usize, AcquisitionValue)> {
    let mut best: Option<(usize, AcquisitionValue)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        if best.as_ref().is_none_or(|(_, b)| s.s_k < b.s_k) {
            best = Some((i, s));
        }
    }
    best.ok_or_else(|| Error::Input("candidate list is empty".into()))
}

/// Acquisition value computed by exact GP reconditioning for every sigma
/// point. Slow reference for [`Acquirer::score`].
pub fn acquisition(
    x: &EnvPoint,
    gp: &GPosterior,
    data: &Dataset,
    is: &ImportanceSample,
    sp: &SigmaPointSet,
    spec: &ExtremeSpec,
    exec: Exec,
) -> Result<AcquisitionValue> {
    let noise = sigma_tilde(x, data, gp.bounds())?;
    let mut per_sigma_h = Vec::with_capacity(sp.len());
    for u in &sp.points {
        let theta = gp.realize(x, u)?;
        let fantasy = gp.condition_on(x, &theta.values, &noise)?;
        per_sigma_h.push(compute_h_k(&fantasy, is, sp, spec, exec)?.variance);
    }
    Ok(AcquisitionValue {
        x: x.clone(),
        s_k: weighted_sum(&sp.weights, &per_sigma_h),
        per_sigma_h,
    })
}

/// Monte Carlo estimate of the expected next-step variance at `x`.
///
/// The hypothetical observation is drawn from the GP prediction at `x` plus
/// observation noise `Σ̃(x)`. Draws are common across `x` for a given seed.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_acquisition(
    x: &EnvPoint,
    gp: &GPosterior,
    data: &Dataset,
    is: &ImportanceSample,
    sp: &SigmaPointSet,
    spec: &ExtremeSpec,
    n_draws: usize,
    seed: u64,
    exec: Exec,
) -> Result<f64> {
    if n_draws == 0 {
        return Err(Error::Input("n_draws must be positive".into()));
    }
    let d = gp.n_components();
    let noise = sigma_tilde(x, data, gp.bounds())?;
    let pred = gp.posterior_at(x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<Vec<f64>> = (0..n_draws)
        .map(|_| {
            (0..d)
                .map(|j| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    pred.mu[j] + (pred.cov[j * d + j] + noise[j * d + j]).sqrt() * z
                })
                .collect()
        })
        .collect();
    let hs = exec.try_map(n_draws, |i| {
        let fantasy = gp.condition_on(x, &draws[i], &noise)?;
        Ok::<_, Error>(compute_h_k(&fantasy, is, sp, spec, Exec::Sequential)?.variance)
    })?;
    Ok(hs.iter().sum::<f64>() / n_draws as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Bounds;
    use crate::gp::GpOptions;
    use crate::response::{Observation, ParamVector};
    use crate::response::Family;
    use crate::ut::{default_kappa, sigma_points};

    fn record(x: Vec<f64>, beta: f64, var: f64) -> Observation {
        Observation {
            x: EnvPoint(x),
            theta_obs: ParamVector::new(Family::Exponential, vec![beta]).unwrap(),
            sigma: vec![var],
            n_samples: 100,
            seed: 0,
        }
    }

    #[test]
    fn nearest_record_and_ties() {
        let b = Bounds::unit(2);
        let mut data = Dataset::new();
        data.push(record(vec![0.0, 0.0], 1.0, 0.1)).unwrap();
        data.push(record(vec![1.0, 1.0], 1.0, 0.2)).unwrap();
        assert_eq!(sigma_tilde(&EnvPoint(vec![0.1, 0.0]), &data, &b).unwrap(), vec![0.1]);
        assert_eq!(sigma_tilde(&EnvPoint(vec![1.0, 1.0]), &data, &b).unwrap(), vec![0.2]);
        assert_eq!(sigma_tilde(&EnvPoint(vec![0.5, 0.5]), &data, &b).unwrap(), vec![0.1]);
        assert!(sigma_tilde(&EnvPoint(vec![0.5, 0.5]), &Dataset::new(), &b).is_err());
    }

    fn setup_1d(noise: f64) -> (GPosterior, Dataset, ImportanceSample, SigmaPointSet, ExtremeSpec) {
        let problem = crate::fixtures::fixture_1d();
        let mut data = Dataset::new();
        for x in [0.1, 0.45, 0.95] {
            let beta = problem.theta_at(&[x])[0];
            data.push(record(vec![x], beta, noise)).unwrap();
        }
        let gp = GPosterior::fit(&data, &problem.env.bounds, &GpOptions::default(), 1).unwrap();
        let is = problem.env.draw_importance_samples(300, 5).unwrap();
        let sp = sigma_points(1, default_kappa(1)).unwrap();
        (gp, data, is, sp, problem.spec)
    }

    #[test]
    fn cached_score_matches_exact_reconditioning() {
        let (gp, data, is, sp, spec) = setup_1d(1e-3);
        let acq = Acquirer::new(&gp, &data, &is, &sp, &spec, Exec::Sequential).unwrap();
        for x in [0.0, 0.3, 0.7, 0.45] {
            let x = EnvPoint(vec![x]);
            let a = acq.score(&x).unwrap();
            let b = acquisition(&x, &gp, &data, &is, &sp, &spec, Exec::Sequential).unwrap();
            assert!((a.s_k - b.s_k).abs() <= 1e-9 * (1.0 + b.s_k), "{} vs {}", a.s_k, b.s_k);
            let sum: f64 = sp.weights.iter().zip(&a.per_sigma_h).map(|(w, h)| w * h).sum();
            assert!((a.s_k - sum).abs() <= 1e-12);
        }
    }

    #[test]
    fn noise_free_duplicate_leaves_variance_unchanged() {
        let (gp, data, is, sp, spec) = setup_1d(0.0);
        let acq = Acquirer::new(&gp, &data, &is, &sp, &spec, Exec::Sequential).unwrap();
        let h = acq.current().variance;
        assert!(h > 0.0);
        let v = acq.score(&EnvPoint(vec![0.45])).unwrap();
        assert!((v.s_k - h).abs() <= 1e-9, "{} vs {h}", v.s_k);
    }

    #[test]
    fn contraction_and_duplicate_not_selected() {
        let (gp, data, is, sp, spec) = setup_1d(0.0);
        let acq = Acquirer::new(&gp, &data, &is, &sp, &spec, Exec::Parallel).unwrap();
        let h = acq.current().variance;
        let cands: Vec<EnvPoint> = (0..25).map(|i| EnvPoint(vec![i as f64 / 24.0])).collect();
        let mut with_dup = vec![EnvPoint(vec![0.45])];
        with_dup.extend(cands.iter().cloned());
        let scores = acq.score_all(&with_dup, Exec::Parallel).unwrap();
        for s in &scores {
            assert!(s.s_k >= 0.0 && s.s_k <= h + 1e-6 * (1.0 + h), "{} > {h}", s.s_k);
        }
        let (i, _) = acq.select_next(&with_dup, Exec::Sequential).unwrap();
        assert_ne!(i, 0);
        let (j, v) = acq.select_next(&cands, Exec::Parallel).unwrap();
        let exhaustive = scores[1..]
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |b, (k, s)| if s.s_k < b.1 { (k, s.s_k) } else { b });
        assert_eq!(j, exhaustive.0);
        assert_eq!(v.s_k, exhaustive.1);
        let (only, _) = acq.select_next(&cands[3..4], Exec::Sequential).unwrap();
        assert_eq!(only, 0);
    }

    #[test]
    fn zero_variance_surrogate_scores_zero() {
        let (_, _, _, sp, spec) = setup_1d(0.0);
        let problem = crate::fixtures::fixture_1d();
        let xs = [0.1, 0.3, 0.5, 0.7, 0.9];
        let mut data = Dataset::new();
        for &x in &xs {
            data.push(record(vec![x], problem.theta_at(&[x])[0], 0.0)).unwrap();
        }
        let gp = GPosterior::fit(&data, &problem.env.bounds, &GpOptions::default(), 0).unwrap();
        let is = ImportanceSample {
            points: xs.iter().map(|&x| EnvPoint(vec![x])).collect(),
            weights: vec![0.2; 5],
            m_total: 5,
            volume: 1.0,
            density_value: 1.0,
        };
        let acq = Acquirer::new(&gp, &data, &is, &sp, &spec, Exec::Sequential).unwrap();
        let h = acq.current().variance;
        // only diagonal jitter is left
        assert!(h < 1e-8, "{h}");
        for x in [0.0, 0.33, 0.5, 1.0] {
            let s = acq.score(&EnvPoint(vec![x])).unwrap().s_k;
            assert!(s <= h * (1.0 + 1e-6), "{s} vs {h}");
        }
    }

    #[test]
    fn high_variance_points_are_sorted() {
        let (gp, data, is, sp, spec) = setup_1d(1e-3);
        let acq = Acquirer::new(&gp, &data, &is, &sp, &spec, Exec::Sequential).unwrap();
        let pts = acq.high_variance_points(5);
        assert_eq!(pts.len(), 5);
        let var_at = |p: &EnvPoint| gp.posterior_at(p).cov[0];
        assert!(var_at(&pts[0]) >= var_at(&pts[4]) * 0.999);
    }
}
