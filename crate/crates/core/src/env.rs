//! Long-term environment models and the uniform-on-practical-support
//! importance sampler.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;

/// A point in environment space (e.g. significant wave height, peak period).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnvPoint(pub Vec<f64>);

impl EnvPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl From<Vec<f64>> for EnvPoint {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Axis-aligned box `V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let b = Self { lo, hi };
        b.validate()?;
        Ok(b)
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return Err(Error::Input(format!(
                "bounds need matching non-empty lo/hi (got {} and {})",
                self.lo.len(),
                self.hi.len()
            )));
        }
        for (i, (l, h)) in self.lo.iter().zip(&self.hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::Input(format!(
                    "bounds dimension {i}: need finite lo < hi, got [{l}, {h}]"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    /// Maps `x` to unit-cube coordinates.
    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| (v - l) / (h - l))
            .collect()
    }

    /// Inverse of [`Bounds::standardize`].
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| l + v * (h - l))
            .collect()
    }
}

/// One-dimensional marginal density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Weibull {
        shape: f64,
        scale: f64,
        #[serde(default)]
        location: f64,
    },
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Marginal::Weibull { shape, scale, location } => {
                shape > 0.0 && scale > 0.0 && location.is_finite()
            }
            Marginal::LogNormal { mu, sigma } => mu.is_finite() && sigma > 0.0,
            Marginal::Normal { mean, sd } => mean.is_finite() && sd > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!("invalid marginal {self:?}")))
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Weibull { shape, scale, location } => {
                let z = (x - location) / scale;
                if z < 0.0 {
                    return 0.0;
                }
                if z == 0.0 {
                    return if shape < 1.0 {
                        f64::INFINITY
                    } else if shape == 1.0 {
                        1.0 / scale
                    } else {
                        0.0
                    };
                }
                shape / scale * z.powf(shape - 1.0) * (-z.powf(shape)).exp()
            }
            Marginal::LogNormal { mu, sigma } => lognormal_pdf(x, mu, sigma),
            Marginal::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Weibull { shape, scale, location } => {
                let u: f64 = rng.random();
                // 1 - u lies in (0, 1]
                location + scale * (-(1.0 - u).ln()).powf(1.0 / shape)
            }
            Marginal::LogNormal { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                (mu + sigma * z).exp()
            }
            Marginal::Normal { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sd * z
            }
        }
    }
}

fn lognormal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let z = (x.ln() - mu) / sigma;
    (-0.5 * z * z).exp() / (x * sigma * (2.0 * PI).sqrt())
}

/// Two-dimensional metocean-style density: a Weibull marginal for the first
/// variable and a lognormal for the second whose log-mean and log-sd depend on
/// the first:
///
/// ```text
/// ln x2 | x1 ~ Normal(a0 + a1 * x1^a2, b0 + b1 * exp(-b2 * x1))
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hierarchical {
    pub first: Marginal,
    pub log_mean: [f64; 3],
    pub log_sd: [f64; 3],
}

impl Hierarchical {
    fn conditional(&self, x1: f64) -> (f64, f64) {
        let [a0, a1, a2] = self.log_mean;
        let [b0, b1, b2] = self.log_sd;
        let m = a0 + a1 * x1.max(0.0).powf(a2);
        let s = b0 + b1 * (-b2 * x1).exp();
        (m, s)
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        let p1 = self.first.pdf(x[0]);
        if p1 == 0.0 {
            return 0.0;
        }
        let (m, s) = self.conditional(x[0]);
        p1 * lognormal_pdf(x[1], m, s)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let x1 = self.first.sample(rng);
        let (m, s) = self.conditional(x1);
        let z: f64 = rng.sample(StandardNormal);
        [x1, (m + s * z).exp()]
    }
}

/// Joint environment density `f_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvDensity {
    /// Uniform on the model bounds.
    Uniform,
    /// Independent marginals, one per dimension.
    Product { marginals: Vec<Marginal> },
    Hierarchical(Hierarchical),
    /// Degenerate environment concentrated at one point.
    PointMass { at: Vec<f64> },
}

/// Environment model: density, practical-support box `V`, and threshold `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvModel {
    pub density: EnvDensity,
    pub bounds: Bounds,
    pub threshold: f64,
    #[serde(default)]
    pub labels: Vec<String>,
}

impl EnvModel {
    pub fn new(density: EnvDensity, bounds: Bounds, threshold: f64) -> Result<Self> {
        let m = Self {
            density,
            bounds,
            threshold,
            labels: Vec::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        self.labels = labels;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::Input(format!(
                "threshold c must be positive, got {}",
                self.threshold
            )));
        }
        let d = self.bounds.dim();
        match &self.density {
            EnvDensity::Uniform => {}
            EnvDensity::Product { marginals } => {
                if marginals.len() != d {
                    return Err(Error::Input(format!(
                        "{} marginals for a {d}-dimensional box",
                        marginals.len()
                    )));
                }
                for m in marginals {
                    m.validate()?;
                }
            }
            EnvDensity::Hierarchical(h) => {
                if d != 2 {
                    return Err(Error::Input(
                        "hierarchical density is two-dimensional".into(),
                    ));
                }
                h.first.validate()?;
            }
            EnvDensity::PointMass { at } => {
                if at.len() != d {
                    return Err(Error::Input("point mass dimension mismatch".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    /// Evaluates `f_x(x)`. A point mass reports `+inf` at its atom.
    pub fn density(&self, x: &EnvPoint) -> Result<f64> {
        if x.dim() != self.dim() {
            return Err(Error::Input(format!(
                "point has dimension {}, model has {}",
                x.dim(),
                self.dim()
            )));
        }
        Ok(self.density_unchecked(x.coords()))
    }

    pub(crate) fn density_unchecked(&self, x: &[f64]) -> f64 {
        match &self.density {
            EnvDensity::Uniform => {
                if self.bounds.contains(x) {
                    1.0 / self.bounds.volume()
                } else {
                    0.0
                }
            }
            EnvDensity::Product { marginals } => {
                marginals.iter().zip(x).map(|(m, v)| m.pdf(*v)).product()
            }
            EnvDensity::Hierarchical(h) => h.pdf(x),
            EnvDensity::PointMass { at } => {
                if at.as_slice() == x {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
        }
    }

    /// Draws one point from `f_x` by direct sampling. Uniform models sample `V`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.density {
            EnvDensity::Uniform => {
                let u: Vec<f64> = (0..self.dim()).map(|_| rng.random::<f64>()).collect();
                self.bounds.from_unit(&u)
            }
            EnvDensity::Product { marginals } => marginals.iter().map(|m| m.sample(rng)).collect(),
            EnvDensity::Hierarchical(h) => h.sample(rng).to_vec(),
            EnvDensity::PointMass { at } => at.clone(),
        }
    }

    /// Proposes a threshold `c` such that grid cells with density at or below
    /// `c` carry about `mass_quantile` of the grid-integrated mass.
    pub fn propose_threshold(&self, mass_quantile: f64, per_dim: usize) -> Result<f64> {
        if !(mass_quantile > 0.0 && mass_quantile < 1.0) || per_dim < 2 {
            return Err(Error::Input(
                "threshold proposal needs 0 < quantile < 1 and at least 2 cells per axis".into(),
            ));
        }
        let (values, cell) = self.grid_values(per_dim);
        let mut v: Vec<f64> = values.into_iter().filter(|f| f.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        let total: f64 = v.iter().sum::<f64>() * cell;
        if !(total > 0.0) {
            return Err(Error::Input("density vanishes on the whole grid".into()));
        }
        let mut acc = 0.0;
        let mut c = v[0];
        for f in &v {
            acc += f * cell;
            if acc > mass_quantile * total {
                break;
            }
            c = *f;
        }
        Ok(c.max(f64::MIN_POSITIVE))
    }

    /// Density at the cell centers of a regular grid over `V`, plus the cell volume.
    pub fn grid_values(&self, per_dim: usize) -> (Vec<f64>, f64) {
        let d = self.dim();
        let total = per_dim.pow(d as u32);
        let cell: f64 = self.bounds.volume() / total as f64;
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; d];
        let mut u = vec![0.0; d];
        for _ in 0..total {
            for k in 0..d {
                u[k] = (idx[k] as f64 + 0.5) / per_dim as f64;
            }
            out.push(self.density_unchecked(&self.bounds.from_unit(&u)));
            for k in 0..d {
                idx[k] += 1;
                if idx[k] < per_dim {
                    break;
                }
                idx[k] = 0;
            }
        }
        (out, cell)
    }

    pub fn draw_importance_samples(&self, m_total: usize, seed: u64) -> Result<ImportanceSample> {
        self.draw_importance_samples_with(m_total, seed, Exec::default())
    }

    /// Uniform proposals on `V`, keeping those with `f_x > c`; weights are
    /// `f_x / h_x` with `h_x = M_tot / (|V| M)`, rescaled to sum to one.
    pub fn draw_importance_samples_with(
        &self,
        m_total: usize,
        seed: u64,
        exec: Exec,
    ) -> Result<ImportanceSample> {
        if m_total == 0 {
            return Err(Error::Input("m_total must be at least 1".into()));
        }
        if let EnvDensity::PointMass { at } = &self.density {
            let mut s = ImportanceSample::point_mass(EnvPoint(at.clone()));
            s.m_total = m_total;
            return Ok(s);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kept = self.propose(&mut rng, m_total, exec);
        let (points, raw) = kept.into_iter().map(|(_, x, f)| (x, f)).unzip();
        self.finish_importance(points, raw, m_total)
    }

    /// Like [`EnvModel::draw_importance_samples_with`], drawing proposals from
    /// the same seeded stream until `m` of them are retained. `m_total` counts
    /// proposals up to and including the `m`-th retained one.
    pub fn draw_importance_samples_retained(&self, m: usize, seed: u64, exec: Exec) -> Result<ImportanceSample> {
        if m == 0 {
            return Err(Error::Input("M must be at least 1".into()));
        }
        if let EnvDensity::PointMass { at } = &self.density {
            let mut s = ImportanceSample::point_mass(EnvPoint(at.clone()));
            s.m_total = m;
            return Ok(s);
        }
        let cap = m.saturating_mul(10_000);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut points, mut raw) = (Vec::with_capacity(m), Vec::with_capacity(m));
        let mut m_total = 0;
        while points.len() < m && m_total < cap {
            let offset = m_total;
            m_total += m;
            for (i, x, f) in self.propose(&mut rng, m, exec) {
                points.push(x);
                raw.push(f);
                if points.len() == m {
                    m_total = offset + i + 1;
                    break;
                }
            }
        }
        self.finish_importance(points, raw, m_total)
    }

    /// `n` uniform proposals on `V`; returns `(index, point, density)` for the
    /// retained ones.
    fn propose<R: Rng + ?Sized>(&self, rng: &mut R, n: usize, exec: Exec) -> Vec<(usize, EnvPoint, f64)> {
        let d = self.dim();
        let proposals: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let u: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                self.bounds.from_unit(&u)
            })
            .collect();
        let dens = exec.map(n, |i| self.density_unchecked(&proposals[i]));
        proposals
            .into_iter()
            .zip(dens)
            .enumerate()
            .filter(|(_, (_, f))| *f > self.threshold)
            .map(|(i, (x, f))| (i, EnvPoint(x), f))
            .collect()
    }

    fn finish_importance(&self, points: Vec<EnvPoint>, raw: Vec<f64>, m_total: usize) -> Result<ImportanceSample> {
        let m = points.len();
        if m == 0 {
            return Err(Error::DegenerateSupport {
                c: self.threshold,
                m_total,
            });
        }
        let volume = self.bounds.volume();
        let h = m_total as f64 / (volume * m as f64);
        let unnorm: Vec<f64> = raw.iter().map(|f| f / h).collect();
        let total: f64 = unnorm.iter().sum();
        let weights = unnorm.iter().map(|w| w / total).collect();
        Ok(ImportanceSample {
            points,
            weights,
            m_total,
            volume,
            density_value: h,
        })
    }
}

/// Self-normalized importance sample `{(x_m, w_m)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceSample {
    pub points: Vec<EnvPoint>,
    pub weights: Vec<f64>,
    pub m_total: usize,
    pub volume: f64,
    /// Estimate of the constant importance density `h_x`.
    pub density_value: f64,
}

impl ImportanceSample {
    pub fn point_mass(x: EnvPoint) -> Self {
        Self {
            points: vec![x],
            weights: vec![1.0],
            m_total: 1,
            volume: 0.0,
            density_value: f64::INFINITY,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Share of proposals that survived the threshold.
    pub fn retained_fraction(&self) -> f64 {
        self.len() as f64 / self.m_total as f64
    }

    /// Kish effective sample size.
    pub fn effective_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// `Σ w_m φ(x_m)` in index order.
    pub fn expectation<F: Fn(&EnvPoint) -> f64>(&self, phi: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * phi(x))
            .sum()
    }

    /// Writes `x_1..x_d,weight` CSV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.points.first().map_or(0, |p| p.dim());
        let header: Vec<String> = (1..=d)
            .map(|i| format!("x_{i}"))
            .chain(std::iter::once("weight".to_string()))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (p, w) in self.points.iter().zip(&self.weights) {
            let row: Vec<String> = p
                .coords()
                .iter()
                .chain(std::iter::once(w))
                .map(|v| v.to_string())
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}
