//! Base forecast marginals and one-dimensional density estimators.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const LN_FACT_TABLE: usize = 1 << 16;
/// Batch size from which count draws go through a cumulative table.
const INVERSION_MIN_DRAWS: usize = 64;
const MAX_CDF_TABLE: usize = 1 << 20;

fn ln_factorial(k: u64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        (0..LN_FACT_TABLE)
            .map(|i| ln_gamma(i as f64 + 1.0))
            .collect()
    });
    match table.get(k as usize) {
        Some(&v) => v,
        None => ln_gamma(k as f64 + 1.0),
    }
}

/// Integer value of `x`, if it is a non-negative whole number.
fn as_count(x: f64) -> Option<u64> {
    (x >= 0.0 && x.fract() == 0.0 && x < 9.0e15).then_some(x as u64)
}

/// Forecast marginal of one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum ForecastDistribution {
    Gaussian {
        mean: f64,
        sd: f64,
    },
    Poisson {
        rate: f64,
    },
    /// Variance is `mean + mean^2 / dispersion`.
    #[serde(rename = "negbin")]
    NegativeBinomial {
        mean: f64,
        dispersion: f64,
    },
    #[serde(rename = "samples_discrete")]
    EmpiricalDiscrete {
        samples: Vec<u64>,
    },
    #[serde(rename = "samples_continuous")]
    EmpiricalContinuous {
        samples: Vec<f64>,
    },
}

impl ForecastDistribution {
    pub fn gaussian(mean: f64, sd: f64) -> Result<Self> {
        let d = Self::Gaussian { mean, sd };
        d.validate()?;
        Ok(d)
    }

    pub fn poisson(rate: f64) -> Result<Self> {
        let d = Self::Poisson { rate };
        d.validate()?;
        Ok(d)
    }

    pub fn negative_binomial(mean: f64, dispersion: f64) -> Result<Self> {
        let d = Self::NegativeBinomial { mean, dispersion };
        d.validate()?;
        Ok(d)
    }

    pub fn empirical_discrete(samples: Vec<u64>) -> Result<Self> {
        let d = Self::EmpiricalDiscrete { samples };
        d.validate()?;
        Ok(d)
    }

    pub fn empirical_continuous(samples: Vec<f64>) -> Result<Self> {
        let d = Self::EmpiricalContinuous { samples };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            Self::Gaussian { mean, sd } => {
                if !mean.is_finite() || !(*sd > 0.0 && sd.is_finite()) {
                    return bad(format!("gaussian mean {mean}, sd {sd}"));
                }
            }
            Self::Poisson { rate } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return bad(format!("poisson rate {rate}"));
                }
            }
            Self::NegativeBinomial { mean, dispersion } => {
                if !(*mean > 0.0 && mean.is_finite())
                    || !(*dispersion > 0.0 && dispersion.is_finite())
                {
                    return bad(format!("negbin mean {mean}, dispersion {dispersion}"));
                }
            }
            Self::EmpiricalDiscrete { samples } => {
                if samples.is_empty() {
                    return bad("empty discrete sample".into());
                }
            }
            Self::EmpiricalContinuous { samples } => {
                if samples.is_empty() || samples.iter().any(|x| !x.is_finite()) {
                    return bad("empty or non-finite continuous sample".into());
                }
            }
        }
        Ok(())
    }

    pub fn is_discrete(&self) -> bool {
        matches!(
            self,
            Self::Poisson { .. } | Self::NegativeBinomial { .. } | Self::EmpiricalDiscrete { .. }
        )
    }

    pub fn is_empirical(&self) -> bool {
        matches!(
            self,
            Self::EmpiricalDiscrete { .. } | Self::EmpiricalContinuous { .. }
        )
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Gaussian { mean, .. } => *mean,
            Self::Poisson { rate } => *rate,
            Self::NegativeBinomial { mean, .. } => *mean,
            Self::EmpiricalDiscrete { samples } => {
                samples.iter().map(|&x| x as f64).sum::<f64>() / samples.len() as f64
            }
            Self::EmpiricalContinuous { samples } => {
                samples.iter().sum::<f64>() / samples.len() as f64
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::Gaussian { sd, .. } => sd * sd,
            Self::Poisson { rate } => *rate,
            Self::NegativeBinomial { mean, dispersion } => mean + mean * mean / dispersion,
            Self::EmpiricalDiscrete { samples } => {
                let xs: Vec<f64> = samples.iter().map(|&x| x as f64).collect();
                population_variance(&xs)
            }
            Self::EmpiricalContinuous { samples } => population_variance(samples),
        }
    }

    /// Natural-log density (pdf or pmf); `-inf` outside the support.
    ///
    /// Empirical kinds evaluate the same estimators the sample-based
    /// sampler uses: the raw empirical pmf, or a Silverman-bandwidth KDE.
    pub fn log_density(&self, x: f64) -> f64 {
        match self {
            Self::Gaussian { mean, sd } => {
                let z = (x - mean) / sd;
                -LN_SQRT_2PI - sd.ln() - 0.5 * z * z
            }
            Self::Poisson { rate } => match as_count(x) {
                Some(k) => k as f64 * rate.ln() - rate - ln_factorial(k),
                None => f64::NEG_INFINITY,
            },
            Self::NegativeBinomial { mean, dispersion } => match as_count(x) {
                Some(k) => negbin_ln_pmf(k, *mean, *dispersion),
                None => f64::NEG_INFINITY,
            },
            Self::EmpiricalDiscrete { samples } => match as_count(x) {
                Some(k) => {
                    let c = samples.iter().filter(|&&s| s == k).count();
                    if c == 0 {
                        f64::NEG_INFINITY
                    } else {
                        (c as f64 / samples.len() as f64).ln()
                    }
                }
                None => f64::NEG_INFINITY,
            },
            Self::EmpiricalContinuous { samples } => match silverman_bandwidth(samples) {
                Ok(h) => kde_ln_exact(samples, h, x),
                // A constant sample is a point mass.
                Err(_) => {
                    if x == samples[0] {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                }
            },
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        self.log_density(x).exp()
    }

    /// `n` independent variates.
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        match self {
            Self::Gaussian { mean, sd } => {
                let dist = Normal::new(*mean, *sd).expect("validated gaussian");
                (0..n).map(|_| dist.sample(rng)).collect()
            }
            Self::Poisson { .. } | Self::NegativeBinomial { .. } if n >= INVERSION_MIN_DRAWS => {
                match self.count_cdf() {
                    Some(cdf) => (0..n)
                        .map(|_| {
                            let u: f64 = rng.random();
                            match cdf.partition_point(|&c| c <= u) {
                                k if k < cdf.len() => k as f64,
                                // Beyond the table: rejection from the direct sampler.
                                len => loop {
                                    let x = self.draw_direct(rng);
                                    if x >= len as f64 {
                                        break x;
                                    }
                                },
                            }
                        })
                        .collect(),
                    None => (0..n).map(|_| self.draw_direct(rng)).collect(),
                }
            }
            Self::Poisson { .. } | Self::NegativeBinomial { .. } => {
                (0..n).map(|_| self.draw_direct(rng)).collect()
            }
            Self::EmpiricalDiscrete { samples } => (0..n)
                .map(|_| samples[rng.random_range(0..samples.len())] as f64)
                .collect(),
            Self::EmpiricalContinuous { samples } => (0..n)
                .map(|_| samples[rng.random_range(0..samples.len())])
                .collect(),
        }
    }

    /// One Poisson or negative binomial variate from the textbook sampler.
    fn draw_direct<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Poisson { rate } => Poisson::new(*rate).expect("validated poisson").sample(rng),
            Self::NegativeBinomial { mean, dispersion } => {
                // Gamma-Poisson mixture.
                let lambda: f64 = Gamma::new(*dispersion, mean / dispersion)
                    .expect("validated negbin")
                    .sample(rng);
                if lambda > 0.0 {
                    Poisson::new(lambda).map_or(0.0, |p| p.sample(rng))
                } else {
                    0.0
                }
            }
            _ => unreachable!("count family"),
        }
    }

    /// Cumulative pmf from 0 until the remaining terms are negligible, or
    /// `None` when that table would be too long.
    fn count_cdf(&self) -> Option<Vec<f64>> {
        let (mean, sd) = (self.mean(), self.variance().sqrt());
        if mean + 50.0 * sd > MAX_CDF_TABLE as f64 {
            return None;
        }
        let mut cdf = Vec::new();
        let mut acc = 0.0;
        for k in 0..MAX_CDF_TABLE {
            let p = self.density(k as f64);
            acc += p;
            cdf.push(acc);
            if k as f64 > mean && p < 1e-18 {
                return Some(cdf);
            }
        }
        None
    }

    /// Weight function for this marginal. Empirical kinds are turned into a
    /// density estimator once; parametric kinds evaluate in closed form.
    pub fn weight_fn(&self, pmf_floor: f64) -> Result<NodeDensity> {
        Ok(match self {
            Self::EmpiricalDiscrete { samples } => {
                NodeDensity::Estimated(empirical_pmf(samples, pmf_floor)?)
            }
            Self::EmpiricalContinuous { samples } => NodeDensity::Estimated(kde_fit(samples)?),
            other => NodeDensity::Parametric(other.clone()),
        })
    }
}

fn negbin_ln_pmf(k: u64, mean: f64, r: f64) -> f64 {
    let kf = k as f64;
    ln_gamma(kf + r) - ln_gamma(r) - ln_factorial(k)
        + r * (r / (r + mean)).ln()
        + kf * (mean / (r + mean)).ln()
}

/// Log-density evaluator used for importance weights.
#[derive(Debug, Clone)]
pub enum NodeDensity {
    Parametric(ForecastDistribution),
    Estimated(DensityEstimator),
}

impl NodeDensity {
    pub fn log_density(&self, x: f64) -> f64 {
        match self {
            Self::Parametric(d) => d.log_density(x),
            Self::Estimated(e) => e.log_evaluate(x),
        }
    }
}

fn population_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
}

fn sample_mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb: `0.9 min(sd, IQR / 1.34) N^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::DegenerateSample(
            "KDE needs at least two samples".into(),
        ));
    }
    let (_, var) = sample_mean_var(samples);
    let sd = var.sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) {
        return Err(Error::DegenerateSample("all samples are equal".into()));
    }
    Ok(0.9 * spread * (samples.len() as f64).powf(-0.2))
}

fn kde_ln_exact(samples: &[f64], h: f64, x: f64) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for &s in samples {
        let z = (x - s) / h;
        max = max.max(-0.5 * z * z);
    }
    let sum: f64 = samples
        .iter()
        .map(|&s| {
            let z = (x - s) / h;
            (-0.5 * z * z - max).exp()
        })
        .sum();
    max + sum.ln() - (samples.len() as f64).ln() - h.ln() - LN_SQRT_2PI
}

/// Gaussian-kernel density estimate.
///
/// Values inside the data range come from a linearly binned grid
/// (spacing `h/32`, kernel cut at 8 bandwidths) with linear interpolation;
/// points outside it, or where the gridded value is negligible, are
/// evaluated exactly in log space so the estimate stays positive.
#[derive(Debug, Clone)]
pub struct Kde {
    samples: Vec<f64>,
    bandwidth: f64,
    grid: Option<KdeGrid>,
}

#[derive(Debug, Clone)]
struct KdeGrid {
    lo: f64,
    step: f64,
    values: Vec<f64>,
    cutoff: f64,
}

const KDE_GRID_MIN_SAMPLES: usize = 512;
const KDE_GRID_MAX_POINTS: usize = 1 << 18;

impl Kde {
    pub fn new(samples: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) {
            return Err(Error::InvalidParameter(format!("bandwidth {bandwidth}")));
        }
        if samples.is_empty() {
            return Err(Error::DegenerateSample("empty sample".into()));
        }
        let grid = (samples.len() >= KDE_GRID_MIN_SAMPLES)
            .then(|| KdeGrid::build(&samples, bandwidth))
            .flatten();
        Ok(Self {
            samples,
            bandwidth,
            grid,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn evaluate_exact(&self, x: f64) -> f64 {
        kde_ln_exact(&self.samples, self.bandwidth, x).exp()
    }

    pub fn log_evaluate(&self, x: f64) -> f64 {
        if let Some(g) = &self.grid {
            if let Some(v) = g.interpolate(x) {
                if v > g.cutoff {
                    return v.ln();
                }
            }
        }
        kde_ln_exact(&self.samples, self.bandwidth, x)
    }
}

impl KdeGrid {
    fn build(samples: &[f64], h: f64) -> Option<Self> {
        let (min, max) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
                (a.min(x), b.max(x))
            });
        let lo = min - 8.0 * h;
        let hi = max + 8.0 * h;
        let points = (((hi - lo) / (h / 32.0)).ceil() as usize + 1).max(2);
        if points > KDE_GRID_MAX_POINTS {
            return None;
        }
        let step = (hi - lo) / (points - 1) as f64;
        let mut counts = vec![0.0; points];
        for &x in samples {
            let pos = (x - lo) / step;
            let i = (pos.floor() as usize).min(points - 2);
            let frac = pos - i as f64;
            counts[i] += 1.0 - frac;
            counts[i + 1] += frac;
        }
        let half = (8.0 * h / step).ceil() as usize;
        let norm = 1.0 / (samples.len() as f64 * h * (2.0 * PI).sqrt());
        let kernel: Vec<f64> = (0..=half)
            .map(|d| {
                let z = d as f64 * step / h;
                (-0.5 * z * z).exp() * norm
            })
            .collect();
        let occupied: Vec<usize> = (0..points).filter(|&i| counts[i] != 0.0).collect();
        let mut values = vec![0.0; points];
        for &j in &occupied {
            let c = counts[j];
            let start = j.saturating_sub(half);
            let end = (j + half).min(points - 1);
            for (k, v) in values.iter_mut().enumerate().take(end + 1).skip(start) {
                *v += c * kernel[k.abs_diff(j)];
            }
        }
        let peak = values.iter().copied().fold(0.0, f64::max);
        Some(Self {
            lo,
            step,
            values,
            cutoff: peak * 1e-6,
        })
    }

    fn interpolate(&self, x: f64) -> Option<f64> {
        let pos = (x - self.lo) / self.step;
        if !(pos >= 0.0) || pos > (self.values.len() - 1) as f64 {
            return None;
        }
        let i = (pos.floor() as usize).min(self.values.len() - 2);
        let frac = pos - i as f64;
        Some(self.values[i] * (1.0 - frac) + self.values[i + 1] * frac)
    }
}

/// Empirical pmf on `[0, 2 max]`: observed counts get `count / N`,
/// unobserved counts inside the window get `floor`, anything else 0.
#[derive(Debug, Clone)]
pub struct EmpiricalPmf {
    probs: Vec<f64>,
    total: usize,
    floor: f64,
}

impl EmpiricalPmf {
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Largest count with non-zero mass (`2 max`).
    pub fn support_max(&self) -> u64 {
        (self.probs.len() - 1) as u64
    }

    pub fn pmf(&self, x: f64) -> f64 {
        match as_count(x) {
            Some(k) => self.probs.get(k as usize).copied().unwrap_or(0.0),
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub enum DensityEstimator {
    Kde(Kde),
    EmpiricalPmf(EmpiricalPmf),
}

impl DensityEstimator {
    pub fn evaluate(&self, x: f64) -> f64 {
        match self {
            Self::Kde(k) => k.log_evaluate(x).exp(),
            Self::EmpiricalPmf(p) => p.pmf(x),
        }
    }

    pub fn log_evaluate(&self, x: f64) -> f64 {
        match self {
            Self::Kde(k) => k.log_evaluate(x),
            Self::EmpiricalPmf(p) => p.pmf(x).ln(),
        }
    }
}

/// Gaussian KDE with Silverman's bandwidth.
pub fn kde_fit(samples: &[f64]) -> Result<DensityEstimator> {
    let first = samples.first().copied();
    if samples.len() < 2 || samples.iter().all(|&x| Some(x) == first) {
        return Err(Error::DegenerateSample(
            "KDE needs two distinct values".into(),
        ));
    }
    let h = silverman_bandwidth(samples)?;
    Ok(DensityEstimator::Kde(Kde::new(samples.to_vec(), h)?))
}

pub fn empirical_pmf(samples: &[u64], floor: f64) -> Result<DensityEstimator> {
    if samples.is_empty() {
        return Err(Error::DegenerateSample("empty sample".into()));
    }
    if !(floor >= 0.0) {
        return Err(Error::InvalidParameter(format!("pmf floor {floor}")));
    }
    let max = *samples.iter().max().expect("non-empty");
    let window = 2 * max as usize + 1;
    let mut counts = vec![0usize; window];
    for &s in samples {
        counts[s as usize] += 1;
    }
    let n = samples.len() as f64;
    let probs = counts
        .into_iter()
        .map(|c| if c > 0 { c as f64 / n } else { floor })
        .collect();
    Ok(DensityEstimator::EmpiricalPmf(EmpiricalPmf {
        probs,
        total: samples.len(),
        floor,
    }))
}

/// Sample mean and sample standard deviation (N - 1 denominator).
pub fn fit_gaussian(samples: &[f64]) -> Result<ForecastDistribution> {
    if samples.len() < 2 {
        return Err(Error::DegenerateSample("need at least two samples".into()));
    }
    let (mean, var) = sample_mean_var(samples);
    if !(var > 0.0) {
        return Err(Error::DegenerateSample("zero sample variance".into()));
    }
    ForecastDistribution::gaussian(mean, var.sqrt())
}

/// Method of moments: `dispersion = mean^2 / (variance - mean)`.
pub fn fit_negbin(samples: &[u64]) -> Result<ForecastDistribution> {
    if samples.len() < 2 {
        return Err(Error::DegenerateSample("need at least two samples".into()));
    }
    let xs: Vec<f64> = samples.iter().map(|&x| x as f64).collect();
    let (mean, variance) = sample_mean_var(&xs);
    if !(mean > 0.0) || variance <= mean {
        return Err(Error::Underdispersed { mean, variance });
    }
    ForecastDistribution::negative_binomial(mean, mean * mean / (variance - mean))
}
