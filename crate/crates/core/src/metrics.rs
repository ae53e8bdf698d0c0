//! Accuracy and calibration metrics.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::distributions::quantile_sorted;
use crate::error::{Error, Result};
use crate::reconcile::{GaussianReconciled, Particles};

/// Mean absolute percentage error of `estimate` against `reference`, in percent.
pub fn mape(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::Dimension {
            expected: reference.len(),
            actual: estimate.len(),
        });
    }
    if let Some(index) = reference.iter().position(|&r| r == 0.0) {
        return Err(Error::ZeroReference { index });
    }
    let total: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(e, r)| ((e - r) / r).abs())
        .sum();
    Ok(total / reference.len() as f64 * 100.0)
}

/// 1-D 2-Wasserstein distance between an empirical sample and `N(mean, sd^2)`,
/// matching sorted samples to the Gaussian quantiles at `(i - 1/2) / N`.
pub fn wasserstein2_gaussian_1d(samples: &[f64], mean: f64, sd: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let q = |p: f64| {
        if sd > 0.0 {
            Normal::new(mean, sd).expect("valid normal").inverse_cdf(p)
        } else {
            mean
        }
    };
    let sq: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let d = x - q((i as f64 + 0.5) / n);
            d * d
        })
        .sum();
    (sq / n).sqrt()
}

/// Average over bottom series of the marginal 1-D W2 distance to the
/// reference Gaussian.
pub fn wasserstein2(particles: &Particles, reference: &GaussianReconciled) -> Result<f64> {
    let m = particles.n_series();
    if reference.mean.len() != m {
        return Err(Error::Dimension {
            expected: reference.mean.len(),
            actual: m,
        });
    }
    if particles.n_particles() < 2 {
        return Err(Error::InvalidInput(
            "W2 needs at least two particles".into(),
        ));
    }
    let total: f64 = (0..m)
        .map(|t| {
            wasserstein2_gaussian_1d(
                particles.column(t),
                reference.mean[t],
                reference.marginal_sd(t),
            )
        })
        .sum();
    Ok(total / m as f64)
}

/// In-sample mean absolute error of the one-step naive forecast.
pub fn naive_scale(train: &[f64]) -> Result<f64> {
    if train.len() < 2 {
        return Err(Error::InvalidInput(
            "training series needs at least two values".into(),
        ));
    }
    let q = train.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (train.len() - 1) as f64;
    if q == 0.0 {
        return Err(Error::FlatTrainSeries);
    }
    Ok(q)
}

/// Mean absolute scaled error over a forecast horizon.
pub fn mase(point_forecasts: &[f64], actuals: &[f64], train: &[f64]) -> Result<f64> {
    if point_forecasts.len() != actuals.len() || actuals.is_empty() {
        return Err(Error::Dimension {
            expected: actuals.len(),
            actual: point_forecasts.len(),
        });
    }
    let q = naive_scale(train)?;
    let mae = point_forecasts
        .iter()
        .zip(actuals)
        .map(|(f, y)| (f - y).abs())
        .sum::<f64>()
        / actuals.len() as f64;
    Ok(mae / q)
}

/// Interval score of `[lower, upper]` as a `1 - alpha` prediction interval.
pub fn mis(lower: f64, upper: f64, actual: f64, alpha: f64) -> Result<f64> {
    if !(lower <= upper) {
        return Err(Error::InvalidInterval { lower, upper });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let mut s = upper - lower;
    if actual < lower {
        s += 2.0 / alpha * (lower - actual);
    }
    if actual > upper {
        s += 2.0 / alpha * (actual - upper);
    }
    Ok(s)
}

/// Central `1 - alpha` interval from type-7 sample quantiles.
pub fn central_interval(samples: &[f64], alpha: f64) -> (f64, f64) {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    (
        quantile_sorted(&sorted, alpha / 2.0),
        quantile_sorted(&sorted, 1.0 - alpha / 2.0),
    )
}

/// Sample median; the lower of the two middle values for even counts.
pub fn median(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[(sorted.len() - 1) / 2]
}

/// Energy score with exponent 2:
/// `mean |y - s_i|^2 - 1/2 mean |s_i - s_{i + N/2}|^2`.
///
/// `samples` holds one column per node of the full hierarchy. With an odd
/// number of samples the last one is dropped.
pub fn energy_score(samples: &Particles, actual: &[f64]) -> Result<f64> {
    if samples.n_series() != actual.len() {
        return Err(Error::Dimension {
            expected: actual.len(),
            actual: samples.n_series(),
        });
    }
    let mut n = samples.n_particles();
    if n < 2 {
        return Err(Error::InvalidInput(
            "energy score needs at least two samples".into(),
        ));
    }
    if n % 2 == 1 {
        eprintln!("warning: energy score dropped the last of {n} samples");
        n -= 1;
    }
    let half = n / 2;
    let mut to_actual = 0.0;
    let mut between = 0.0;
    for (col, &y) in samples.columns().iter().zip(actual) {
        to_actual += col[..n].iter().map(|s| (y - s) * (y - s)).sum::<f64>();
        between += col[..half]
            .iter()
            .zip(&col[half..n])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(to_actual / n as f64 - 0.5 * between / half as f64)
}

/// Symmetric relative improvement `(base - new) / ((base + new) / 2)`.
pub fn skill_score(metric_new: f64, metric_base: f64) -> Result<f64> {
    let denom = (metric_base + metric_new) / 2.0;
    if denom == 0.0 {
        return Err(Error::DegenerateDenominator);
    }
    Ok((metric_base - metric_new) / denom)
}

/// One metric value for one series at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub series: String,
    pub level: String,
    pub horizon: usize,
    pub metric: String,
    pub value: f64,
}

/// Metric values per series, level and horizon.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreReport {
    pub rows: Vec<ScoreRow>,
}

/// Mean of one metric over the horizons of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSummary {
    pub level: String,
    pub metric: String,
    pub horizons: usize,
    pub value: f64,
}

impl ScoreReport {
    pub fn push(&mut self, series: &str, level: &str, horizon: usize, metric: &str, value: f64) {
        self.rows.push(ScoreRow {
            series: series.into(),
            level: level.into(),
            horizon,
            metric: metric.into(),
            value,
        });
    }

    /// Per level and metric: average over series within each horizon,
    /// then the arithmetic mean of those per-horizon values.
    pub fn summarize(&self) -> Vec<LevelSummary> {
        let mut by_h: BTreeMap<(&str, &str, usize), (f64, usize)> = BTreeMap::new();
        for r in &self.rows {
            let e = by_h.entry((&r.level, &r.metric, r.horizon)).or_default();
            e.0 += r.value;
            e.1 += 1;
        }
        let mut by_level: BTreeMap<(&str, &str), (f64, usize)> = BTreeMap::new();
        for ((level, metric, _), (sum, count)) in by_h {
            let e = by_level.entry((level, metric)).or_default();
            e.0 += sum / count as f64;
            e.1 += 1;
        }
        by_level
            .into_iter()
            .map(|((level, metric), (sum, horizons))| LevelSummary {
                level: level.into(),
                metric: metric.into(),
                horizons,
                value: sum / horizons as f64,
            })
            .collect()
    }

    /// Skill of `self` over `baseline`, row by row. Rows whose skill is
    /// undefined (both metrics zero) are skipped.
    pub fn skill_against(&self, baseline: &ScoreReport) -> Result<ScoreReport> {
        let base: BTreeMap<(&str, usize, &str), f64> = baseline
            .rows
            .iter()
            .map(|r| ((r.series.as_str(), r.horizon, r.metric.as_str()), r.value))
            .collect();
        let mut out = ScoreReport::default();
        for r in &self.rows {
            let b = base
                .get(&(r.series.as_str(), r.horizon, r.metric.as_str()))
                .ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "baseline has no {} for {} at horizon {}",
                        r.metric, r.series, r.horizon
                    ))
                })?;
            match skill_score(r.value, *b) {
                Ok(s) => out.push(
                    &r.series,
                    &r.level,
                    r.horizon,
                    &format!("skill_{}", r.metric),
                    s,
                ),
                Err(Error::DegenerateDenominator) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        if self.rows.is_empty() {
            wr.write_record(["series", "level", "horizon", "metric", "value"])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let rows = rd
            .deserialize()
            .collect::<std::result::Result<Vec<ScoreRow>, _>>()?;
        Ok(Self { rows })
    }
}
