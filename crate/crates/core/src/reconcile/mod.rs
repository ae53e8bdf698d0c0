//! Reconciliation through conditioning.
//!
//! Given independent base forecasts for every node, the reconciled bottom
//! distribution is `p(b) ∝ p_b(b) · p_u(A b)`: the base joint restricted to
//! the coherent subspace. Only the Gaussian case has a closed form; the
//! other routines sample from it.

mod bruteforce;
mod buis;
mod gaussian;
mod importance;
mod mh;
mod point;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bruteforce::{bruteforce_discrete, DiscretePosterior, BRUTEFORCE_LIMIT};
pub use buis::{
    buis, buis_grouped, buis_sample_based, buis_traced, buis_with, reconcile_grouped, TraceStep,
};
pub use gaussian::{reconcile_gaussian, GaussianReconciled};
pub use importance::{
    effective_sample_size, normalize_log_weights, plain_is, plain_is_with, resample,
    resample_indices,
};
pub use mh::{chain_ess, mh_reconcile, mh_reconcile_with, MhOptions, MhOutput};
pub use point::{point_reconcile, PointMethod};

use crate::distributions::{ForecastDistribution, NodeDensity};
use crate::error::{Error, Result};
use crate::hierarchy::AggregationStructure;
use crate::rng::{substream, Stream};

/// Base forecasts for every node, assumed mutually independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseForecasts {
    /// One per upper row, in the structure's row order.
    pub upper: Vec<ForecastDistribution>,
    pub bottom: Vec<ForecastDistribution>,
}

impl BaseForecasts {
    pub fn new<S: AggregationStructure + ?Sized>(
        structure: &S,
        upper: Vec<ForecastDistribution>,
        bottom: Vec<ForecastDistribution>,
    ) -> Result<Self> {
        let base = Self { upper, bottom };
        base.check(structure)?;
        Ok(base)
    }

    /// Split a `[u; b]`-ordered list.
    pub fn from_node_order<S: AggregationStructure + ?Sized>(
        structure: &S,
        mut all: Vec<ForecastDistribution>,
    ) -> Result<Self> {
        if all.len() != structure.n_total() {
            return Err(Error::Dimension {
                expected: structure.n_total(),
                actual: all.len(),
            });
        }
        let bottom = all.split_off(structure.n_upper());
        Self::new(structure, all, bottom)
    }

    pub fn check<S: AggregationStructure + ?Sized>(&self, structure: &S) -> Result<()> {
        if self.upper.len() != structure.n_upper() {
            return Err(Error::Dimension {
                expected: structure.n_upper(),
                actual: self.upper.len(),
            });
        }
        if self.bottom.len() != structure.n_bottom() {
            return Err(Error::Dimension {
                expected: structure.n_bottom(),
                actual: self.bottom.len(),
            });
        }
        for d in self.upper.iter().chain(&self.bottom) {
            d.validate()?;
        }
        Ok(())
    }

    pub fn all_gaussian(&self) -> bool {
        self.upper
            .iter()
            .chain(&self.bottom)
            .all(|d| matches!(d, ForecastDistribution::Gaussian { .. }))
    }

    pub fn all_discrete(&self) -> bool {
        self.upper
            .iter()
            .chain(&self.bottom)
            .all(ForecastDistribution::is_discrete)
    }

    pub fn all_continuous(&self) -> bool {
        self.upper
            .iter()
            .chain(&self.bottom)
            .all(|d| !d.is_discrete())
    }

    pub(crate) fn upper_weight_fns(&self, pmf_floor: f64) -> Result<Vec<NodeDensity>> {
        self.upper
            .par_iter()
            .map(|d| d.weight_fn(pmf_floor))
            .collect()
    }

    pub(crate) fn bottom_weight_fns(&self, pmf_floor: f64) -> Result<Vec<NodeDensity>> {
        self.bottom
            .par_iter()
            .map(|d| d.weight_fn(pmf_floor))
            .collect()
    }
}

/// `N x m` bottom particles, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct Particles {
    n: usize,
    columns: Vec<Vec<f64>>,
}

impl Particles {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(Error::InvalidInput("particle set is empty".into()));
        }
        if let Some(bad) = columns.iter().find(|c| c.len() != n) {
            return Err(Error::Dimension {
                expected: n,
                actual: bad.len(),
            });
        }
        Ok(Self { n, columns })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidInput("ragged particle rows".into()));
        }
        Self::from_columns(
            (0..m)
                .map(|t| rows.iter().map(|r| r[t]).collect())
                .collect(),
        )
    }

    pub fn n_particles(&self) -> usize {
        self.n
    }

    pub fn n_series(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, t: usize) -> &[f64] {
        &self.columns[t]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn into_columns(self) -> Vec<Vec<f64>> {
        self.columns
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.n).map(|i| self.row(i))
    }

    pub fn mean(&self) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| c.iter().sum::<f64>() / self.n as f64)
            .collect()
    }

    pub fn weighted_mean(&self, weights: &[f64]) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| c.iter().zip(weights).map(|(x, w)| x * w).sum())
            .collect()
    }

    /// Sample covariance (N - 1 denominator), row-major `m x m`.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let mean = self.mean();
        let m = self.n_series();
        let mut cov = vec![vec![0.0; m]; m];
        for a in 0..m {
            for b in a..m {
                let s: f64 = self.columns[a]
                    .iter()
                    .zip(&self.columns[b])
                    .map(|(x, y)| (x - mean[a]) * (y - mean[b]))
                    .sum();
                cov[a][b] = s / (self.n as f64 - 1.0);
                cov[b][a] = cov[a][b];
            }
        }
        cov
    }

    pub fn gather(&self, indices: &[usize]) -> Self {
        Self {
            n: indices.len(),
            columns: self
                .columns
                .iter()
                .map(|c| indices.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }

    /// Particles for every node: `[A b; b]` column-wise.
    pub fn lift<S: AggregationStructure + ?Sized>(&self, structure: &S) -> Self {
        let mut columns: Vec<Vec<f64>> = structure
            .constraints()
            .iter()
            .map(|leaves| {
                (0..self.n)
                    .map(|i| leaves.iter().map(|&t| self.columns[t][i]).sum())
                    .collect()
            })
            .collect();
        columns.extend(self.columns.iter().cloned());
        Self { n: self.n, columns }
    }
}

/// Importance-weighted bottom particles.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub particles: Particles,
    /// Normalized, non-negative, summing to one.
    pub weights: Vec<f64>,
}

impl WeightedSample {
    pub fn ess(&self) -> f64 {
        effective_sample_size(&self.weights)
    }

    pub fn weighted_mean(&self) -> Vec<f64> {
        self.particles.weighted_mean(&self.weights)
    }

    pub fn resample<R: Rng + ?Sized>(
        &self,
        n_out: usize,
        scheme: ResamplingScheme,
        rng: &mut R,
    ) -> Particles {
        let idx = resample_indices(&self.weights, n_out, scheme, rng);
        self.particles.gather(&idx)
    }
}

/// Where a set of reconciled particles came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub algorithm: String,
    pub seed: u64,
    pub structure_digest: String,
}

/// Unweighted reconciled bottom particles.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconciledSamples {
    pub particles: Particles,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResamplingScheme {
    /// I.i.d. draws with replacement.
    #[default]
    Multinomial,
    Systematic,
}

impl std::str::FromStr for ResamplingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multinomial" => Ok(Self::Multinomial),
            "systematic" => Ok(Self::Systematic),
            other => Err(Error::InvalidInput(format!(
                "unknown resampling scheme {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerOptions {
    pub resampling: ResamplingScheme,
    /// Mass assigned to unobserved counts by empirical pmfs.
    pub pmf_floor: f64,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self {
            resampling: ResamplingScheme::Multinomial,
            pmf_floor: 0.0,
        }
    }
}

/// Draw `n` particles from the independent bottom marginals, one
/// substream per series.
pub(crate) fn draw_bottom(bottom: &[ForecastDistribution], n: usize, run_seed: u64) -> Particles {
    let columns = bottom
        .par_iter()
        .enumerate()
        .map(|(t, d)| d.draw(n, &mut substream(run_seed, Stream::Leaf(t))))
        .collect();
    Particles { n, columns }
}

pub(crate) fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "particle count must be at least 1".into(),
        ));
    }
    Ok(())
}
