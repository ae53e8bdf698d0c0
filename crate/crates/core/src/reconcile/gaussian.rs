use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{BaseForecasts, Particles};
use crate::distributions::ForecastDistribution;
use crate::error::{Error, Result};
use crate::hierarchy::AggregationStructure;

/// Closed-form reconciled bottom distribution for Gaussian base forecasts.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianReconciled {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianReconciled {
    pub fn marginal_sd(&self, t: usize) -> f64 {
        self.covariance[(t, t)].max(0.0).sqrt()
    }

    /// Mean of every node, `[A m; m]`.
    pub fn lifted_mean<S: AggregationStructure + ?Sized>(&self, structure: &S) -> Vec<f64> {
        structure.lift(self.mean.as_slice())
    }

    /// `n` joint draws, using a symmetric square root of the covariance so
    /// that singular (rank-deficient) covariances are fine.
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Particles> {
        let m = self.mean.len();
        let eig = self.covariance.clone().symmetric_eigen();
        let root_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let root = &eig.eigenvectors * DMatrix::from_diagonal(&root_vals);
        let mut columns = vec![Vec::with_capacity(n); m];
        let mut z = DVector::<f64>::zeros(m);
        for _ in 0..n {
            for k in 0..m {
                z[k] = StandardNormal.sample(rng);
            }
            let x = &self.mean + &root * &z;
            for (col, v) in columns.iter_mut().zip(x.iter()) {
                col.push(*v);
            }
        }
        Particles::from_columns(columns)
    }
}

fn gaussian_params(ds: &[ForecastDistribution]) -> Result<(DVector<f64>, DVector<f64>)> {
    let mut mean = Vec::with_capacity(ds.len());
    let mut var = Vec::with_capacity(ds.len());
    for d in ds {
        match d {
            ForecastDistribution::Gaussian { mean: m, sd } => {
                mean.push(*m);
                var.push(sd * sd);
            }
            _ => {
                return Err(Error::InvalidInput(
                    "analytical reconciliation needs Gaussian forecasts".into(),
                ))
            }
        }
    }
    Ok((DVector::from_vec(mean), DVector::from_vec(var)))
}

/// Condition the Gaussian bottom forecast on the upper forecasts:
///
/// ```text
/// m~ = m_b + S_b A' (S_u + A S_b A')^-1 (m_u - A m_b)
/// S~ = S_b - S_b A' (S_u + A S_b A')^-1 A S_b
/// ```
pub fn reconcile_gaussian<S: AggregationStructure + ?Sized>(
    structure: &S,
    base: &BaseForecasts,
) -> Result<GaussianReconciled> {
    base.check(structure)?;
    let (m_u, v_u) = gaussian_params(&base.upper)?;
    let (m_b, v_b) = gaussian_params(&base.bottom)?;
    let sigma_b = DMatrix::from_diagonal(&v_b);
    if structure.n_upper() == 0 {
        return Ok(GaussianReconciled {
            mean: m_b,
            covariance: sigma_b,
        });
    }
    let a = structure.aggregating_matrix().to_dmatrix();
    let sb_at = &sigma_b * a.transpose();
    let inner = DMatrix::from_diagonal(&v_u) + &a * &sb_at;
    let chol = inner
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix("S_u + A S_b A' is not positive definite".into()))?;
    let diag_l = chol.l_dirty().diagonal();
    let (lo, hi) = diag_l.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    });
    if lo <= hi * 1e-8 {
        return Err(Error::SingularMatrix(
            "S_u + A S_b A' is numerically singular".into(),
        ));
    }
    // K = S_b A' inner^-1, computed as (inner^-1 A S_b)'.
    let k = chol.solve(&sb_at.transpose()).transpose();
    let mean = &m_b + &k * (m_u - &a * &m_b);
    let mut covariance = &sigma_b - &k * sb_at.transpose();
    covariance = (&covariance + covariance.transpose()) * 0.5;
    Ok(GaussianReconciled { mean, covariance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::build_hierarchy;
    use crate::rng::seeded;

    fn g(m: f64, s: f64) -> ForecastDistribution {
        ForecastDistribution::gaussian(m, s).unwrap()
    }

    #[test]
    fn two_leaf_closed_form() {
        // u = b1 + b2 with unit variances everywhere: precision-weighted
        // combination gives shift (m_u - sum m_b) / 3 per leaf.
        let h = build_hierarchy(2, &[vec![vec![0, 1]]]).unwrap();
        let base =
            BaseForecasts::new(&h, vec![g(9.0, 1.0)], vec![g(2.0, 1.0), g(4.0, 1.0)]).unwrap();
        let r = reconcile_gaussian(&h, &base).unwrap();
        assert!((r.mean[0] - 3.0).abs() < 1e-12);
        assert!((r.mean[1] - 5.0).abs() < 1e-12);
        assert!((r.covariance[(0, 0)] - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.covariance[(0, 1)] + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn tight_upper_pins_the_sum() {
        let h = build_hierarchy(2, &[vec![vec![0, 1]]]).unwrap();
        let base =
            BaseForecasts::new(&h, vec![g(10.0, 1e-4)], vec![g(1.0, 2.0), g(1.0, 2.0)]).unwrap();
        let r = reconcile_gaussian(&h, &base).unwrap();
        assert!((r.mean[0] + r.mean[1] - 10.0).abs() < 1e-6);
        let var_sum = r.covariance.sum();
        assert!(var_sum < 1e-7);
    }

    #[test]
    fn rejects_non_gaussian() {
        let h = build_hierarchy(2, &[vec![vec![0, 1]]]).unwrap();
        let p = ForecastDistribution::poisson(1.0).unwrap();
        let base = BaseForecasts::new(&h, vec![p.clone()], vec![p.clone(), p]).unwrap();
        assert!(matches!(
            reconcile_gaussian(&h, &base),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn draws_match_moments() {
        let h = build_hierarchy(2, &[vec![vec![0, 1]]]).unwrap();
        let base =
            BaseForecasts::new(&h, vec![g(9.0, 1.0)], vec![g(2.0, 1.0), g(4.0, 1.0)]).unwrap();
        let r = reconcile_gaussian(&h, &base).unwrap();
        let p = r.draw(100_000, &mut seeded(1)).unwrap();
        let mean = p.mean();
        let cov = p.covariance();
        assert!((mean[0] - 3.0).abs() < 0.02);
        assert!((cov[0][1] + 1.0 / 3.0).abs() < 0.02);
    }
}
