use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_count, BaseForecasts, Particles, Provenance, ReconciledSamples};
use crate::distributions::NodeDensity;
use crate::error::{Error, Result};
use crate::hierarchy::AggregationStructure;
use crate::rng::{run_seed, substream, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhOptions {
    /// Iterations discarded before recording; `None` means `n / 4`.
    pub burn_in: Option<usize>,
    /// Proposal variance of the Gaussian random walk (continuous targets).
    pub tau: f64,
    pub pmf_floor: f64,
}

impl Default for MhOptions {
    fn default() -> Self {
        Self {
            burn_in: None,
            tau: 1.0,
            pmf_floor: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhOutput {
    pub samples: ReconciledSamples,
    /// Accepted proposals over all proposals, burn-in included.
    pub acceptance_rate: f64,
}

/// Random-walk Metropolis-Hastings on the unnormalized reconciled density
/// `p_b(b) p_u(A b)`.
///
/// Continuous targets move all coordinates at once with an
/// `N(0, tau I)` step. Count targets use a systematic scan: each
/// iteration proposes `b_t + d`, `d` uniform on `{-1, 0, 1}`, for every
/// bottom series in turn. Returns `n` post-burn-in states.
pub fn mh_reconcile<S, R>(
    structure: &S,
    base: &BaseForecasts,
    n: usize,
    rng: &mut R,
) -> Result<MhOutput>
where
    S: AggregationStructure + ?Sized,
    R: Rng + ?Sized,
{
    mh_reconcile_with(structure, base, n, &MhOptions::default(), rng)
}

pub fn mh_reconcile_with<S, R>(
    structure: &S,
    base: &BaseForecasts,
    n: usize,
    opts: &MhOptions,
    rng: &mut R,
) -> Result<MhOutput>
where
    S: AggregationStructure + ?Sized,
    R: Rng + ?Sized,
{
    check_count(n)?;
    base.check(structure)?;
    if !(opts.tau > 0.0 && opts.tau.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "proposal variance must be positive, got {}",
            opts.tau
        )));
    }
    let burn_in = opts.burn_in.unwrap_or((n / 4).max(1));
    if burn_in == 0 {
        return Err(Error::InvalidParameter("burn-in must be at least 1".into()));
    }
    let seed = run_seed(rng);
    let target = Target {
        constraints: structure.constraints(),
        upper: base.upper_weight_fns(opts.pmf_floor)?,
        bottom: base.bottom_weight_fns(opts.pmf_floor)?,
    };
    let mut chain_rng = substream(seed, Stream::Final);
    let (columns, acceptance_rate) = if base.bottom.iter().all(|d| d.is_discrete()) {
        let init: Vec<i64> = base
            .bottom
            .iter()
            .map(|d| d.mean().round().max(0.0) as i64)
            .collect();
        target.run_discrete(init, n, burn_in, &mut chain_rng)?
    } else if base.bottom.iter().all(|d| !d.is_discrete()) {
        let init: Vec<f64> = base.bottom.iter().map(|d| d.mean()).collect();
        target.run_continuous(init, n, burn_in, opts.tau, &mut chain_rng)?
    } else {
        return Err(Error::InvalidInput(
            "bottom forecasts mix counts and continuous values".into(),
        ));
    };
    Ok(MhOutput {
        samples: ReconciledSamples {
            particles: Particles::from_columns(columns)?,
            provenance: Provenance {
                algorithm: "mh".into(),
                seed,
                structure_digest: structure.digest(),
            },
        },
        acceptance_rate,
    })
}

struct Target<'a> {
    constraints: &'a [Vec<usize>],
    upper: Vec<NodeDensity>,
    bottom: Vec<NodeDensity>,
}

impl Target<'_> {
    fn log_density(&self, b: &[f64]) -> f64 {
        let lb: f64 = self
            .bottom
            .iter()
            .zip(b)
            .map(|(d, &x)| d.log_density(x))
            .sum();
        if lb == f64::NEG_INFINITY {
            return lb;
        }
        lb + self
            .constraints
            .iter()
            .zip(&self.upper)
            .map(|(c, d)| d.log_density(c.iter().map(|&t| b[t]).sum()))
            .sum::<f64>()
    }

    fn run_continuous<R: Rng + ?Sized>(
        &self,
        mut b: Vec<f64>,
        n: usize,
        burn_in: usize,
        tau: f64,
        rng: &mut R,
    ) -> Result<(Vec<Vec<f64>>, f64)> {
        let m = b.len();
        let mut lp = self.log_density(&b);
        if !lp.is_finite() {
            return Err(Error::ZeroDensityStart);
        }
        let step = tau.sqrt();
        let mut out = vec![Vec::with_capacity(n); m];
        let mut accepted = 0usize;
        let mut proposal = vec![0.0; m];
        for it in 0..burn_in + n {
            for (p, x) in proposal.iter_mut().zip(&b) {
                let z: f64 = StandardNormal.sample(rng);
                *p = x + step * z;
            }
            let lq = self.log_density(&proposal);
            if rng.random::<f64>().ln() < lq - lp {
                std::mem::swap(&mut b, &mut proposal);
                lp = lq;
                accepted += 1;
            }
            if it >= burn_in {
                for (col, x) in out.iter_mut().zip(&b) {
                    col.push(*x);
                }
            }
        }
        Ok((out, accepted as f64 / (burn_in + n) as f64))
    }

    fn run_discrete<R: Rng + ?Sized>(
        &self,
        mut b: Vec<i64>,
        n: usize,
        burn_in: usize,
        rng: &mut R,
    ) -> Result<(Vec<Vec<f64>>, f64)> {
        let m = b.len();
        let mut member: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (c, leaves) in self.constraints.iter().enumerate() {
            for &t in leaves {
                member[t].push(c);
            }
        }
        let mut sums: Vec<i64> = self
            .constraints
            .iter()
            .map(|c| c.iter().map(|&t| b[t]).sum())
            .collect();
        let mut lp_b: Vec<f64> = b
            .iter()
            .zip(&self.bottom)
            .map(|(&x, d)| d.log_density(x as f64))
            .collect();
        let mut lp_u: Vec<f64> = sums
            .iter()
            .zip(&self.upper)
            .map(|(&s, d)| d.log_density(s as f64))
            .collect();
        if !(lp_b.iter().sum::<f64>() + lp_u.iter().sum::<f64>()).is_finite() {
            return Err(Error::ZeroDensityStart);
        }

        let mut out = vec![Vec::with_capacity(n); m];
        let mut accepted = 0usize;
        let mut proposed = 0usize;
        let mut new_u: Vec<f64> = Vec::new();
        for it in 0..burn_in + n {
            for t in 0..m {
                proposed += 1;
                let delta = rng.random_range(-1i64..=1);
                if delta == 0 {
                    accepted += 1;
                    continue;
                }
                let x = b[t] + delta;
                if x < 0 {
                    continue;
                }
                let nb = self.bottom[t].log_density(x as f64);
                let mut diff = nb - lp_b[t];
                new_u.clear();
                for &c in &member[t] {
                    let v = self.upper[c].log_density((sums[c] + delta) as f64);
                    diff += v - lp_u[c];
                    new_u.push(v);
                }
                if diff.is_nan() || rng.random::<f64>().ln() >= diff {
                    continue;
                }
                accepted += 1;
                b[t] = x;
                lp_b[t] = nb;
                for (&c, &v) in member[t].iter().zip(&new_u) {
                    sums[c] += delta;
                    lp_u[c] = v;
                }
            }
            if it >= burn_in {
                for (col, &x) in out.iter_mut().zip(&b) {
                    col.push(x as f64);
                }
            }
        }
        Ok((out, accepted as f64 / proposed as f64))
    }
}

/// Autocorrelation-based effective sample size of one chain, using
/// Geyer's initial positive sequence estimator.
pub fn chain_ess(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let var = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if var == 0.0 {
        return n as f64;
    }
    let rho = |k: usize| {
        c[..n - k]
            .iter()
            .zip(&c[k..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n as f64 * var)
    };
    let mut tau = -1.0;
    let mut k = 0;
    while k + 1 < n {
        let pair = rho(k) + rho(k + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 2;
    }
    n as f64 / tau.max(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ForecastDistribution;
    use crate::hierarchy::build_hierarchy;
    use crate::rng::seeded;

    #[test]
    fn continuous_chain_matches_gaussian_conditioning() {
        let h = build_hierarchy(2, &[vec![vec![0, 1]]]).unwrap();
        let g = |m, s| ForecastDistribution::gaussian(m, s).unwrap();
        let base =
            BaseForecasts::new(&h, vec![g(9.0, 1.0)], vec![g(2.0, 1.0), g(4.0, 1.0)]).unwrap();
        let out = mh_reconcile(&h, &base, 200_000, &mut seeded(11)).unwrap();
        let mean = out.samples.particles.mean();
        assert!((mean[0] - 3.0).abs() < 0.05, "{mean:?}");
        assert!((mean[1] - 5.0).abs() < 0.05, "{mean:?}");
        assert!(out.acceptance_rate > 0.1 && out.acceptance_rate < 0.9);
    }

    #[test]
    fn discrete_chain_stays_on_support() {
        let h = build_hierarchy(2, &[vec![vec![0, 1]]]).unwrap();
        let p = |r| ForecastDistribution::poisson(r).unwrap();
        let base = BaseForecasts::new(&h, vec![p(5.0)], vec![p(1.0), p(2.0)]).unwrap();
        let out = mh_reconcile(&h, &base, 5_000, &mut seeded(2)).unwrap();
        for c in out.samples.particles.columns() {
            assert!(c.iter().all(|&x| x >= 0.0 && x.fract() == 0.0));
        }
    }

    #[test]
    fn impossible_start_is_reported() {
        let h = build_hierarchy(2, &[vec![vec![0, 1]]]).unwrap();
        let base = BaseForecasts::new(
            &h,
            vec![ForecastDistribution::empirical_discrete(vec![100]).unwrap()],
            vec![ForecastDistribution::poisson(1.0).unwrap(); 2],
        )
        .unwrap();
        assert!(matches!(
            mh_reconcile(&h, &base, 10, &mut seeded(2)),
            Err(Error::ZeroDensityStart)
        ));
    }

    #[test]
    fn ess_of_independent_and_sticky_chains() {
        let mut rng = seeded(3);
        let iid: Vec<f64> = (0..20_000)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let e = chain_ess(&iid);
        assert!(e > 15_000.0 && e < 25_000.0, "{e}");
        // AR(1) with phi = 0.9 has ESS about n (1 - phi) / (1 + phi).
        let mut x = 0.0;
        let ar: Vec<f64> = (0..50_000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x = 0.9 * x + z;
                x
            })
            .collect();
        let e = chain_ess(&ar);
        let expect = 50_000.0 * 0.1 / 1.9;
        assert!((e / expect - 1.0).abs() < 0.3, "{e} vs {expect}");
    }
}
