use rayon::prelude::*;

use super::BaseForecasts;
use crate::distributions::NodeDensity;
use crate::error::{Error, Result};
use crate::hierarchy::AggregationStructure;

/// Largest grid `(cap + 1)^m` that exact enumeration accepts.
pub const BRUTEFORCE_LIMIT: u128 = 10_000_000;

/// Exact reconciled pmf of count forecasts on `{0..=cap}^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePosterior {
    cap: u64,
    n_bottom: usize,
    probs: Vec<f64>,
}

impl DiscretePosterior {
    pub fn cap(&self) -> u64 {
        self.cap
    }

    pub fn n_bottom(&self) -> usize {
        self.n_bottom
    }

    fn index(&self, b: &[u64]) -> Option<usize> {
        if b.len() != self.n_bottom || b.iter().any(|&x| x > self.cap) {
            return None;
        }
        let base = self.cap as usize + 1;
        Some(b.iter().rev().fold(0, |acc, &x| acc * base + x as usize))
    }

    /// Probability of the bottom vector `b` (zero off the grid).
    pub fn prob(&self, b: &[u64]) -> f64 {
        self.index(b).map_or(0.0, |i| self.probs[i])
    }

    /// Grid point of a flat index; series 0 varies fastest.
    pub fn point(&self, mut index: usize) -> Vec<u64> {
        let base = self.cap as usize + 1;
        (0..self.n_bottom)
            .map(|_| {
                let x = index % base;
                index /= base;
                x as u64
            })
            .collect()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Marginal pmf of series `t` on `0..=cap`.
    pub fn marginal(&self, t: usize) -> Vec<f64> {
        let base = self.cap as usize + 1;
        let stride = base.pow(t as u32);
        let mut out = vec![0.0; base];
        for (i, p) in self.probs.iter().enumerate() {
            out[(i / stride) % base] += p;
        }
        out
    }

    pub fn mean(&self, t: usize) -> f64 {
        self.marginal(t)
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    /// pmf of the aggregate over `leaves`, on `0..=cap * |leaves|`.
    pub fn aggregate_pmf(&self, leaves: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.cap as usize * leaves.len() + 1];
        for (i, p) in self.probs.iter().enumerate() {
            let b = self.point(i);
            out[leaves.iter().map(|&t| b[t] as usize).sum::<usize>()] += p;
        }
        out
    }
}

/// Enumerate every bottom vector in `{0..=cap}^m`, evaluate
/// `p_b(b) p_u(A b)` and normalize.
///
/// Mass beyond `cap` is dropped, so `cap` must cover the bulk of every
/// bottom marginal for the result to be meaningful.
pub fn bruteforce_discrete<S: AggregationStructure + ?Sized>(
    structure: &S,
    base: &BaseForecasts,
    cap: u64,
) -> Result<DiscretePosterior> {
    base.check(structure)?;
    if !base.all_discrete() {
        return Err(Error::InvalidInput(
            "exact enumeration needs count forecasts".into(),
        ));
    }
    let m = structure.n_bottom();
    let points = (cap as u128 + 1)
        .checked_pow(m as u32)
        .filter(|&p| p <= BRUTEFORCE_LIMIT)
        .ok_or(Error::SupportTooLarge {
            points: (cap as u128 + 1).saturating_pow(m as u32),
            limit: BRUTEFORCE_LIMIT,
        })?;
    let bottom = base.bottom_weight_fns(0.0)?;
    let upper = base.upper_weight_fns(0.0)?;
    let table = |d: &NodeDensity, len: u64| -> Vec<f64> {
        (0..=len).map(|k| d.log_density(k as f64)).collect()
    };
    let bottom_tab: Vec<Vec<f64>> = bottom.iter().map(|d| table(d, cap)).collect();
    let upper_tab: Vec<Vec<f64>> = structure
        .constraints()
        .iter()
        .zip(&upper)
        .map(|(c, d)| table(d, cap * c.len() as u64))
        .collect();

    let base_n = cap as usize + 1;
    let constraints = structure.constraints();
    let log_joint: Vec<f64> = (0..points as usize)
        .into_par_iter()
        .map(|mut idx| {
            let mut b = Vec::with_capacity(m);
            for _ in 0..m {
                b.push(idx % base_n);
                idx /= base_n;
            }
            let mut lp: f64 = b.iter().enumerate().map(|(t, &x)| bottom_tab[t][x]).sum();
            for (c, tab) in constraints.iter().zip(&upper_tab) {
                if lp == f64::NEG_INFINITY {
                    break;
                }
                lp += tab[c.iter().map(|&t| b[t]).sum::<usize>()];
            }
            lp
        })
        .collect();
    let max = log_joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::InvalidInput(
            "reconciled density has no mass on the grid".into(),
        ));
    }
    let mut probs: Vec<f64> = log_joint.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(DiscretePosterior {
        cap,
        n_bottom: m,
        probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ForecastDistribution;
    use crate::hierarchy::build_hierarchy;

    #[test]
    fn two_poisson_leaves_give_binomial_split() {
        // Conditioning two Poissons on their sum is binomial, and a Poisson
        // upper forecast on the sum keeps the leaf ratio intact.
        let h = build_hierarchy(2, &[vec![vec![0, 1]]]).unwrap();
        let p = |r| ForecastDistribution::poisson(r).unwrap();
        let base = BaseForecasts::new(&h, vec![p(4.0)], vec![p(1.0), p(3.0)]).unwrap();
        let post = bruteforce_discrete(&h, &base, 40).unwrap();
        let m0 = post.mean(0);
        let m1 = post.mean(1);
        assert!((m1 / m0 - 3.0).abs() < 1e-6, "{m0} {m1}");
        assert!((post.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(post.point(post.index(&[3, 7]).unwrap()), vec![3, 7]);
    }

    #[test]
    fn size_limit() {
        let h = build_hierarchy(8, &[vec![(0..8).collect()]]).unwrap();
        let p = ForecastDistribution::poisson(1.0).unwrap();
        let base = BaseForecasts::new(&h, vec![p.clone()], vec![p; 8]).unwrap();
        assert!(matches!(
            bruteforce_discrete(&h, &base, 20),
            Err(Error::SupportTooLarge { .. })
        ));
    }
}
