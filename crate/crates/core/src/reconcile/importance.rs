use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rayon::prelude::*;

use super::{
    check_count, draw_bottom, BaseForecasts, ResamplingScheme, SamplerOptions, WeightedSample,
};
use crate::error::{all_zero, Result};
use crate::hierarchy::AggregationStructure;
use crate::rng::run_seed;

/// Exp-normalize log-weights after subtracting their maximum.
///
/// `node` names the constraint reported if every weight is zero.
pub fn normalize_log_weights(log_weights: &[f64], node: usize) -> Result<Vec<f64>> {
    let max = log_weights
        .iter()
        .copied()
        .filter(|x| !x.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(all_zero(node));
    }
    let mut w: Vec<f64> = log_weights
        .iter()
        .map(|&l| if l.is_nan() { 0.0 } else { (l - max).exp() })
        .collect();
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    Ok(w)
}

/// Kish effective sample size `1 / sum w^2` of normalized weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Indices of `n_out` draws from the discrete distribution `weights`.
pub fn resample_indices<R: Rng + ?Sized>(
    weights: &[f64],
    n_out: usize,
    scheme: ResamplingScheme,
    rng: &mut R,
) -> Vec<usize> {
    match scheme {
        ResamplingScheme::Multinomial => {
            let dist = WeightedAliasIndex::new(weights.to_vec()).expect("normalized weights");
            (0..n_out).map(|_| dist.sample(rng)).collect()
        }
        ResamplingScheme::Systematic => {
            let step = 1.0 / n_out as f64;
            let mut u = rng.random::<f64>() * step;
            let mut out = Vec::with_capacity(n_out);
            let mut cum = 0.0;
            let mut i = 0;
            let last = weights.len() - 1;
            for _ in 0..n_out {
                while i < last && cum + weights[i] <= u {
                    cum += weights[i];
                    i += 1;
                }
                out.push(i);
                u += step;
            }
            // Sorted output would pair neighbouring blocks by position.
            out.shuffle(rng);
            out
        }
    }
}

/// Multinomial resampling of whole particles.
pub fn resample<R: Rng + ?Sized>(
    particles: &super::Particles,
    weights: &[f64],
    n_out: usize,
    rng: &mut R,
) -> super::Particles {
    particles.gather(&resample_indices(
        weights,
        n_out,
        ResamplingScheme::Multinomial,
        rng,
    ))
}

/// Plain importance sampling with the bottom base forecasts as proposal:
/// particle `i` gets weight `prod_c p_uc((A b_i)_c)`.
pub fn plain_is<S, R>(
    structure: &S,
    base: &BaseForecasts,
    n: usize,
    rng: &mut R,
) -> Result<WeightedSample>
where
    S: AggregationStructure + ?Sized,
    R: Rng + ?Sized,
{
    plain_is_with(structure, base, n, &SamplerOptions::default(), rng)
}

pub fn plain_is_with<S, R>(
    structure: &S,
    base: &BaseForecasts,
    n: usize,
    opts: &SamplerOptions,
    rng: &mut R,
) -> Result<WeightedSample>
where
    S: AggregationStructure + ?Sized,
    R: Rng + ?Sized,
{
    check_count(n)?;
    base.check(structure)?;
    let seed = run_seed(rng);
    let weight_fns = base.upper_weight_fns(opts.pmf_floor)?;
    let particles = draw_bottom(&base.bottom, n, seed);
    let constraints = structure.constraints();

    let per_constraint: Vec<Vec<f64>> = constraints
        .par_iter()
        .zip(&weight_fns)
        .map(|(leaves, wf)| {
            (0..n)
                .map(|i| wf.log_density(leaves.iter().map(|&t| particles.column(t)[i]).sum()))
                .collect()
        })
        .collect();
    let mut log_w = vec![0.0; n];
    for lw in &per_constraint {
        for (acc, x) in log_w.iter_mut().zip(lw) {
            *acc += x;
        }
    }
    let weights = normalize_log_weights(&log_w, 0).map_err(|_| {
        // Name the constraint that rules out the most particles.
        let worst = per_constraint
            .iter()
            .enumerate()
            .max_by_key(|(c, lw)| {
                (
                    lw.iter().filter(|x| **x == f64::NEG_INFINITY).count(),
                    std::cmp::Reverse(*c),
                )
            })
            .map_or(0, |(c, _)| c);
        all_zero(worst)
    })?;
    Ok(WeightedSample { particles, weights })
}
