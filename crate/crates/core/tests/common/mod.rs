#![allow(dead_code)]

use hier_reconc::distributions::ForecastDistribution;
use hier_reconc::hierarchy::{build_hierarchy, Hierarchy};
use hier_reconc::rng::seeded;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn gaussian(mean: f64, sd: f64) -> ForecastDistribution {
    ForecastDistribution::gaussian(mean, sd).unwrap()
}

pub fn poisson(rate: f64) -> ForecastDistribution {
    ForecastDistribution::poisson(rate).unwrap()
}

pub fn four_leaf() -> Hierarchy {
    build_hierarchy(4, &[vec![vec![0, 1], vec![2, 3]], vec![vec![0, 1, 2, 3]]]).unwrap()
}

/// Random tree over `2..=max_bottom` leaves: adjacent groups are merged two
/// or three at a time until one node is left, then leaf ids are shuffled.
pub fn random_tree(seed: u64, max_bottom: usize) -> Hierarchy {
    let mut rng = seeded(seed);
    let m = rng.random_range(2..=max_bottom);
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(&mut rng);
    let mut groups: Vec<Vec<usize>> = perm.iter().map(|&t| vec![t]).collect();
    let mut levels = Vec::new();
    while groups.len() > 1 {
        let mut next: Vec<Vec<usize>> = Vec::new();
        let mut i = 0;
        while i < groups.len() {
            let take = rng.random_range(2..=3).min(groups.len() - i);
            let merged: Vec<usize> = groups[i..i + take].concat();
            if take == 1 {
                next.last_mut().unwrap().extend(merged);
            } else {
                next.push(merged);
            }
            i += take;
        }
        levels.push(next.clone());
        groups = next;
    }
    build_hierarchy(m, &levels).unwrap()
}

/// Histogram of integer-valued draws on `0..len`, with the mass outside.
pub fn histogram(xs: &[f64], weights: Option<&[f64]>, len: usize) -> (Vec<f64>, f64) {
    let mut h = vec![0.0; len];
    let mut outside = 0.0;
    let uniform = 1.0 / xs.len() as f64;
    for (i, &x) in xs.iter().enumerate() {
        let w = weights.map_or(uniform, |w| w[i]);
        match h.get_mut(x as usize) {
            Some(slot) if x >= 0.0 => *slot += w,
            _ => outside += w,
        }
    }
    (h, outside)
}

/// Total variation between an exact pmf on `0..len` and a histogram.
pub fn tv(exact: &[f64], (pmf, outside): (Vec<f64>, f64)) -> f64 {
    let inside: f64 = exact.iter().zip(&pmf).map(|(a, b)| (a - b).abs()).sum();
    0.5 * (inside + outside)
}

/// Mean and standard error over replicate estimates.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}
