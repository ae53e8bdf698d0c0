mod common;

use common::{four_leaf, gaussian, histogram, mean_se, poisson, random_tree, tv};
use hier_reconc::distributions::ForecastDistribution;
use hier_reconc::harness::{gen_synthetic_base, Family, SyntheticParams};
use hier_reconc::hierarchy::{
    binary_hierarchy, coherence_check, extract_max_subhierarchy, AggregationStructure,
    GroupedStructure,
};
use hier_reconc::reconcile::{
    bruteforce_discrete, buis, buis_grouped, mh_reconcile, normalize_log_weights, plain_is,
    point_reconcile, reconcile_gaussian, resample_indices, BaseForecasts, Particles, PointMethod,
    ResamplingScheme, SamplerOptions,
};
use hier_reconc::rng::seeded;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

const N: usize = 100_000;
const CAP: u64 = 30;

fn max_tv(exact: &[Vec<f64>], particles: &Particles, weights: Option<&[f64]>) -> f64 {
    exact
        .iter()
        .enumerate()
        .map(|(t, p)| tv(p, histogram(particles.column(t), weights, p.len())))
        .fold(0.0, f64::max)
}

/// Constraints `{0,1}`, `{1,2}` and the total: two different trees of size
/// two are maximal, so the residual constraint depends on input order.
fn overlapping(order_ab: bool) -> GroupedStructure {
    let (a, b) = (vec![0, 1], vec![1, 2]);
    let cons = if order_ab {
        vec![a, b, vec![0, 1, 2, 3]]
    } else {
        vec![b, a, vec![0, 1, 2, 3]]
    };
    extract_max_subhierarchy(&cons, 4).unwrap()
}

fn overlapping_base(g: &GroupedStructure, order_ab: bool) -> BaseForecasts {
    let (ua, ub) = (poisson(6.0), poisson(3.5));
    let upper = if order_ab {
        vec![ua, ub, poisson(11.0)]
    } else {
        vec![ub, ua, poisson(11.0)]
    };
    let bottom = vec![poisson(2.0), poisson(3.0), poisson(1.5), poisson(2.5)];
    BaseForecasts::new(g, upper, bottom).unwrap()
}

#[test]
fn samplers_match_enumeration_on_a_tree() {
    let h = four_leaf();
    let base = BaseForecasts::new(
        &h,
        vec![poisson(9.0), poisson(4.0), poisson(7.5)],
        vec![poisson(1.5), poisson(2.0), poisson(3.0), poisson(2.5)],
    )
    .unwrap();
    let exact = bruteforce_discrete(&h, &base, CAP).unwrap();
    let marginals: Vec<Vec<f64>> = (0..4).map(|t| exact.marginal(t)).collect();

    let b = buis(&h, &base, N, &mut seeded(1)).unwrap();
    let d = max_tv(&marginals, &b.particles, None);
    assert!(d <= 0.02, "buis tv {d}");

    let mut rng = seeded(2);
    let ws = plain_is(&h, &base, N, &mut rng).unwrap();
    let resampled = ws.resample(N, ResamplingScheme::Multinomial, &mut rng);
    let d = max_tv(&marginals, &resampled, None);
    assert!(d <= 0.02, "is tv {d}");

    let mh = mh_reconcile(&h, &base, N, &mut seeded(3)).unwrap();
    let d = max_tv(&marginals, &mh.samples.particles, None);
    assert!(d <= 0.02, "mh tv {d}");
}

#[test]
fn grouped_sampler_matches_enumeration() {
    let g = overlapping(true);
    assert_eq!(g.extra_constraints().len(), 1);
    let base = overlapping_base(&g, true);
    let exact = bruteforce_discrete(&g, &base, CAP).unwrap();
    let marginals: Vec<Vec<f64>> = (0..4).map(|t| exact.marginal(t)).collect();

    let ws = buis_grouped(&g, &base, N, &SamplerOptions::default(), &mut seeded(4)).unwrap();
    let d = max_tv(&marginals, &ws.particles, Some(&ws.weights));
    assert!(d <= 0.02, "weighted buis_grouped tv {d}");
    let resampled = ws.resample(N, ResamplingScheme::Multinomial, &mut seeded(5));
    let d = max_tv(&marginals, &resampled, None);
    assert!(d <= 0.02, "resampled buis_grouped tv {d}");

    let mh = mh_reconcile(&g, &base, N, &mut seeded(6)).unwrap();
    let d = max_tv(&marginals, &mh.samples.particles, None);
    assert!(d <= 0.02, "mh tv {d}");
}

#[test]
fn grouped_means_do_not_depend_on_the_tree_choice() {
    let reps = 30;
    let n = 20_000;
    let means = |order_ab: bool, seed: u64| -> Vec<Vec<f64>> {
        let g = overlapping(order_ab);
        let base = overlapping_base(&g, order_ab);
        (0..reps)
            .map(|r| {
                let ws = buis_grouped(
                    &g,
                    &base,
                    n,
                    &SamplerOptions::default(),
                    &mut seeded(seed + r),
                )
                .unwrap();
                ws.weighted_mean()
            })
            .collect()
    };
    let extra = |g: GroupedStructure| g.constraints()[g.extra_constraints()[0]].clone();
    assert_eq!(extra(overlapping(true)), vec![1, 2]);
    assert_eq!(extra(overlapping(false)), vec![0, 1]);
    let (x, y) = (means(true, 100), means(false, 200));
    for t in 0..4 {
        let (mx, sx) = mean_se(&x.iter().map(|m| m[t]).collect::<Vec<_>>());
        let (my, sy) = mean_se(&y.iter().map(|m| m[t]).collect::<Vec<_>>());
        let z = (mx - my) / (sx * sx + sy * sy).sqrt();
        assert!(z.abs() <= 3.0, "bottom {t}: {mx} vs {my}, z = {z:.2}");
    }
}

#[test]
fn buis_moments_match_closed_form() {
    let h = binary_hierarchy(8).unwrap();
    let reps = 100;
    let n = 25_000;
    for (k, eps) in [0.1, 0.3, 0.5].into_iter().enumerate() {
        let base = gen_synthetic_base(
            &h,
            Family::Gaussian,
            eps,
            &SyntheticParams::default(),
            &mut seeded(900 + k as u64),
        )
        .unwrap();
        let exact = reconcile_gaussian(&h, &base).unwrap();
        let runs: Vec<(Vec<f64>, Vec<Vec<f64>>)> = (0..reps)
            .map(|r| {
                let p = buis(&h, &base, n, &mut seeded(1000 * k as u64 + r))
                    .unwrap()
                    .particles;
                (p.mean(), p.covariance())
            })
            .collect();
        for i in 0..8 {
            let (m, se) = mean_se(&runs.iter().map(|r| r.0[i]).collect::<Vec<_>>());
            let z = (m - exact.mean[i]) / se;
            assert!(z.abs() <= 3.0, "eps {eps}: mean {i} z = {z:.2}");
            for j in 0..=i {
                let (c, se) = mean_se(&runs.iter().map(|r| r.1[i][j]).collect::<Vec<_>>());
                let z = (c - exact.covariance[(i, j)]) / se;
                assert!(z.abs() <= 3.0, "eps {eps}: cov ({i}, {j}) z = {z:.2}");
            }
        }
    }
}

#[test]
fn weighted_bootstrap_targets_the_tilted_pmf() {
    let p = poisson(4.0);
    let tilt = |x: f64| -(x - 7.0) * (x - 7.0) / 8.0;
    let len = 40;
    let mut exact: Vec<f64> = (0..len)
        .map(|k| p.density(k as f64) * tilt(k as f64).exp())
        .collect();
    let z: f64 = exact.iter().sum();
    exact.iter_mut().for_each(|x| *x /= z);

    let mut rng = seeded(31);
    let xs = p.draw(N, &mut rng);
    let w = normalize_log_weights(&xs.iter().map(|&x| tilt(x)).collect::<Vec<_>>(), 0).unwrap();
    for scheme in [ResamplingScheme::Multinomial, ResamplingScheme::Systematic] {
        let picked: Vec<f64> = resample_indices(&w, N, scheme, &mut rng)
            .into_iter()
            .map(|i| xs[i])
            .collect();
        let d = tv(&exact, histogram(&picked, None, len));
        assert!(d <= 0.01, "{scheme:?}: tv {d}");
    }
}

#[test]
fn sampler_outputs_are_coherent_after_lifting() {
    let h = four_leaf();
    let base = BaseForecasts::new(
        &h,
        vec![
            gaussian(30.0, 3.0),
            gaussian(12.0, 2.0),
            gaussian(15.0, 2.0),
        ],
        vec![
            gaussian(5.0, 2.0),
            gaussian(6.0, 2.0),
            gaussian(7.0, 2.0),
            gaussian(6.5, 2.0),
        ],
    )
    .unwrap();
    let outputs = [
        buis(&h, &base, 2000, &mut seeded(1)).unwrap().particles,
        mh_reconcile(&h, &base, 2000, &mut seeded(2))
            .unwrap()
            .samples
            .particles,
        reconcile_gaussian(&h, &base)
            .unwrap()
            .draw(2000, &mut seeded(3))
            .unwrap(),
    ];
    for p in &outputs {
        for row in p.lift(&h).rows() {
            assert!(coherence_check(&row, &h, 1e-9).unwrap());
        }
        for b in p.rows() {
            assert!(coherence_check(&h.lift(&b), &h, 0.0).unwrap());
        }
    }
}

#[test]
fn all_zero_weights_name_the_constraint() {
    let h = four_leaf();
    let impossible = ForecastDistribution::empirical_discrete(vec![500]).unwrap();
    let base = BaseForecasts::new(
        &h,
        vec![poisson(9.0), impossible, poisson(5.0)],
        vec![poisson(1.0), poisson(1.0), poisson(1.0), poisson(1.0)],
    )
    .unwrap();
    match buis(&h, &base, 1000, &mut seeded(1)) {
        Err(hier_reconc::Error::AllZeroWeights { node }) => assert_eq!(node, 1),
        other => panic!("expected all-zero weights, got {other:?}"),
    }
}

proptest! {
    #[test]
    fn weights_are_normalized_and_shift_invariant(
        lw in proptest::collection::vec(prop_oneof![9 => -700.0..700.0f64, 1 => Just(f64::NEG_INFINITY)], 1..300),
    ) {
        prop_assume!(lw.iter().any(|x| x.is_finite()));
        let w = normalize_log_weights(&lw, 0).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let shifted: Vec<f64> = lw.iter().map(|x| x + 100.0).collect();
        let v = normalize_log_weights(&shifted, 0).unwrap();
        for (a, b) in w.iter().zip(&v) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn importance_weights_sum_to_one(seed in any::<u64>(), eps in 0.0..1.0f64) {
        let h = random_tree(seed, 10);
        let mut rng = seeded(seed);
        let base = gen_synthetic_base(&h, Family::Gaussian, eps, &SyntheticParams::default(), &mut rng).unwrap();
        let ws = plain_is(&h, &base, 500, &mut rng).unwrap();
        prop_assert!((ws.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn mint_with_forecast_variances_equals_conditioning(seed in any::<u64>()) {
        let h = random_tree(seed, 12);
        let mut rng = seeded(seed ^ 0x5eed);
        let all: Vec<ForecastDistribution> = (0..h.n_total())
            .map(|_| gaussian(rng.random_range(-20.0..50.0), rng.random_range(0.2..5.0)))
            .collect();
        let base = BaseForecasts::from_node_order(&h, all.clone()).unwrap();
        let y_hat: Vec<f64> = all.iter().map(|d| d.mean()).collect();
        let w = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            all.len(),
            all.iter().map(|d| d.variance()),
        ));
        let mint = point_reconcile(&y_hat, &h, PointMethod::MinT, Some(&w)).unwrap();
        let cond = h.lift(reconcile_gaussian(&h, &base).unwrap().mean.as_slice());
        for (a, b) in mint.iter().zip(&cond) {
            prop_assert!((a - b).abs() <= 1e-8, "{} vs {}", a, b);
        }
    }
}
