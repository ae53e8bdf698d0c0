use hier_reconc::distributions::{empirical_pmf, kde_fit, DensityEstimator, ForecastDistribution};
use hier_reconc::rng::seeded;
use proptest::prelude::*;

fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, steps: usize) -> f64 {
    let h = (hi - lo) / steps as f64;
    let inner: f64 = (1..steps).map(|i| f(lo + i as f64 * h)).sum();
    h * (inner + 0.5 * (f(lo) + f(hi)))
}

fn pmf_total(d: &ForecastDistribution) -> f64 {
    let top = (d.mean() + 40.0 * d.variance().sqrt() + 50.0).ceil() as u64;
    (0..=top).map(|k| d.density(k as f64)).sum()
}

fn argmax(grid: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    grid.iter()
        .copied()
        .max_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap()
}

fn loglik(d: &ForecastDistribution, xs: &[f64]) -> f64 {
    xs.iter().map(|&x| d.log_density(x)).sum()
}

proptest! {
    #[test]
    fn poisson_pmf_sums_to_one(rate in 0.01..200.0f64) {
        let d = ForecastDistribution::poisson(rate).unwrap();
        prop_assert!((pmf_total(&d) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn negbin_pmf_sums_to_one(mean in 0.05..100.0f64, dispersion in 0.2..50.0f64) {
        let d = ForecastDistribution::negative_binomial(mean, dispersion).unwrap();
        prop_assert!((pmf_total(&d) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_density_integrates_to_one(mean in -1e3..1e3f64, sd in 1e-3..1e3f64) {
        let d = ForecastDistribution::gaussian(mean, sd).unwrap();
        let total = trapezoid(|x| d.density(x), mean - 10.0 * sd, mean + 10.0 * sd, 20_000);
        prop_assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn empirical_pmf_is_zero_outside_window(
        samples in proptest::collection::vec(0u64..40, 1..200),
        floor in 0.0..1e-3f64,
    ) {
        let DensityEstimator::EmpiricalPmf(p) = empirical_pmf(&samples, floor).unwrap() else {
            panic!("expected an empirical pmf");
        };
        let max = *samples.iter().max().unwrap();
        prop_assert_eq!(p.support_max(), 2 * max);
        for x in [-1.0, -0.5, 0.5, max as f64 + 0.25, (2 * max + 1) as f64, 1e6] {
            prop_assert_eq!(p.pmf(x), 0.0);
        }
        for &s in &samples {
            prop_assert!(p.pmf(s as f64) > 0.0);
        }
        if floor == 0.0 {
            let total: f64 = (0..=2 * max).map(|k| p.pmf(k as f64)).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kde_is_positive_and_continuous(
        samples in proptest::collection::vec(-50.0..50.0f64, 2..60),
        x in -80.0..80.0f64,
    ) {
        prop_assume!(samples.iter().any(|&s| s != samples[0]));
        let k = kde_fit(&samples).unwrap();
        // Far tails underflow in linear space, so positivity is checked on logs.
        let (a, b) = (k.log_evaluate(x), k.log_evaluate(x + 1e-9));
        prop_assert!(a.is_finite() && b.is_finite());
        prop_assert!((a - b).abs() <= 1e-6);
        prop_assert!(k.evaluate(samples[0]) > 0.0);
    }
}

#[test]
fn kde_integrates_to_one() {
    for n in [50, 5000] {
        let xs = ForecastDistribution::gaussian(3.0, 2.0)
            .unwrap()
            .draw(n, &mut seeded(n as u64));
        let k = kde_fit(&xs).unwrap();
        let total = trapezoid(|x| k.evaluate(x), -30.0, 36.0, 200_000);
        assert!((total - 1.0).abs() < 1e-6, "n = {n}: {total}");
    }
}

#[test]
fn coarse_mle_recovers_parameters() {
    let mut rng = seeded(77);
    let grid = |c: f64| -> Vec<f64> { (-20..=20).map(|i| c * (1.0 + 0.01 * i as f64)).collect() };

    let xs = ForecastDistribution::poisson(6.0)
        .unwrap()
        .draw(50_000, &mut rng);
    let best = argmax(&grid(6.0), |r| {
        loglik(&ForecastDistribution::poisson(r).unwrap(), &xs)
    });
    assert!((best - 6.0).abs() <= 0.12, "poisson rate {best}");

    let xs = ForecastDistribution::gaussian(10.0, 3.0)
        .unwrap()
        .draw(50_000, &mut rng);
    let m = argmax(&grid(10.0), |m| {
        loglik(&ForecastDistribution::gaussian(m, 3.0).unwrap(), &xs)
    });
    let s = argmax(&grid(3.0), |s| {
        loglik(&ForecastDistribution::gaussian(10.0, s).unwrap(), &xs)
    });
    assert!((m - 10.0).abs() <= 0.1, "gaussian mean {m}");
    assert!((s - 3.0).abs() <= 0.06, "gaussian sd {s}");

    let xs = ForecastDistribution::negative_binomial(8.0, 2.5)
        .unwrap()
        .draw(50_000, &mut rng);
    let nb = |m: f64, r: f64| ForecastDistribution::negative_binomial(m, r).unwrap();
    let m = argmax(&grid(8.0), |m| loglik(&nb(m, 2.5), &xs));
    let r = argmax(&grid(2.5), |r| loglik(&nb(8.0, r), &xs));
    assert!((m - 8.0).abs() <= 0.16, "negbin mean {m}");
    assert!((r - 2.5).abs() <= 0.1, "negbin dispersion {r}");
}
