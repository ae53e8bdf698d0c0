//! Closed-form Gaussian reconciliation and its agreement with MinT when the
//! weight matrix holds the forecast variances.
//!
//! cargo run --release --example gaussian_closed_form

use hier_reconc::distributions::ForecastDistribution;
use hier_reconc::hierarchy::{binary_hierarchy, AggregationStructure};
use hier_reconc::reconcile::{point_reconcile, reconcile_gaussian, BaseForecasts, PointMethod};
use hier_reconc::rng::seeded;
use nalgebra::{DMatrix, DVector};

fn main() -> hier_reconc::Result<()> {
    let h = binary_hierarchy(8)?;
    let means: Vec<f64> = (0..8).map(|t| 5.0 + 0.5 * t as f64).collect();
    let sums = h.aggregate(&means);

    // Upper forecasts 30% above the bottom sums.
    let upper = sums
        .iter()
        .map(|s| ForecastDistribution::gaussian(1.3 * s, 3.0))
        .collect::<Result<Vec<_>, _>>()?;
    let bottom = means
        .iter()
        .map(|&m| ForecastDistribution::gaussian(m, 2.0))
        .collect::<Result<Vec<_>, _>>()?;
    let base = BaseForecasts::new(&h, upper, bottom)?;

    let r = reconcile_gaussian(&h, &base)?;
    println!("reconciled bottom means and sds");
    for t in 0..8 {
        println!("  b{t}: {:7.3} +- {:.3}", r.mean[t], r.marginal_sd(t));
    }

    let y_hat: Vec<f64> = base
        .upper
        .iter()
        .chain(&base.bottom)
        .map(|d| d.mean())
        .collect();
    let var = base.upper.iter().chain(&base.bottom).map(|d| d.variance());
    let w = DMatrix::from_diagonal(&DVector::from_iterator(y_hat.len(), var));
    let mint = point_reconcile(&y_hat, &h, PointMethod::MinT, Some(&w))?;
    let gap = mint
        .iter()
        .zip(r.lifted_mean(&h))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("max |MinT - conditioned mean| = {gap:.2e}");

    let bu = point_reconcile(&y_hat, &h, PointMethod::BottomUp, None)?;
    println!("bottom-up total {:.2}, MinT total {:.2}", bu[0], mint[0]);

    let draws = r.draw(5, &mut seeded(1))?;
    println!("first joint draw: {:?}", draws.row(0));
    Ok(())
}
