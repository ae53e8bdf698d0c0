//! Weight degeneracy of plain importance sampling against the per-node
//! resampling of BUIS as upper forecasts drift away from the bottom sums.
//!
//! cargo run --release --example importance_vs_buis

use hier_reconc::harness::{gen_synthetic_base, Family, SyntheticParams};
use hier_reconc::hierarchy::binary_hierarchy;
use hier_reconc::metrics::mape;
use hier_reconc::reconcile::{buis_traced, plain_is, reconcile_gaussian};
use hier_reconc::rng::seeded;

fn main() -> hier_reconc::Result<()> {
    let h = binary_hierarchy(8)?;
    let n = 100_000;
    println!(
        "{:>5} {:>10} {:>10} {:>12} {:>12}",
        "eps", "is ESS", "min BUIS", "is MAPE%", "buis MAPE%"
    );
    for (k, eps) in [0.1, 0.3, 0.5, 0.8].into_iter().enumerate() {
        let mut rng = seeded(100 + k as u64);
        let base = gen_synthetic_base(
            &h,
            Family::Gaussian,
            eps,
            &SyntheticParams::default(),
            &mut rng,
        )?;
        let exact = reconcile_gaussian(&h, &base)?;
        let exact_mean: Vec<f64> = exact.mean.iter().copied().collect();

        let ws = plain_is(&h, &base, n, &mut rng)?;
        let (out, trace) = buis_traced(&h, &base, n, &mut rng)?;
        let min_ess = trace.iter().map(|s| s.ess).fold(f64::INFINITY, f64::min);
        println!(
            "{eps:>5} {:>10.0} {:>10.0} {:>12.3} {:>12.3}",
            ws.ess(),
            min_ess,
            mape(&ws.weighted_mean(), &exact_mean)?,
            mape(&out.particles.mean(), &exact_mean)?,
        );
    }
    Ok(())
}
