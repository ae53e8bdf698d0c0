//! Reconcile the four-leaf hierarchy (two regions of two stores) with
//! bottom-up importance sampling and compare against the closed form.
//!
//! cargo run --release --example quickstart

use hier_reconc::distributions::ForecastDistribution;
use hier_reconc::hierarchy::{build_hierarchy, AggregationStructure};
use hier_reconc::reconcile::{buis, reconcile_gaussian, BaseForecasts};
use hier_reconc::rng::seeded;

fn main() -> hier_reconc::Result<()> {
    // Level 1: two regions. Level 2: the total.
    let h = build_hierarchy(4, &[vec![vec![0, 1], vec![2, 3]], vec![vec![0, 1, 2, 3]]])?;
    let g = ForecastDistribution::gaussian;

    // Upper rows run top level first: total, region A, region B.
    let base = BaseForecasts::new(
        &h,
        vec![g(30.0, 3.0)?, g(14.0, 2.0)?, g(15.0, 2.0)?],
        vec![g(5.0, 2.0)?, g(6.0, 2.0)?, g(7.0, 2.0)?, g(6.5, 2.0)?],
    )?;

    let out = buis(&h, &base, 100_000, &mut seeded(7))?;
    let exact = reconcile_gaussian(&h, &base)?;

    println!("{:>8} {:>10} {:>10}", "node", "buis", "exact");
    let sampled = h.lift(&out.particles.mean());
    let closed = exact.lifted_mean(&h);
    for (j, (a, b)) in sampled.iter().zip(&closed).enumerate() {
        println!("{j:>8} {a:>10.3} {b:>10.3}");
    }
    println!("structure digest {}", out.provenance.structure_digest);
    Ok(())
}
