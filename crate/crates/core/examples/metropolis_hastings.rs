//! Random-walk Metropolis-Hastings on the reconciled density, for
//! continuous and count forecasts, with its acceptance rate and ESS.
//!
//! cargo run --release --example metropolis_hastings

use hier_reconc::harness::{gen_synthetic_base, Family, SyntheticParams};
use hier_reconc::hierarchy::{binary_hierarchy, AggregationStructure};
use hier_reconc::reconcile::{buis, chain_ess, mh_reconcile_with, MhOptions};
use hier_reconc::rng::seeded;

fn main() -> hier_reconc::Result<()> {
    let h = binary_hierarchy(8)?;
    for family in [Family::Gaussian, Family::Poisson] {
        let base =
            gen_synthetic_base(&h, family, 0.3, &SyntheticParams::default(), &mut seeded(5))?;
        let opts = MhOptions {
            burn_in: Some(5_000),
            tau: 0.5,
            ..MhOptions::default()
        };
        let mh = mh_reconcile_with(&h, &base, 50_000, &opts, &mut seeded(6))?;
        let reference = buis(&h, &base, 100_000, &mut seeded(7))?;
        let p = &mh.samples.particles;
        let ess: Vec<f64> = (0..h.n_bottom()).map(|t| chain_ess(p.column(t))).collect();
        println!(
            "{family:?}: acceptance {:.3}, mean chain ESS {:.0}",
            mh.acceptance_rate,
            ess.iter().sum::<f64>() / ess.len() as f64
        );
        for (t, (a, b)) in p.mean().iter().zip(reference.particles.mean()).enumerate() {
            println!("  b{t}: mh {a:7.3}  buis {b:7.3}");
        }
    }
    Ok(())
}
