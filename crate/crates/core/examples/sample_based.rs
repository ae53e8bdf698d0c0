//! Forecasts given only as samples: count samples become empirical pmfs,
//! continuous ones a Gaussian KDE, and BUIS weights with those estimates.
//!
//! cargo run --release --example sample_based

use hier_reconc::distributions::ForecastDistribution;
use hier_reconc::hierarchy::{build_hierarchy, AggregationStructure};
use hier_reconc::reconcile::{buis, buis_sample_based, BaseForecasts, SamplerOptions};
use hier_reconc::rng::seeded;

fn main() -> hier_reconc::Result<()> {
    let h = build_hierarchy(4, &[vec![vec![0, 1], vec![2, 3]], vec![vec![0, 1, 2, 3]]])?;
    let mut rng = seeded(11);
    let rates = [12.0, 5.0, 6.0, 2.0, 2.5, 3.0, 2.0];
    let parametric: Vec<ForecastDistribution> = rates
        .iter()
        .map(|&r| ForecastDistribution::poisson(r))
        .collect::<Result<_, _>>()?;

    // Pretend only 5000 draws per node are available.
    let as_samples = parametric
        .iter()
        .map(|d| {
            let xs = d
                .draw(5_000, &mut rng)
                .into_iter()
                .map(|x| x as u64)
                .collect();
            ForecastDistribution::empirical_discrete(xs)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let exact_base = BaseForecasts::from_node_order(&h, parametric)?;
    let sample_base = BaseForecasts::from_node_order(&h, as_samples)?;
    let opts = SamplerOptions {
        pmf_floor: 1e-6,
        ..SamplerOptions::default()
    };

    let a = buis(&h, &exact_base, 100_000, &mut seeded(1))?;
    let b = buis_sample_based(&h, &sample_base, 100_000, &opts, &mut seeded(2))?;
    let (ma, mb) = (h.lift(&a.particles.mean()), h.lift(&b.particles.mean()));
    println!("{:>5} {:>12} {:>12}", "node", "parametric", "samples");
    for j in 0..h.n_total() {
        println!("{j:>5} {:>12.3} {:>12.3}", ma[j], mb[j]);
    }
    Ok(())
}
