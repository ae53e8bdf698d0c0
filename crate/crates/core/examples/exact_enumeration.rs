//! Exact reconciled pmf of a small count hierarchy by enumeration, used as
//! an oracle for the samplers.
//!
//! cargo run --release --example exact_enumeration

use hier_reconc::distributions::ForecastDistribution;
use hier_reconc::hierarchy::build_hierarchy;
use hier_reconc::reconcile::{
    bruteforce_discrete, buis, mh_reconcile, plain_is, BaseForecasts, Particles, ResamplingScheme,
};
use hier_reconc::rng::seeded;

fn tv(exact: &[f64], xs: &[f64]) -> f64 {
    let mut h = vec![0.0; exact.len()];
    let mut outside = 0.0;
    for &x in xs {
        match h.get_mut(x as usize) {
            Some(v) => *v += 1.0 / xs.len() as f64,
            None => outside += 1.0 / xs.len() as f64,
        }
    }
    0.5 * (exact
        .iter()
        .zip(&h)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        + outside)
}

fn main() -> hier_reconc::Result<()> {
    let h = build_hierarchy(4, &[vec![vec![0, 1], vec![2, 3]], vec![vec![0, 1, 2, 3]]])?;
    let p = ForecastDistribution::poisson;
    let base = BaseForecasts::new(
        &h,
        vec![p(10.0)?, p(4.5)?, p(5.0)?],
        vec![p(1.5)?, p(2.0)?, p(3.0)?, p(2.5)?],
    )?;
    let exact = bruteforce_discrete(&h, &base, 25)?;
    println!(
        "exact means: {:?}",
        (0..4).map(|t| exact.mean(t)).collect::<Vec<_>>()
    );

    let n = 100_000;
    let mut rng = seeded(9);
    let samplers: [(&str, Particles); 3] = [
        ("buis", buis(&h, &base, n, &mut rng)?.particles),
        (
            "is",
            plain_is(&h, &base, n, &mut rng)?.resample(n, ResamplingScheme::Multinomial, &mut rng),
        ),
        (
            "mh",
            mh_reconcile(&h, &base, n, &mut rng)?.samples.particles,
        ),
    ];
    for (name, particles) in &samplers {
        let worst = (0..4)
            .map(|t| tv(&exact.marginal(t), particles.column(t)))
            .fold(0.0, f64::max);
        println!("{name:>5}: max marginal TV {worst:.4}");
    }
    let top = exact.aggregate_pmf(&[0, 1, 2, 3]);
    let mode = (0..top.len())
        .max_by(|&a, &b| top[a].total_cmp(&top[b]))
        .unwrap();
    println!("most likely total: {mode} (p = {:.4})", top[mode]);
    Ok(())
}
