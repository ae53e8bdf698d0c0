//! Score reconciled particles against an observed outcome: MASE of the
//! median, interval score of the central 90% interval, energy score over
//! the whole hierarchy, and skill against the unreconciled base forecasts.
//!
//! cargo run --release --example scoring

use hier_reconc::distributions::ForecastDistribution;
use hier_reconc::hierarchy::{build_hierarchy, AggregationStructure};
use hier_reconc::metrics::{central_interval, energy_score, mase, median, mis, skill_score};
use hier_reconc::reconcile::{buis, BaseForecasts, Particles};
use hier_reconc::rng::seeded;

fn main() -> hier_reconc::Result<()> {
    let h = build_hierarchy(4, &[vec![vec![0, 1], vec![2, 3]], vec![vec![0, 1, 2, 3]]])?;
    let nb = ForecastDistribution::negative_binomial;
    let all = vec![
        nb(22.0, 8.0)?,
        nb(9.0, 6.0)?,
        nb(11.0, 6.0)?,
        nb(3.0, 4.0)?,
        nb(4.0, 4.0)?,
        nb(6.0, 4.0)?,
        nb(5.0, 4.0)?,
    ];
    let base = BaseForecasts::from_node_order(&h, all.clone())?;
    let n = 20_000;

    let reconciled = buis(&h, &base, n, &mut seeded(1))?.particles.lift(&h);
    let mut rng = seeded(2);
    let unreconciled = Particles::from_columns(all.iter().map(|d| d.draw(n, &mut rng)).collect())?;

    let actual = h.lift(&[4.0, 3.0, 7.0, 6.0]);
    let train: Vec<Vec<f64>> = (0..h.n_total())
        .map(|j| {
            (0..24)
                .map(|i| actual[j] + ((i * 7 + j) % 5) as f64 - 2.0)
                .collect()
        })
        .collect();

    let alpha = 0.1;
    let score = |p: &Particles| -> hier_reconc::Result<(f64, f64, f64)> {
        let (mut m, mut s) = (0.0, 0.0);
        for j in 0..h.n_total() {
            m += mase(&[median(p.column(j))], &[actual[j]], &train[j])?;
            let (lo, hi) = central_interval(p.column(j), alpha);
            s += mis(lo, hi, actual[j], alpha)?;
        }
        let k = h.n_total() as f64;
        Ok((m / k, s / k, energy_score(p, &actual)?))
    };
    let (rm, rs, re) = score(&reconciled)?;
    let (bm, bs, be) = score(&unreconciled)?;
    println!("{:>12} {:>8} {:>8} {:>8}", "", "MASE", "MIS", "ES");
    println!("{:>12} {bm:>8.3} {bs:>8.3} {be:>8.2}", "base");
    println!("{:>12} {rm:>8.3} {rs:>8.3} {re:>8.2}", "reconciled");
    println!(
        "skill: MASE {:+.3}, MIS {:+.3}, ES {:+.3}",
        skill_score(rm, bm)?,
        skill_score(rs, bs)?,
        skill_score(re, be)?
    );
    Ok(())
}
