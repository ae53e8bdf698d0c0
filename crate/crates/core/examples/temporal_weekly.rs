//! Weekly temporal hierarchy (52 weeks; 2-, 4-, 13-, 26- and 52-week
//! totals). The 2- and 4-week blocks do not nest in the quarters, so the
//! structure is split into a tree plus residual constraints and sampled
//! with grouped BUIS.
//!
//! cargo run --release --example temporal_weekly

use std::time::Instant;

use hier_reconc::distributions::ForecastDistribution;
use hier_reconc::hierarchy::{temporal_structure, AggregationStructure};
use hier_reconc::reconcile::{buis_grouped, reconcile_grouped, BaseForecasts, SamplerOptions};
use hier_reconc::rng::seeded;

fn main() -> hier_reconc::Result<()> {
    let g = temporal_structure(52, &[2, 4, 13, 26, 52])?;
    println!(
        "{} constraints: {} in the tree, {} residual",
        g.n_upper(),
        g.subhierarchy_rows().len(),
        g.extra_constraints().len()
    );

    // Weekly demand with a mild seasonal swing; aggregates forecast 20% high.
    let weekly: Vec<f64> = (0..52)
        .map(|w| 4.0 + 2.0 * (w as f64 / 52.0 * std::f64::consts::TAU).sin())
        .collect();
    let upper = g
        .aggregate(&weekly)
        .iter()
        .map(|s| ForecastDistribution::poisson(1.2 * s))
        .collect::<Result<Vec<_>, _>>()?;
    let bottom = weekly
        .iter()
        .map(|&m| ForecastDistribution::poisson(m))
        .collect::<Result<Vec<_>, _>>()?;
    let base = BaseForecasts::new(&g, upper, bottom)?;

    let opts = SamplerOptions::default();
    let start = Instant::now();
    let ws = buis_grouped(&g, &base, 100_000, &opts, &mut seeded(3))?;
    println!(
        "grouped BUIS: {:.2}s, ESS of residual weights {:.0}",
        start.elapsed().as_secs_f64(),
        ws.ess()
    );

    let out = reconcile_grouped(&g, &base, 20_000, &opts, &mut seeded(3))?;
    let annual = g.lift(&out.particles.mean());
    let year = g
        .constraints()
        .iter()
        .position(|c| c.len() == 52)
        .expect("annual row");
    println!(
        "annual total: base {:.1}, bottom sum {:.1}, reconciled {:.1}",
        base.upper[year].mean(),
        weekly.iter().sum::<f64>(),
        annual[year]
    );
    Ok(())
}
