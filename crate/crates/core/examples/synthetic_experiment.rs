//! A reduced synthetic grid: a preset with fewer repetitions and particles,
//! summarized as a table. `hier-reconc synth --config presets/binary_gaussian_mape.json`
//! runs the full grid.
//!
//! cargo run --release --example synthetic_experiment [preset]

use std::path::Path;

use hier_reconc::harness::{run_experiment, summarize, summarize_timings, ExperimentConfig};

fn main() -> hier_reconc::Result<()> {
    let name = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "binary_gaussian_mape".into());
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../presets")
        .join(format!("{name}.json"));
    let mut cfg = ExperimentConfig::load(&path)?;
    cfg.repetitions = 5;
    cfg.n_particles = cfg.n_particles.min(20_000);
    cfg.reference_particles = cfg.reference_particles.min(10_000);

    let result = run_experiment(&cfg)?;
    print!("{}", summarize(&result));
    print!("{}", summarize_timings(&result));
    Ok(())
}
