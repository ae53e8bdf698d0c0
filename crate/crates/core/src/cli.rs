//! Command-line front end: `reconcile`, `synth` and `score`.
//!
//! Exit codes: 0 on success, 2 on invalid input, 3 when every importance
//! weight at some node is zero.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::harness::{run_experiment, summarize, write_results, ExperimentConfig};
use crate::hierarchy::{AggregationStructure, GroupedStructure};
use crate::io::{
    read_columns, read_forecasts, read_labeled_row, read_particles, read_structure,
    write_particles, RunMeta,
};
use crate::metrics::{central_interval, energy_score, mase, median, mis, ScoreReport};
use crate::reconcile::{
    mh_reconcile_with, plain_is_with, reconcile_gaussian, reconcile_grouped, MhOptions, Particles,
    ResamplingScheme, SamplerOptions,
};
use crate::rng::{run_seed, seeded, substream, Stream};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_ZERO_WEIGHTS: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "hier-reconc",
    version,
    about = "Probabilistic reconciliation of hierarchical forecasts"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "HIER_RECONC_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reconcile base forecasts and write particles plus metadata.
    Reconcile(ReconcileArgs),
    /// Run a synthetic experiment grid from a JSON config.
    Synth(SynthArgs),
    /// Score reconciled particles against actuals.
    Score(ScoreArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Closed-form Gaussian conditioning.
    Analytical,
    /// Plain importance sampling followed by resampling.
    Is,
    /// Bottom-up importance sampling (grouped when the structure is not a tree).
    Buis,
    /// Random-walk Metropolis-Hastings.
    Mh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ResamplingArg {
    Multinomial,
    Systematic,
}

#[derive(Debug, Args)]
pub struct ReconcileArgs {
    /// Structure JSON.
    #[arg(long)]
    pub hierarchy: PathBuf,
    /// Forecast JSON, one entry per node.
    #[arg(long)]
    pub forecasts: PathBuf,
    /// Output directory for particles.csv and meta.json.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Buis)]
    pub method: MethodArg,
    /// Number of output particles.
    #[arg(long, short = 'n', default_value_t = 10_000)]
    pub particles: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// MH iterations discarded before recording [default: particles / 4].
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// MH proposal variance for continuous forecasts.
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Probability given to unobserved counts by empirical pmfs.
    #[arg(long, default_value_t = 0.0)]
    pub pmf_floor: f64,
    #[arg(long, value_enum, default_value_t = ResamplingArg::Multinomial)]
    pub resampling: ResamplingArg,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Experiment config JSON (see presets/).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of repetitions.
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Override the number of particles.
    #[arg(long)]
    pub particles: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Structure JSON the particles belong to.
    #[arg(long)]
    pub hierarchy: PathBuf,
    /// Bottom-level particle CSV as written by `reconcile`.
    #[arg(long)]
    pub particles: PathBuf,
    /// One-row CSV of observed values, keyed by node label (all nodes, or
    /// bottom series only).
    #[arg(long)]
    pub actuals: PathBuf,
    /// Training history, one column per node label.
    #[arg(long)]
    pub train: PathBuf,
    /// Miscoverage of the interval scored by MIS.
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Report CSV of a competing forecast; adds skill-score rows.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Output report CSV.
    #[arg(long, short)]
    pub out: PathBuf,
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_INVALID;
        }
        // Fails only if a pool already exists, e.g. when called twice in-process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let outcome = match &cli.command {
        Command::Reconcile(a) => cmd_reconcile(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Score(a) => cmd_score(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => report(&e, &cli.command),
    }
}

fn report(e: &Error, command: &Command) -> i32 {
    match e {
        Error::AllZeroWeights { node } => {
            let name = match command {
                Command::Reconcile(a) => read_structure(&a.hierarchy)
                    .ok()
                    .and_then(|g| g.node_labels().get(*node).cloned()),
                _ => None,
            };
            eprintln!(
                "error: {e} (label {})",
                name.unwrap_or_else(|| format!("u{node}"))
            );
            EXIT_ZERO_WEIGHTS
        }
        _ => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

fn write_meta(path: &Path, meta: &RunMeta) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn cmd_reconcile(a: &ReconcileArgs) -> Result<()> {
    let g = read_structure(&a.hierarchy)?;
    let base = read_forecasts(&a.forecasts, &g)?;
    if a.particles == 0 {
        return Err(Error::InvalidInput("--particles must be at least 1".into()));
    }
    let opts = SamplerOptions {
        resampling: match a.resampling {
            ResamplingArg::Multinomial => ResamplingScheme::Multinomial,
            ResamplingArg::Systematic => ResamplingScheme::Systematic,
        },
        pmf_floor: a.pmf_floor,
    };
    let mut rng = seeded(a.seed);
    let n = a.particles;
    let start = Instant::now();
    let mut meta = RunMeta {
        algorithm: String::new(),
        seed: a.seed,
        n,
        structure_digest: g.digest(),
        ess: None,
        acceptance_rate: None,
        mean: None,
        covariance: None,
        wall_time_ms: 0.0,
    };
    let particles: Particles = match a.method {
        MethodArg::Analytical => {
            let r = reconcile_gaussian(&g, &base)?;
            meta.mean = Some(r.mean.iter().copied().collect());
            meta.covariance = Some(
                r.covariance
                    .row_iter()
                    .map(|row| row.iter().copied().collect())
                    .collect(),
            );
            let draw_seed = run_seed(&mut rng);
            r.draw(n, &mut substream(draw_seed, Stream::Final))?
        }
        MethodArg::Is => {
            let ws = plain_is_with(&g, &base, n, &opts, &mut rng)?;
            meta.ess = Some(ws.ess());
            ws.resample(n, opts.resampling, &mut rng)
        }
        MethodArg::Buis => reconcile_grouped(&g, &base, n, &opts, &mut rng)?.particles,
        MethodArg::Mh => {
            let mh_opts = MhOptions {
                burn_in: a.burn_in,
                tau: a.tau,
                pmf_floor: a.pmf_floor,
            };
            let out = mh_reconcile_with(&g, &base, n, &mh_opts, &mut rng)?;
            meta.acceptance_rate = Some(out.acceptance_rate);
            out.samples.particles
        }
    };
    meta.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    meta.algorithm = match a.method {
        MethodArg::Analytical => "analytical",
        MethodArg::Is => "is",
        MethodArg::Buis if g.is_tree() => "buis",
        MethodArg::Buis => "buis_grouped",
        MethodArg::Mh => "mh",
    }
    .into();

    std::fs::create_dir_all(&a.out)?;
    write_particles(&a.out.join("particles.csv"), &particles, &g.bottom_labels())?;
    write_meta(&a.out.join("meta.json"), &meta)?;
    println!(
        "{}: {} particles -> {}",
        meta.algorithm,
        n,
        a.out.join("particles.csv").display()
    );
    if let Some(ess) = meta.ess {
        println!("ESS: {ess:.1}");
    }
    if let Some(rate) = meta.acceptance_rate {
        println!("acceptance rate: {rate:.3}");
    }
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.repetitions {
        cfg.repetitions = r;
    }
    if let Some(n) = a.particles {
        cfg.n_particles = n;
    }
    if let crate::harness::StructureKind::Custom(p) = &cfg.structure {
        if p.is_relative() {
            let dir = a.config.parent().unwrap_or(Path::new("."));
            cfg.structure = crate::harness::StructureKind::Custom(dir.join(p));
        }
    }
    cfg.validate()?;
    let result = run_experiment(&cfg)?;
    write_results(&result, &a.out)?;
    print!("{}", summarize(&result));
    Ok(())
}

/// Node groups by aggregation size, with a display name per group.
fn levels(g: &GroupedStructure) -> Vec<(String, Vec<usize>)> {
    let mut sizes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (j, c) in g.constraints().iter().enumerate() {
        sizes.entry(c.len()).or_default().push(j);
    }
    let n_upper = g.n_upper();
    sizes
        .entry(1)
        .or_default()
        .extend((0..g.n_bottom()).map(|t| n_upper + t));
    sizes
        .into_iter()
        .rev()
        .map(|(size, mut nodes)| {
            nodes.sort_by_key(|&j| {
                if j < n_upper {
                    g.constraints()[j][0]
                } else {
                    j - n_upper
                }
            });
            let name = if size == 1 {
                "bottom".to_string()
            } else {
                format!("agg_{size}")
            };
            (name, nodes)
        })
        .collect()
}

pub fn cmd_score(a: &ScoreArgs) -> Result<()> {
    let g = read_structure(&a.hierarchy)?;
    let labels = g.node_labels();
    let (header, particles) = read_particles(&a.particles)?;
    let bottom_labels = g.bottom_labels();
    if header != bottom_labels {
        return Err(Error::InvalidInput(format!(
            "{}: columns {:?} do not match bottom labels {:?}",
            a.particles.display(),
            header,
            bottom_labels
        )));
    }
    let lifted = particles.lift(&g);

    let row = read_labeled_row(&a.actuals)?;
    let actual: Vec<f64> = if labels.iter().all(|l| row.contains_key(l)) {
        labels.iter().map(|l| row[l]).collect()
    } else if bottom_labels.iter().all(|l| row.contains_key(l)) {
        g.lift(&bottom_labels.iter().map(|l| row[l]).collect::<Vec<_>>())
    } else {
        let missing = labels
            .iter()
            .find(|l| !row.contains_key(*l))
            .expect("some label missing");
        return Err(Error::InvalidInput(format!(
            "{}: no value for {missing:?}",
            a.actuals.display()
        )));
    };
    let train = read_columns(&a.train)?;

    let mut report = ScoreReport::default();
    for (level, nodes) in levels(&g) {
        for (h, &j) in nodes.iter().enumerate() {
            let name = &labels[j];
            let history = train.get(name).ok_or_else(|| {
                Error::InvalidInput(format!("{}: no column {name:?}", a.train.display()))
            })?;
            let samples = lifted.column(j);
            let point = median(samples);
            let m = mase(&[point], &[actual[j]], history)
                .map_err(|e| Error::InvalidInput(format!("{name}: {e}")))?;
            let (lo, hi) = central_interval(samples, a.alpha);
            report.push(name, &level, h + 1, "mase", m);
            report.push(name, &level, h + 1, "mis", mis(lo, hi, actual[j], a.alpha)?);
        }
    }
    report.push("hierarchy", "all", 1, "es", energy_score(&lifted, &actual)?);

    if let Some(path) = &a.baseline {
        let base = ScoreReport::read_csv(std::fs::File::open(path)?)?;
        let own = ScoreReport {
            rows: report
                .rows
                .iter()
                .filter(|r| !r.metric.starts_with("skill_"))
                .cloned()
                .collect(),
        };
        let skill = own.skill_against(&ScoreReport {
            rows: base
                .rows
                .into_iter()
                .filter(|r| !r.metric.starts_with("skill_"))
                .collect(),
        })?;
        report.rows.extend(skill.rows);
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    report.write_csv(std::fs::File::create(&a.out)?)?;
    for s in report.summarize() {
        println!(
            "{:<12} {:<12} {:>10.4}  ({} horizons)",
            s.level, s.metric, s.value, s.horizons
        );
    }
    Ok(())
}
