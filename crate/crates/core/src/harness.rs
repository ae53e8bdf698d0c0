//! Synthetic experiments: incoherent base forecasts, method grids,
//! repetitions and result tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::ForecastDistribution;
use crate::error::{Error, Result};
use crate::hierarchy::{
    binary_hierarchy, load_structure, temporal_structure, AggregationStructure, GroupedStructure,
};
use crate::metrics::{mape, wasserstein2};
use crate::reconcile::{
    bruteforce_discrete, buis_grouped, mh_reconcile_with, plain_is_with, reconcile_gaussian,
    BaseForecasts, GaussianReconciled, MhOptions, Particles, SamplerOptions, BRUTEFORCE_LIMIT,
};
use crate::rng::{derive_seed, substream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    /// 8 bottom series under 4, 2 and 1 upper nodes.
    #[serde(rename = "binary_8")]
    Binary8,
    /// 52 weeks aggregated by 2, 4, 13, 26 and 52.
    Weekly,
    /// 12 months aggregated by 2, 3, 4, 6 and 12.
    Monthly,
    /// Structure file on disk.
    Custom(PathBuf),
}

impl StructureKind {
    pub fn build(&self) -> Result<GroupedStructure> {
        match self {
            Self::Binary8 => Ok(GroupedStructure::from(&binary_hierarchy(8)?)),
            Self::Weekly => temporal_structure(52, &[2, 4, 13, 26, 52]),
            Self::Monthly => temporal_structure(12, &[2, 3, 4, 6, 12]),
            Self::Custom(path) => load_structure(path),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Binary8 => "binary_8".into(),
            Self::Weekly => "weekly".into(),
            Self::Monthly => "monthly".into(),
            Self::Custom(p) => p.display().to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytical,
    Is,
    Buis,
    BuisSamples,
    Mh,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Analytical => "analytical",
            Self::Is => "is",
            Self::Buis => "buis",
            Self::BuisSamples => "buis_samples",
            Self::Mh => "mh",
        }
    }
}

/// How synthetic base forecasts are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    #[serde(default = "default_mean_range")]
    pub bottom_mean_range: [f64; 2],
    #[serde(default = "default_sigma_b")]
    pub sigma_b: f64,
    #[serde(default = "default_sigma_u")]
    pub sigma_u: f64,
}

fn default_mean_range() -> [f64; 2] {
    [5.0, 10.0]
}
fn default_sigma_b() -> f64 {
    2.0
}
fn default_sigma_u() -> f64 {
    3.0
}
fn default_reference() -> usize {
    20_000
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            bottom_mean_range: default_mean_range(),
            sigma_b: default_sigma_b(),
            sigma_u: default_sigma_u(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub title: Option<String>,
    pub structure: StructureKind,
    pub family: Family,
    pub epsilon_levels: Vec<f64>,
    pub n_particles: usize,
    pub repetitions: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    #[serde(flatten)]
    pub params: SyntheticParams,
    /// Post-burn-in length of the MH chain used as reference for counts.
    #[serde(default = "default_reference")]
    pub reference_particles: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.n_particles == 0 || self.reference_particles == 0 {
            return bad("particle counts must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if self.epsilon_levels.is_empty()
            || self
                .epsilon_levels
                .iter()
                .any(|e| !(*e >= 0.0 && e.is_finite()))
        {
            return bad("epsilon levels must be finite and non-negative".into());
        }
        if self.family == Family::Poisson && self.methods.contains(&Method::Analytical) {
            return bad("the analytical method needs Gaussian forecasts".into());
        }
        let [lo, hi] = self.params.bottom_mean_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("bad bottom mean range [{lo}, {hi}]"));
        }
        if !(self.params.sigma_b > 0.0 && self.params.sigma_u > 0.0) {
            return bad("standard deviations must be positive".into());
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_reader(std::fs::File::open(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Base forecasts with upper means `(1 + epsilon)` times the sum of
/// their bottom means.
pub fn gen_synthetic_base<S, R>(
    structure: &S,
    family: Family,
    epsilon: f64,
    params: &SyntheticParams,
    rng: &mut R,
) -> Result<BaseForecasts>
where
    S: AggregationStructure + ?Sized,
    R: Rng + ?Sized,
{
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be non-negative, got {epsilon}"
        )));
    }
    let [lo, hi] = params.bottom_mean_range;
    let means: Vec<f64> = (0..structure.n_bottom())
        .map(|_| rng.random_range(lo..=hi))
        .collect();
    let upper_means: Vec<f64> = structure
        .aggregate(&means)
        .iter()
        .map(|s| (1.0 + epsilon) * s)
        .collect();
    let make = |m: f64, sd: f64| match family {
        Family::Gaussian => ForecastDistribution::gaussian(m, sd),
        Family::Poisson => ForecastDistribution::poisson(m),
    };
    let upper = upper_means
        .iter()
        .map(|&m| make(m, params.sigma_u))
        .collect::<Result<_>>()?;
    let bottom = means
        .iter()
        .map(|&m| make(m, params.sigma_b))
        .collect::<Result<_>>()?;
    BaseForecasts::new(structure, upper, bottom)
}

/// One method on one repetition at one incoherence level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub epsilon: f64,
    pub repetition: usize,
    pub mape: Option<f64>,
    pub w2: Option<f64>,
    /// Mean total-variation distance of bottom marginals to the exact pmf.
    pub tv: Option<f64>,
    pub ess: Option<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_ms: f64,
}

/// Averages over repetitions for one (method, epsilon) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub method: Method,
    pub epsilon: f64,
    pub mape: Option<f64>,
    pub w2: Option<f64>,
    pub tv: Option<f64>,
    pub wall_ms: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Ordered by epsilon level, repetition, then method as configured.
    pub records: Vec<RunRecord>,
}

fn mean_of(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl ExperimentResult {
    pub fn cells(&self) -> Vec<CellSummary> {
        let mut out = Vec::new();
        for &eps in &self.config.epsilon_levels {
            for &method in &self.config.methods {
                let rs: Vec<&RunRecord> = self
                    .records
                    .iter()
                    .filter(|r| r.method == method && r.epsilon == eps)
                    .collect();
                if rs.is_empty() {
                    continue;
                }
                out.push(CellSummary {
                    method,
                    epsilon: eps,
                    mape: mean_of(rs.iter().map(|r| r.mape)),
                    w2: mean_of(rs.iter().map(|r| r.w2)),
                    tv: mean_of(rs.iter().map(|r| r.tv)),
                    wall_ms: rs.iter().map(|r| r.wall_ms).sum::<f64>() / rs.len() as f64,
                    failures: rs.iter().filter(|r| r.error.is_some()).count(),
                });
            }
        }
        out
    }

    pub fn cell(&self, method: Method, epsilon: f64) -> Option<CellSummary> {
        self.cells()
            .into_iter()
            .find(|c| c.method == method && c.epsilon == epsilon)
    }
}

struct Reference {
    lifted_mean: Vec<f64>,
    gaussian: Option<GaussianReconciled>,
    exact_marginals: Option<Vec<Vec<f64>>>,
}

struct Estimate {
    bottom_mean: Vec<f64>,
    particles: Option<Particles>,
    ess: Option<f64>,
}

const BRUTEFORCE_CAP_SDS: f64 = 6.0;

fn reference_for(
    g: &GroupedStructure,
    base: &BaseForecasts,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Reference> {
    match cfg.family {
        Family::Gaussian => {
            let r = reconcile_gaussian(g, base)?;
            Ok(Reference {
                lifted_mean: r.lifted_mean(g),
                gaussian: Some(r),
                exact_marginals: None,
            })
        }
        Family::Poisson => {
            let mh = mh_reconcile_with(
                g,
                base,
                cfg.reference_particles,
                &MhOptions::default(),
                &mut substream(seed, Stream::Tagged(1, 0)),
            )?;
            let max_rate = base.bottom.iter().map(|d| d.mean()).fold(0.0, f64::max);
            let cap = (max_rate + BRUTEFORCE_CAP_SDS * max_rate.sqrt()).ceil() as u64;
            let small = (cap as u128 + 1)
                .checked_pow(g.n_bottom() as u32)
                .is_some_and(|p| p <= BRUTEFORCE_LIMIT);
            let exact_marginals = if small {
                let post = bruteforce_discrete(g, base, cap)?;
                Some((0..g.n_bottom()).map(|t| post.marginal(t)).collect())
            } else {
                None
            };
            Ok(Reference {
                lifted_mean: g.lift(&mh.samples.particles.mean()),
                gaussian: None,
                exact_marginals,
            })
        }
    }
}

/// Upper forecasts replaced by samples of size `n` drawn from them.
fn as_samples(base: &BaseForecasts, n: usize, seed: u64) -> Result<BaseForecasts> {
    let upper = base
        .upper
        .par_iter()
        .enumerate()
        .map(|(j, d)| {
            let xs = d.draw(n, &mut substream(seed, Stream::Upper(j)));
            if d.is_discrete() {
                ForecastDistribution::empirical_discrete(xs.iter().map(|&x| x as u64).collect())
            } else {
                ForecastDistribution::empirical_continuous(xs)
            }
        })
        .collect::<Result<_>>()?;
    Ok(BaseForecasts {
        upper,
        bottom: base.bottom.clone(),
    })
}

fn run_method(
    method: Method,
    g: &GroupedStructure,
    base: &BaseForecasts,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Estimate> {
    let n = cfg.n_particles;
    let opts = SamplerOptions::default();
    let mut rng = substream(seed, Stream::Tagged(2, method as u64));
    let weighted = |ws: crate::reconcile::WeightedSample, rng: &mut crate::rng::Generator| {
        let ess = ws.ess();
        let bottom_mean = ws.weighted_mean();
        let particles = if ess >= n as f64 * (1.0 - 1e-12) {
            ws.particles
        } else {
            ws.resample(n, opts.resampling, rng)
        };
        Estimate {
            bottom_mean,
            particles: Some(particles),
            ess: Some(ess),
        }
    };
    match method {
        Method::Analytical => {
            let r = reconcile_gaussian(g, base)?;
            Ok(Estimate {
                bottom_mean: r.mean.iter().copied().collect(),
                particles: None,
                ess: None,
            })
        }
        Method::Is => {
            let ws = plain_is_with(g, base, n, &opts, &mut rng)?;
            Ok(weighted(ws, &mut rng))
        }
        Method::Buis => {
            let ws = buis_grouped(g, base, n, &opts, &mut rng)?;
            Ok(weighted(ws, &mut rng))
        }
        Method::BuisSamples => {
            let sampled = as_samples(base, n, seed)?;
            let ws = buis_grouped(g, &sampled, n, &opts, &mut rng)?;
            Ok(weighted(ws, &mut rng))
        }
        Method::Mh => {
            let out = mh_reconcile_with(g, base, n, &MhOptions::default(), &mut rng)?;
            let particles = out.samples.particles;
            Ok(Estimate {
                bottom_mean: particles.mean(),
                particles: Some(particles),
                ess: None,
            })
        }
    }
}

fn marginal_tv(particles: &Particles, exact: &[Vec<f64>]) -> f64 {
    let n = particles.n_particles() as f64;
    let total: f64 = exact
        .iter()
        .enumerate()
        .map(|(t, pmf)| {
            let mut counts = vec![0.0; pmf.len()];
            let mut outside = 0.0;
            for &x in particles.column(t) {
                match counts.get_mut(x as usize) {
                    Some(c) => *c += 1.0,
                    None => outside += 1.0,
                }
            }
            0.5 * (pmf
                .iter()
                .zip(&counts)
                .map(|(p, c)| (p - c / n).abs())
                .sum::<f64>()
                + outside / n)
        })
        .sum();
    total / exact.len() as f64
}

fn score(
    est: &Estimate,
    reference: &Reference,
    g: &GroupedStructure,
) -> Result<(f64, Option<f64>, Option<f64>)> {
    let m = mape(&g.lift(&est.bottom_mean), &reference.lifted_mean)?;
    let w2 = match (&reference.gaussian, &est.particles) {
        (Some(r), Some(p)) => Some(wasserstein2(p, r)?),
        _ => None,
    };
    let tv = match (&reference.exact_marginals, &est.particles) {
        (Some(e), Some(p)) => Some(marginal_tv(p, e)),
        _ => None,
    };
    Ok((m, w2, tv))
}

/// Run every (epsilon, repetition) job, in parallel, and collect one record
/// per method. Failures are recorded in the affected rows.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let g = cfg.structure.build()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.epsilon_levels.len())
        .flat_map(|e| (0..cfg.repetitions).map(move |r| (e, r)))
        .collect();
    let per_job: Vec<Vec<RunRecord>> = jobs
        .par_iter()
        .map(|&(e, rep)| run_job(&g, cfg, e, rep))
        .collect();
    Ok(ExperimentResult {
        config: cfg.clone(),
        records: per_job.into_iter().flatten().collect(),
    })
}

fn run_job(g: &GroupedStructure, cfg: &ExperimentConfig, e: usize, rep: usize) -> Vec<RunRecord> {
    let epsilon = cfg.epsilon_levels[e];
    let seed = derive_seed(cfg.seed, Stream::Tagged(e as u64, rep as u64));
    let record = |method: Method| RunRecord {
        method,
        epsilon,
        repetition: rep,
        mape: None,
        w2: None,
        tv: None,
        ess: None,
        error: None,
        wall_ms: 0.0,
    };
    let setup = gen_synthetic_base(
        g,
        cfg.family,
        epsilon,
        &cfg.params,
        &mut substream(seed, Stream::Tagged(0, 0)),
    )
    .and_then(|base| reference_for(g, &base, cfg, seed).map(|r| (base, r)));
    let (base, reference) = match setup {
        Ok(x) => x,
        Err(err) => {
            return cfg
                .methods
                .iter()
                .map(|&m| RunRecord {
                    error: Some(format!("reference: {err}")),
                    ..record(m)
                })
                .collect()
        }
    };
    cfg.methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let est = run_method(method, g, &base, cfg, seed);
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let mut rec = RunRecord {
                wall_ms,
                ..record(method)
            };
            match est.and_then(|est| score(&est, &reference, g).map(|s| (s, est.ess))) {
                Ok(((m, w2, tv), ess)) => {
                    rec.mape = Some(m);
                    rec.w2 = w2;
                    rec.tv = tv;
                    rec.ess = ess;
                }
                Err(err) => rec.error = Some(err.to_string()),
            }
            rec
        })
        .collect()
}

fn fmt_opt(x: Option<f64>, digits: usize) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.digits$}"))
}

fn block(out: &mut String, heading: &str, methods: &[Method], rows: &[(f64, Vec<String>)]) {
    let _ = writeln!(out, "{heading}");
    let mut header = format!("{:>8}", "epsilon");
    for m in methods {
        let _ = write!(header, " {:>14}", m.name());
    }
    let _ = writeln!(out, "{header}");
    for (eps, cells) in rows {
        let mut line = format!("{eps:>8.2}");
        for c in cells {
            let _ = write!(line, " {c:>14}");
        }
        let _ = writeln!(out, "{line}");
    }
    out.push('\n');
}

/// Accuracy tables, one row per epsilon and one column per method. Only
/// seed-determined values appear, so the text is reproducible.
pub fn summarize(result: &ExperimentResult) -> String {
    let cfg = &result.config;
    let cells = result.cells();
    let mut out = String::new();
    if let Some(t) = &cfg.title {
        let _ = writeln!(out, "{t}");
    }
    let _ = writeln!(
        out,
        "structure={} family={} N={} repetitions={} seed={}\n",
        cfg.structure.name(),
        match cfg.family {
            Family::Gaussian => "gaussian",
            Family::Poisson => "poisson",
        },
        cfg.n_particles,
        cfg.repetitions,
        cfg.seed
    );
    let rows_for = |f: &dyn Fn(&CellSummary) -> String| -> Vec<(f64, Vec<String>)> {
        let mut eps: Vec<f64> = cells.iter().map(|c| c.epsilon).collect();
        eps.dedup();
        eps.iter()
            .map(|&e| {
                let vals = cfg
                    .methods
                    .iter()
                    .map(|&m| {
                        cells
                            .iter()
                            .find(|c| c.method == m && c.epsilon == e)
                            .map_or("-".into(), f)
                    })
                    .collect();
                (e, vals)
            })
            .collect()
    };
    let reference = match cfg.family {
        Family::Gaussian => "analytical",
        Family::Poisson => "mh reference",
    };
    block(
        &mut out,
        &format!("MAPE on the reconciled mean (%), vs {reference}"),
        &cfg.methods,
        &rows_for(&|c| fmt_opt(c.mape, 3)),
    );
    if cells.iter().any(|c| c.w2.is_some()) {
        block(
            &mut out,
            "Average W2 distance to the reconciled distribution",
            &cfg.methods,
            &rows_for(&|c| fmt_opt(c.w2, 4)),
        );
    }
    if cells.iter().any(|c| c.tv.is_some()) {
        block(
            &mut out,
            "Mean total variation to the exact marginals",
            &cfg.methods,
            &rows_for(&|c| fmt_opt(c.tv, 4)),
        );
    }
    if cells.iter().any(|c| c.failures > 0) {
        block(
            &mut out,
            "Failed repetitions",
            &cfg.methods,
            &rows_for(&|c| c.failures.to_string()),
        );
    }
    out
}

/// Mean wall time per run, in seconds.
pub fn summarize_timings(result: &ExperimentResult) -> String {
    let cfg = &result.config;
    let cells = result.cells();
    let mut out = String::new();
    let mut eps: Vec<f64> = cells.iter().map(|c| c.epsilon).collect();
    eps.dedup();
    let rows: Vec<(f64, Vec<String>)> = eps
        .iter()
        .map(|&e| {
            let vals = cfg
                .methods
                .iter()
                .map(|&m| {
                    cells
                        .iter()
                        .find(|c| c.method == m && c.epsilon == e)
                        .map_or("-".into(), |c| format!("{:.3} s", c.wall_ms / 1e3))
                })
                .collect();
            (e, vals)
        })
        .collect();
    block(
        &mut out,
        "Average computational time per run",
        &cfg.methods,
        &rows,
    );
    out
}

#[derive(Serialize)]
struct Meta<'a> {
    config: &'a ExperimentConfig,
    structure_digest: String,
    n_records: usize,
    total_wall_ms: f64,
}

/// Write `results.csv`, `summary.txt`, `timings.csv`, `timings.txt` and
/// `meta.json` into `dir`.
pub fn write_results(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("results.csv"))?;
    w.write_record([
        "method",
        "epsilon",
        "repetition",
        "mape",
        "w2",
        "tv",
        "ess",
        "error",
    ])?;
    for r in &result.records {
        w.write_record([
            r.method.name().to_string(),
            r.epsilon.to_string(),
            r.repetition.to_string(),
            r.mape.map_or(String::new(), |v| v.to_string()),
            r.w2.map_or(String::new(), |v| v.to_string()),
            r.tv.map_or(String::new(), |v| v.to_string()),
            r.ess.map_or(String::new(), |v| v.to_string()),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("timings.csv"))?;
    w.write_record(["method", "epsilon", "repetition", "wall_ms"])?;
    for r in &result.records {
        w.write_record([
            r.method.name().to_string(),
            r.epsilon.to_string(),
            r.repetition.to_string(),
            format!("{:.3}", r.wall_ms),
        ])?;
    }
    w.flush()?;

    std::fs::write(dir.join("summary.txt"), summarize(result))?;
    std::fs::write(dir.join("timings.txt"), summarize_timings(result))?;
    let meta = Meta {
        config: &result.config,
        structure_digest: result.config.structure.build()?.digest(),
        n_records: result.records.len(),
        total_wall_ms: result.records.iter().map(|r| r.wall_ms).sum(),
    };
    std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn config(family: Family, methods: Vec<Method>) -> ExperimentConfig {
        ExperimentConfig {
            title: None,
            structure: StructureKind::Binary8,
            family,
            epsilon_levels: vec![0.0, 0.5],
            n_particles: 2000,
            repetitions: 2,
            methods,
            seed: 7,
            params: SyntheticParams::default(),
            reference_particles: 2000,
        }
    }

    #[test]
    fn synthetic_upper_means_scale_with_epsilon() {
        let g = StructureKind::Binary8.build().unwrap();
        for eps in [0.0, 0.5] {
            let base = gen_synthetic_base(
                &g,
                Family::Gaussian,
                eps,
                &SyntheticParams::default(),
                &mut seeded(1),
            )
            .unwrap();
            let bottom: Vec<f64> = base.bottom.iter().map(|d| d.mean()).collect();
            assert!(bottom.iter().all(|m| (5.0..=10.0).contains(m)));
            for (u, s) in base.upper.iter().zip(g.aggregate(&bottom)) {
                assert!((u.mean() - (1.0 + eps) * s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn record_count_and_determinism() {
        let cfg = config(
            Family::Gaussian,
            vec![Method::Analytical, Method::Is, Method::Buis],
        );
        let a = run_experiment(&cfg).unwrap();
        assert_eq!(a.records.len(), 3 * 2 * 2);
        let b = run_experiment(&cfg).unwrap();
        let strip = |r: &ExperimentResult| {
            r.records
                .iter()
                .map(|x| RunRecord {
                    wall_ms: 0.0,
                    ..x.clone()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(summarize(&a), summarize(&b));
        assert!(a.records.iter().all(|r| r.error.is_none()));
        let analytical = a.cell(Method::Analytical, 0.5).unwrap();
        assert_eq!(analytical.mape, Some(0.0));
    }

    #[test]
    fn summary_layout() {
        let cfg = config(Family::Gaussian, vec![Method::Is, Method::Buis]);
        let empty = ExperimentResult {
            config: cfg.clone(),
            records: vec![],
        };
        let text = summarize(&empty);
        assert!(text.contains("epsilon"));
        let r = run_experiment(&cfg).unwrap();
        let text = summarize(&r);
        let mape_block: Vec<&str> = text.split("\n\n").nth(1).unwrap().lines().collect();
        assert_eq!(mape_block.len(), 2 + 2);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = config(Family::Poisson, vec![Method::Analytical]);
        assert!(cfg.validate().is_err());
        cfg.methods = vec![Method::Buis];
        cfg.repetitions = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"structure":"binary_8","family":"poisson","epsilon_levels":[0.1],
                "n_particles":10,"repetitions":1,"methods":["buis","buis_samples"],"seed":1}"#,
        )
        .unwrap();
        assert_eq!(cfg.params, SyntheticParams::default());
        assert_eq!(cfg.reference_particles, 20_000);
        let custom: StructureKind = serde_json::from_str(r#"{"custom":"h.json"}"#).unwrap();
        assert_eq!(custom, StructureKind::Custom("h.json".into()));
    }
}
