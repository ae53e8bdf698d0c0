use rand::Rng;
use rayon::prelude::*;

use super::importance::{effective_sample_size, normalize_log_weights, resample_indices};
use super::{
    check_count, draw_bottom, BaseForecasts, Particles, Provenance, ReconciledSamples,
    ResamplingScheme, SamplerOptions, WeightedSample,
};
use crate::distributions::{ForecastDistribution, NodeDensity};
use crate::error::{all_zero, Result};
use crate::hierarchy::{AggregationStructure, GroupedStructure, Hierarchy};
use crate::rng::{run_seed, substream, Stream};

/// One resampling step of a BUIS pass.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    /// 1 is the level directly above the bottom series.
    pub level: usize,
    pub node: usize,
    pub leaves: Vec<usize>,
    /// Kish ESS of the node's weights before resampling.
    pub ess: f64,
    /// Mean of the node's aggregate before and after resampling.
    pub mean_before: f64,
    pub mean_after: f64,
}

struct Pass<'a> {
    hierarchy: &'a Hierarchy,
    /// Weight function per hierarchy row.
    weight_fns: Vec<&'a NodeDensity>,
    /// Name used for each hierarchy row in errors and substreams.
    row_ids: Vec<usize>,
    scheme: ResamplingScheme,
}

impl Pass<'_> {
    fn run(
        &self,
        bottom: &[ForecastDistribution],
        n: usize,
        seed: u64,
        mut trace: Option<&mut Vec<TraceStep>>,
    ) -> Result<Particles> {
        let mut columns = draw_bottom(bottom, n, seed).into_columns();
        let tracing = trace.is_some();
        for (l, level) in self.hierarchy.levels().iter().enumerate() {
            let cols = &columns;
            let updates: Vec<(usize, Vec<Vec<f64>>, Option<TraceStep>)> = level
                .par_iter()
                .map(|&row| {
                    let leaves = self.hierarchy.leaves(row);
                    let id = self.row_ids[row];
                    let mut sums = cols[leaves[0]].clone();
                    for &t in &leaves[1..] {
                        for (s, x) in sums.iter_mut().zip(&cols[t]) {
                            *s += x;
                        }
                    }
                    let log_w: Vec<f64> = sums
                        .iter()
                        .map(|&s| self.weight_fns[row].log_density(s))
                        .collect();
                    let w = normalize_log_weights(&log_w, id)?;
                    let idx = resample_indices(
                        &w,
                        n,
                        self.scheme,
                        &mut substream(seed, Stream::Node(id)),
                    );
                    let block = leaves
                        .iter()
                        .map(|&t| idx.iter().map(|&i| cols[t][i]).collect())
                        .collect();
                    let step = tracing.then(|| TraceStep {
                        level: l + 1,
                        node: id,
                        leaves: leaves.to_vec(),
                        ess: effective_sample_size(&w),
                        mean_before: sums.iter().sum::<f64>() / n as f64,
                        mean_after: idx.iter().map(|&i| sums[i]).sum::<f64>() / n as f64,
                    });
                    Ok((row, block, step))
                })
                .collect::<Result<_>>()?;
            for (row, block, step) in updates {
                for (&t, col) in self.hierarchy.leaves(row).iter().zip(block) {
                    columns[t] = col;
                }
                if let (Some(tr), Some(step)) = (trace.as_deref_mut(), step) {
                    tr.push(step);
                }
            }
        }
        Particles::from_columns(columns)
    }
}

fn provenance<S: AggregationStructure + ?Sized>(
    algorithm: &str,
    seed: u64,
    structure: &S,
) -> Provenance {
    Provenance {
        algorithm: algorithm.into(),
        seed,
        structure_digest: structure.digest(),
    }
}

/// Bottom-up importance sampling on a tree hierarchy.
///
/// Level by level from the bottom, each upper node reweights the current
/// particles by its own forecast density at the node's aggregate and
/// resamples the node's leaf block jointly. Blocks at one level are
/// disjoint, so every weighting step is one-dimensional.
pub fn buis<R: Rng + ?Sized>(
    h: &Hierarchy,
    base: &BaseForecasts,
    n: usize,
    rng: &mut R,
) -> Result<ReconciledSamples> {
    buis_with(h, base, n, &SamplerOptions::default(), rng)
}

pub fn buis_with<R: Rng + ?Sized>(
    h: &Hierarchy,
    base: &BaseForecasts,
    n: usize,
    opts: &SamplerOptions,
    rng: &mut R,
) -> Result<ReconciledSamples> {
    run(h, base, n, opts, rng, None, "buis")
}

/// Same as [`buis`], also returning every resampling step in order.
pub fn buis_traced<R: Rng + ?Sized>(
    h: &Hierarchy,
    base: &BaseForecasts,
    n: usize,
    rng: &mut R,
) -> Result<(ReconciledSamples, Vec<TraceStep>)> {
    let mut trace = Vec::new();
    let out = run(
        h,
        base,
        n,
        &SamplerOptions::default(),
        rng,
        Some(&mut trace),
        "buis",
    )?;
    Ok((out, trace))
}

/// BUIS where upper forecasts are given as samples.
///
/// Each sample-based upper node is turned into a density once (Gaussian
/// KDE for continuous samples, empirical pmf for counts) and that
/// estimate is used as the node's weight function. Parametric nodes are
/// still evaluated in closed form.
pub fn buis_sample_based<R: Rng + ?Sized>(
    h: &Hierarchy,
    base: &BaseForecasts,
    n: usize,
    opts: &SamplerOptions,
    rng: &mut R,
) -> Result<ReconciledSamples> {
    run(h, base, n, opts, rng, None, "buis_samples")
}

fn run<R: Rng + ?Sized>(
    h: &Hierarchy,
    base: &BaseForecasts,
    n: usize,
    opts: &SamplerOptions,
    rng: &mut R,
    trace: Option<&mut Vec<TraceStep>>,
    name: &str,
) -> Result<ReconciledSamples> {
    check_count(n)?;
    base.check(h)?;
    let seed = run_seed(rng);
    let fns = base.upper_weight_fns(opts.pmf_floor)?;
    let pass = Pass {
        hierarchy: h,
        weight_fns: fns.iter().collect(),
        row_ids: (0..h.n_upper()).collect(),
        scheme: opts.resampling,
    };
    let particles = pass.run(&base.bottom, n, seed, trace)?;
    Ok(ReconciledSamples {
        particles,
        provenance: provenance(name, seed, h),
    })
}

/// BUIS for constraint sets that are not a tree.
///
/// Runs BUIS on the structure's maximal subhierarchy, then weights each
/// particle by the densities of the remaining constraints. The result is
/// weighted; resample it to get an unweighted set.
pub fn buis_grouped<R: Rng + ?Sized>(
    g: &GroupedStructure,
    base: &BaseForecasts,
    n: usize,
    opts: &SamplerOptions,
    rng: &mut R,
) -> Result<WeightedSample> {
    grouped_inner(g, base, n, opts, rng).map(|(ws, _)| ws)
}

fn grouped_inner<R: Rng + ?Sized>(
    g: &GroupedStructure,
    base: &BaseForecasts,
    n: usize,
    opts: &SamplerOptions,
    rng: &mut R,
) -> Result<(WeightedSample, u64)> {
    check_count(n)?;
    base.check(g)?;
    let seed = run_seed(rng);
    let fns = base.upper_weight_fns(opts.pmf_floor)?;
    let pass = Pass {
        hierarchy: g.subhierarchy(),
        weight_fns: g.subhierarchy_rows().iter().map(|&c| &fns[c]).collect(),
        row_ids: g.subhierarchy_rows().to_vec(),
        scheme: opts.resampling,
    };
    let particles = pass.run(&base.bottom, n, seed, None)?;

    let constraints = g.constraints();
    let per_extra: Vec<(usize, Vec<f64>)> = g
        .extra_constraints()
        .par_iter()
        .map(|&c| {
            let lw = (0..n)
                .map(|i| {
                    fns[c].log_density(constraints[c].iter().map(|&t| particles.column(t)[i]).sum())
                })
                .collect();
            (c, lw)
        })
        .collect();
    let mut log_w = vec![0.0; n];
    for (_, lw) in &per_extra {
        for (acc, x) in log_w.iter_mut().zip(lw) {
            *acc += x;
        }
    }
    let weights = normalize_log_weights(&log_w, 0).map_err(|_| {
        let worst = per_extra
            .iter()
            .max_by_key(|(c, lw)| {
                (
                    lw.iter().filter(|x| **x == f64::NEG_INFINITY).count(),
                    std::cmp::Reverse(*c),
                )
            })
            .map_or(0, |(c, _)| *c);
        all_zero(worst)
    })?;
    Ok((WeightedSample { particles, weights }, seed))
}

/// Unweighted reconciled particles for any constraint set: plain BUIS when
/// the structure is a tree, grouped BUIS followed by resampling otherwise.
pub fn reconcile_grouped<R: Rng + ?Sized>(
    g: &GroupedStructure,
    base: &BaseForecasts,
    n: usize,
    opts: &SamplerOptions,
    rng: &mut R,
) -> Result<ReconciledSamples> {
    let (ws, seed) = grouped_inner(g, base, n, opts, rng)?;
    let particles = if g.is_tree() {
        ws.particles
    } else {
        ws.resample(n, opts.resampling, &mut substream(seed, Stream::Final))
    };
    Ok(ReconciledSamples {
        particles,
        provenance: provenance(if g.is_tree() { "buis" } else { "buis_grouped" }, seed, g),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::hierarchy::{build_hierarchy, temporal_structure};
    use crate::rng::seeded;

    fn four_leaf() -> Hierarchy {
        build_hierarchy(4, &[vec![vec![0, 1], vec![2, 3]], vec![vec![0, 1, 2, 3]]]).unwrap()
    }

    fn poisson_base(h: &Hierarchy, upper: &[f64], bottom: &[f64]) -> BaseForecasts {
        BaseForecasts::new(
            h,
            upper
                .iter()
                .map(|&r| ForecastDistribution::poisson(r).unwrap())
                .collect(),
            bottom
                .iter()
                .map(|&r| ForecastDistribution::poisson(r).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn trace_visits_levels_bottom_up() {
        let h = four_leaf();
        let base = poisson_base(&h, &[10.0, 3.0, 7.0], &[1.0, 2.0, 3.0, 4.0]);
        let (out, trace) = buis_traced(&h, &base, 2000, &mut seeded(9)).unwrap();
        assert_eq!(out.particles.n_particles(), 2000);
        let visited: Vec<(usize, usize)> = trace.iter().map(|s| (s.level, s.node)).collect();
        assert_eq!(visited, vec![(1, 1), (1, 2), (2, 0)]);
        assert_eq!(trace[0].leaves, vec![0, 1]);
        assert!(trace.iter().all(|s| s.ess > 1.0 && s.ess <= 2000.0));
    }

    #[test]
    fn same_seed_same_output() {
        let h = four_leaf();
        let base = poisson_base(&h, &[12.0, 4.0, 6.0], &[1.0, 2.0, 3.0, 4.0]);
        let a = buis(&h, &base, 500, &mut seeded(3)).unwrap();
        let b = buis(&h, &base, 500, &mut seeded(3)).unwrap();
        assert_eq!(a, b);
        let c = buis(&h, &base, 500, &mut seeded(4)).unwrap();
        assert_ne!(a.particles, c.particles);
    }

    #[test]
    fn outputs_are_valid_counts() {
        let h = four_leaf();
        let base = poisson_base(&h, &[10.0, 3.0, 7.0], &[1.0, 2.0, 3.0, 4.0]);
        let out = buis(&h, &base, 1000, &mut seeded(5)).unwrap();
        for c in out.particles.columns() {
            assert!(c.iter().all(|&x| x >= 0.0 && x.fract() == 0.0));
        }
    }

    #[test]
    fn unreachable_node_names_itself() {
        let h = four_leaf();
        let mut base = poisson_base(&h, &[10.0, 3.0, 7.0], &[1.0, 2.0, 3.0, 4.0]);
        base.upper[2] = ForecastDistribution::empirical_discrete(vec![500]).unwrap();
        let err = buis(&h, &base, 200, &mut seeded(5)).unwrap_err();
        assert!(matches!(err, Error::AllZeroWeights { node: 2 }));
    }

    #[test]
    fn grouped_on_tree_has_uniform_weights() {
        let g = GroupedStructure::from(&four_leaf());
        let base = poisson_base(&four_leaf(), &[10.0, 3.0, 7.0], &[1.0, 2.0, 3.0, 4.0]);
        let ws = buis_grouped(&g, &base, 300, &SamplerOptions::default(), &mut seeded(1)).unwrap();
        assert!(ws.weights.iter().all(|&w| (w - 1.0 / 300.0).abs() < 1e-15));
    }

    #[test]
    fn grouped_weekly_runs() {
        let g = temporal_structure(52, &[2, 4, 13, 26, 52]).unwrap();
        let all: Vec<ForecastDistribution> = g
            .constraints()
            .iter()
            .map(|c| {
                ForecastDistribution::gaussian(c.len() as f64, (c.len() as f64).sqrt()).unwrap()
            })
            .collect();
        let bottom = vec![ForecastDistribution::gaussian(1.0, 1.0).unwrap(); 52];
        let base = BaseForecasts::new(&g, all, bottom).unwrap();
        let out =
            reconcile_grouped(&g, &base, 2000, &SamplerOptions::default(), &mut seeded(2)).unwrap();
        assert_eq!(out.particles.n_series(), 52);
        assert_eq!(out.provenance.algorithm, "buis_grouped");
    }
}
