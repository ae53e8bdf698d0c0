//! Aggregation structures: trees, grouped structures and temporal hierarchies.
//!
//! The full variable vector is `y = [u; b]`: upper aggregates first, then the
//! `m` bottom series. Upper rows of a [`Hierarchy`] are ordered top level
//! first, then by descending level, left to right within a level. Upper rows
//! of a [`GroupedStructure`] keep the order the constraints were given in.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Anything that maps bottom vectors to upper aggregates through 0/1 sums.
pub trait AggregationStructure {
    fn n_bottom(&self) -> usize;

    /// Leaf sets of the upper rows, in row order.
    fn constraints(&self) -> &[Vec<usize>];

    fn n_upper(&self) -> usize {
        self.constraints().len()
    }

    fn n_total(&self) -> usize {
        self.n_bottom() + self.n_upper()
    }

    fn aggregating_matrix(&self) -> AggregationMatrix {
        AggregationMatrix::from_sets(self.n_bottom(), self.constraints())
    }

    /// `A b`.
    fn aggregate(&self, bottom: &[f64]) -> Vec<f64> {
        self.constraints()
            .iter()
            .map(|leaves| leaves.iter().map(|&t| bottom[t]).sum())
            .collect()
    }

    /// `S b = [A b; b]`.
    fn lift(&self, bottom: &[f64]) -> Vec<f64> {
        let mut y = self.aggregate(bottom);
        y.extend_from_slice(bottom);
        y
    }

    /// Hex SHA-256 over the bottom count and the row leaf sets.
    fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n_bottom() as u64).to_le_bytes());
        for row in self.constraints() {
            hasher.update((row.len() as u64).to_le_bytes());
            for &t in row {
                hasher.update((t as u64).to_le_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Binary `(n - m) x m` aggregating matrix `A`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregationMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<u8>,
}

impl AggregationMatrix {
    fn from_sets(n_bottom: usize, sets: &[Vec<usize>]) -> Self {
        let mut entries = vec![0u8; sets.len() * n_bottom];
        for (r, leaves) in sets.iter().enumerate() {
            for &t in leaves {
                entries[r * n_bottom + t] = 1;
            }
        }
        Self {
            rows: sets.len(),
            cols: n_bottom,
            entries,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.entries[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.entries[row * self.cols..(row + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| f64::from(self.get(r, c)))
    }

    /// `S = [A; I]`.
    pub fn summing_matrix(&self) -> DMatrix<f64> {
        let n = self.rows + self.cols;
        DMatrix::from_fn(n, self.cols, |r, c| {
            if r < self.rows {
                f64::from(self.get(r, c))
            } else if r - self.rows == c {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// A tree-structured set of aggregation constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    n_bottom: usize,
    rows: Vec<Vec<usize>>,
    /// `levels[0]` is the lowest upper level; entries are row indices,
    /// left to right.
    levels: Vec<Vec<usize>>,
    labels: Option<Vec<String>>,
}

impl AggregationStructure for Hierarchy {
    fn n_bottom(&self) -> usize {
        self.n_bottom
    }

    fn constraints(&self) -> &[Vec<usize>] {
        &self.rows
    }
}

impl Hierarchy {
    /// Number of upper levels `L`.
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// Row indices of the nodes at 0-based level `level` (bottom-up).
    pub fn level(&self, level: usize) -> &[usize] {
        &self.levels[level]
    }

    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    /// Nodes per level, bottom-up (`k_1, ..., k_L`).
    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    pub fn leaves(&self, row: usize) -> &[usize] {
        &self.rows[row]
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        check_labels(&labels, self.n_total())?;
        self.labels = Some(labels);
        Ok(self)
    }

    /// Build from levels whose nodes carry an external id; returns the
    /// hierarchy and the id of each row.
    fn from_tagged_levels(
        n_bottom: usize,
        levels_spec: Vec<Vec<(Vec<usize>, usize)>>,
    ) -> Result<(Self, Vec<usize>)> {
        if n_bottom == 0 {
            return Err(Error::InvalidStructure("n_bottom must be positive".into()));
        }
        let mut levels_sets: Vec<Vec<(Vec<usize>, usize)>> = Vec::with_capacity(levels_spec.len());
        for (l, level) in levels_spec.into_iter().enumerate() {
            if level.is_empty() {
                return Err(Error::InvalidStructure(format!(
                    "level {} has no nodes",
                    l + 1
                )));
            }
            let mut seen = vec![false; n_bottom];
            let mut nodes = Vec::with_capacity(level.len());
            for (leaves, id) in level {
                if leaves.is_empty() {
                    return Err(Error::EmptyNode { level: l + 1 });
                }
                let mut sorted = leaves.clone();
                sorted.sort_unstable();
                for &t in &sorted {
                    if t >= n_bottom {
                        return Err(Error::LeafOutOfRange { leaf: t, n_bottom });
                    }
                    if seen[t] {
                        return Err(Error::Overlap {
                            level: l + 1,
                            leaf: t,
                        });
                    }
                    seen[t] = true;
                }
                nodes.push((sorted, id));
            }
            nodes.sort_by_key(|(leaves, _)| leaves[0]);
            levels_sets.push(nodes);
        }

        for (l, lower) in levels_sets.iter().enumerate() {
            for (upper_idx, upper) in levels_sets.iter().enumerate().skip(l + 1) {
                for (node, _) in lower {
                    let containing = upper
                        .iter()
                        .filter(|(parent, _)| is_subset(node, parent))
                        .count();
                    let touching = upper
                        .iter()
                        .filter(|(parent, _)| intersects(node, parent))
                        .count();
                    let ok = (containing == 1 && touching == 1) || touching == 0;
                    if !ok {
                        return Err(Error::Nesting {
                            level: l + 1,
                            upper_level: upper_idx + 1,
                            node: node.clone(),
                        });
                    }
                }
            }
        }

        let mut rows = Vec::new();
        let mut ids = Vec::new();
        let mut levels = vec![Vec::new(); levels_sets.len()];
        for (l, level) in levels_sets.into_iter().enumerate().rev() {
            for (leaves, id) in level {
                levels[l].push(rows.len());
                rows.push(leaves);
                ids.push(id);
            }
        }
        Ok((
            Self {
                n_bottom,
                rows,
                levels,
                labels: None,
            },
            ids,
        ))
    }

    /// Level a laminar family by height: a set sits one level above the
    /// highest set it contains. Identical sets are stacked in input order.
    fn from_laminar(n_bottom: usize, sets: &[(Vec<usize>, usize)]) -> Result<(Self, Vec<usize>)> {
        let mut order: Vec<usize> = (0..sets.len()).collect();
        order.sort_by_key(|&i| (sets[i].0.len(), i));
        let mut height = vec![0usize; sets.len()];
        for (pos, &i) in order.iter().enumerate() {
            let mut h = 1;
            for &j in &order[..pos] {
                if is_subset(&sets[j].0, &sets[i].0) {
                    h = h.max(height[j] + 1);
                }
            }
            height[i] = h;
        }
        let n_levels = height.iter().copied().max().unwrap_or(0);
        let mut levels = vec![Vec::new(); n_levels];
        for (i, set) in sets.iter().enumerate() {
            levels[height[i] - 1].push(set.clone());
        }
        Self::from_tagged_levels(n_bottom, levels)
    }
}

/// Validate and build a tree from per-level leaf sets (level 1 first).
pub fn build_hierarchy(n_bottom: usize, levels_spec: &[Vec<Vec<usize>>]) -> Result<Hierarchy> {
    let mut next = 0;
    let tagged = levels_spec
        .iter()
        .map(|level| {
            level
                .iter()
                .map(|node| {
                    next += 1;
                    (node.clone(), next - 1)
                })
                .collect()
        })
        .collect();
    Hierarchy::from_tagged_levels(n_bottom, tagged).map(|(h, _)| h)
}

/// A constraint set split into a maximal tree plus residual constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedStructure {
    n_bottom: usize,
    constraints: Vec<Vec<usize>>,
    subhierarchy: Hierarchy,
    /// Constraint index of each subhierarchy row.
    sub_rows: Vec<usize>,
    extra: Vec<usize>,
    labels: Option<Vec<String>>,
}

impl AggregationStructure for GroupedStructure {
    fn n_bottom(&self) -> usize {
        self.n_bottom
    }

    fn constraints(&self) -> &[Vec<usize>] {
        &self.constraints
    }
}

impl GroupedStructure {
    pub fn subhierarchy(&self) -> &Hierarchy {
        &self.subhierarchy
    }

    /// For each subhierarchy row, the index of the matching constraint.
    pub fn subhierarchy_rows(&self) -> &[usize] {
        &self.sub_rows
    }

    /// Indices of constraints not covered by the subhierarchy.
    pub fn extra_constraints(&self) -> &[usize] {
        &self.extra
    }

    pub fn is_tree(&self) -> bool {
        self.extra.is_empty()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        check_labels(&labels, self.n_total())?;
        self.labels = Some(labels);
        Ok(self)
    }

    /// Node labels in `[u; b]` order; defaults are `u{j}` and `b{t}`.
    pub fn node_labels(&self) -> Vec<String> {
        match &self.labels {
            Some(l) => l.clone(),
            None => (0..self.n_upper())
                .map(|j| format!("u{j}"))
                .chain((0..self.n_bottom).map(|t| format!("b{t}")))
                .collect(),
        }
    }

    pub fn bottom_labels(&self) -> Vec<String> {
        self.node_labels().split_off(self.n_upper())
    }

    fn assemble(n_bottom: usize, constraints: Vec<Vec<usize>>, chosen: &[usize]) -> Result<Self> {
        let tagged: Vec<(Vec<usize>, usize)> = chosen
            .iter()
            .map(|&i| (constraints[i].clone(), i))
            .collect();
        let (subhierarchy, sub_rows) = if tagged.is_empty() {
            Hierarchy::from_tagged_levels(n_bottom, Vec::new())?
        } else {
            Hierarchy::from_laminar(n_bottom, &tagged)?
        };
        let chosen_set: BTreeSet<usize> = chosen.iter().copied().collect();
        let extra = (0..constraints.len())
            .filter(|i| !chosen_set.contains(i))
            .collect();
        Ok(Self {
            n_bottom,
            constraints,
            subhierarchy,
            sub_rows,
            extra,
            labels: None,
        })
    }
}

fn check_labels(labels: &[String], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: labels.len(),
        });
    }
    Ok(())
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    // both sorted
    let mut j = 0;
    for &x in a {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j == b.len() || b[j] != x {
            return false;
        }
    }
    true
}

fn intersects(a: &[usize], b: &[usize]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// Two constraints can live in one tree iff nested or disjoint.
fn compatible(a: &[usize], b: &[usize]) -> bool {
    !intersects(a, b) || is_subset(a, b) || is_subset(b, a)
}

fn normalize_constraints(constraints: &[Vec<usize>], n_bottom: usize) -> Result<Vec<Vec<usize>>> {
    if n_bottom == 0 {
        return Err(Error::InvalidStructure("n_bottom must be positive".into()));
    }
    constraints
        .iter()
        .map(|c| {
            if c.is_empty() {
                return Err(Error::EmptyNode { level: 0 });
            }
            let mut s = c.clone();
            s.sort_unstable();
            let before = s.len();
            s.dedup();
            if s.len() != before {
                return Err(Error::InvalidStructure(format!(
                    "constraint {c:?} repeats a leaf"
                )));
            }
            if let Some(&t) = s.iter().find(|&&t| t >= n_bottom) {
                return Err(Error::LeafOutOfRange { leaf: t, n_bottom });
            }
            Ok(s)
        })
        .collect()
}

/// Per-level node counts (bottom level first) of the tree a laminar subset
/// would form; used for deterministic tie-breaking.
fn level_profile(sets: &[Vec<usize>], chosen: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = chosen.to_vec();
    order.sort_by_key(|&i| (sets[i].len(), i));
    let mut heights: Vec<usize> = Vec::with_capacity(order.len());
    for (pos, &i) in order.iter().enumerate() {
        let mut h = 1;
        for (q, &j) in order[..pos].iter().enumerate() {
            if is_subset(&sets[j], &sets[i]) {
                h = h.max(heights[q] + 1);
            }
        }
        heights.push(h);
    }
    let n_levels = heights.iter().copied().max().unwrap_or(0);
    let mut profile = vec![0; n_levels];
    for h in heights {
        profile[h - 1] += 1;
    }
    profile
}

#[derive(Default)]
struct Best {
    chosen: Option<Vec<usize>>,
    profile: Vec<usize>,
}

impl Best {
    fn size(&self) -> usize {
        self.chosen.as_ref().map_or(0, Vec::len)
    }

    fn offer(&mut self, sets: &[Vec<usize>], mut candidate: Vec<usize>) {
        candidate.sort_unstable();
        let profile = level_profile(sets, &candidate);
        let better = match &self.chosen {
            None => true,
            Some(cur) => {
                (candidate.len(), &profile, std::cmp::Reverse(&candidate))
                    > (cur.len(), &self.profile, std::cmp::Reverse(cur))
            }
        };
        if better {
            self.chosen = Some(candidate);
            self.profile = profile;
        }
    }
}

fn bits(mask: u64) -> impl Iterator<Item = usize> {
    let mut m = mask;
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        }
    })
}

/// Bron–Kerbosch with pivoting over the compatibility graph, pruning
/// branches that cannot reach the current best size.
fn max_cliques(sets: &[Vec<usize>], adj: &[u64], r: u64, mut p: u64, mut x: u64, best: &mut Best) {
    if p == 0 && x == 0 {
        best.offer(sets, bits(r).collect());
        return;
    }
    if (r.count_ones() + p.count_ones()) < best.size() as u32 {
        return;
    }
    let pivot = bits(p | x)
        .max_by_key(|&u| (p & adj[u]).count_ones())
        .expect("p | x non-empty");
    for v in bits(p & !adj[pivot]) {
        let bit = 1u64 << v;
        max_cliques(sets, adj, r | bit, p & adj[v], x & adj[v], best);
        p &= !bit;
        x |= bit;
    }
}

fn select_laminar(sets: &[Vec<usize>]) -> Vec<usize> {
    let n = sets.len();
    if n == 0 {
        return Vec::new();
    }
    if n <= 64 {
        let mut adj = vec![0u64; n];
        for i in 0..n {
            for j in 0..n {
                if i != j && compatible(&sets[i], &sets[j]) {
                    adj[i] |= 1 << j;
                }
            }
        }
        let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        let mut best = Best::default();
        max_cliques(sets, &adj, 0, all, 0, &mut best);
        best.chosen.unwrap_or_default()
    } else {
        // Greedy: smallest sets first, keep anything compatible so far.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (sets[i].len(), i));
        let mut chosen: Vec<usize> = Vec::new();
        for i in order {
            if chosen.iter().all(|&j| compatible(&sets[i], &sets[j])) {
                chosen.push(i);
            }
        }
        chosen.sort_unstable();
        chosen
    }
}

/// Split a constraint set into the largest tree it contains and the
/// remaining constraints. Exact for up to 64 constraints; greedy beyond.
pub fn extract_max_subhierarchy(
    constraints: &[Vec<usize>],
    n_bottom: usize,
) -> Result<GroupedStructure> {
    let sets = normalize_constraints(constraints, n_bottom)?;
    let chosen = select_laminar(&sets);
    GroupedStructure::assemble(n_bottom, sets, &chosen)
}

/// Temporal hierarchy for `periods` base periods aggregated by each factor.
///
/// Constraints are ordered by factor, largest first, blocks left to right.
/// The tree part is found by exhaustive search over chains of pairwise
/// dividing factors.
pub fn temporal_structure(periods: usize, factors: &[usize]) -> Result<GroupedStructure> {
    if periods == 0 {
        return Err(Error::InvalidStructure("periods must be positive".into()));
    }
    if factors.len() > 16 {
        return Err(Error::InvalidStructure(
            "at most 16 aggregation factors".into(),
        ));
    }
    let mut sorted: Vec<usize> = factors.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(Error::InvalidStructure(format!("repeated factor {}", w[0])));
        }
    }
    for &f in &sorted {
        if f <= 1 {
            return Err(Error::InvalidStructure(format!("factor {f} must exceed 1")));
        }
        if !periods.is_multiple_of(f) {
            return Err(Error::NonDivisor { factor: f, periods });
        }
    }

    let mut constraints = Vec::new();
    let mut by_factor: Vec<Vec<usize>> = Vec::new();
    for &f in &sorted {
        let mut ids = Vec::new();
        for start in (0..periods).step_by(f) {
            ids.push(constraints.len());
            constraints.push((start..start + f).collect::<Vec<_>>());
        }
        by_factor.push(ids);
    }

    let k = sorted.len();
    let mut best = Best::default();
    for mask in 0u32..(1 << k) {
        let picked: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let chain = picked.iter().all(|&a| {
            picked.iter().all(|&b| {
                sorted[a].is_multiple_of(sorted[b]) || sorted[b].is_multiple_of(sorted[a])
            })
        });
        if !chain {
            continue;
        }
        let candidate: Vec<usize> = picked.iter().flat_map(|&i| by_factor[i].clone()).collect();
        best.offer(&constraints, candidate);
    }
    let chosen = best.chosen.unwrap_or_default();
    GroupedStructure::assemble(periods, constraints, &chosen)
}

/// `true` iff `||u - A b||_inf <= tol` for `y = [u; b]`.
pub fn coherence_check<S: AggregationStructure + ?Sized>(
    y: &[f64],
    structure: &S,
    tol: f64,
) -> Result<bool> {
    if y.len() != structure.n_total() {
        return Err(Error::Dimension {
            expected: structure.n_total(),
            actual: y.len(),
        });
    }
    let (u, b) = y.split_at(structure.n_upper());
    let ab = structure.aggregate(b);
    Ok(u.iter().zip(&ab).all(|(x, s)| (x - s).abs() <= tol))
}

/// On-disk structure description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StructureFile {
    pub n_bottom: usize,
    pub constraints: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl StructureFile {
    /// Decompose into tree + residual constraints. `labels` may name every
    /// node (`[u; b]` order) or just the bottom series.
    pub fn into_structure(self) -> Result<GroupedStructure> {
        let g = extract_max_subhierarchy(&self.constraints, self.n_bottom)?;
        match self.labels {
            None => Ok(g),
            Some(labels) if labels.len() == g.n_total() => g.with_labels(labels),
            Some(labels) if labels.len() == g.n_bottom() => {
                let all = (0..g.n_upper())
                    .map(|j| format!("u{j}"))
                    .chain(labels)
                    .collect();
                g.with_labels(all)
            }
            Some(labels) => Err(Error::Dimension {
                expected: g.n_total(),
                actual: labels.len(),
            }),
        }
    }
}

impl From<&GroupedStructure> for StructureFile {
    fn from(g: &GroupedStructure) -> Self {
        Self {
            n_bottom: g.n_bottom(),
            constraints: g.constraints().to_vec(),
            labels: g.labels().map(<[String]>::to_vec),
        }
    }
}

pub fn load_structure(path: &std::path::Path) -> Result<GroupedStructure> {
    let text = std::fs::read_to_string(path)?;
    let file: StructureFile = serde_json::from_str(&text)?;
    file.into_structure()
}

/// The 8-bottom binary tree (4 + 2 + 1 upper nodes).
pub fn binary_hierarchy(n_bottom: usize) -> Result<Hierarchy> {
    if n_bottom == 0 || !n_bottom.is_power_of_two() {
        return Err(Error::InvalidStructure(format!(
            "binary hierarchy needs a power-of-two bottom count, got {n_bottom}"
        )));
    }
    let mut levels = Vec::new();
    let mut width = 2;
    while width <= n_bottom {
        levels.push(
            (0..n_bottom)
                .step_by(width)
                .map(|s| (s..s + width).collect())
                .collect(),
        );
        width *= 2;
    }
    build_hierarchy(n_bottom, &levels)
}

/// Wrap a tree as a grouped structure with no residual constraints,
/// keeping its row order.
impl From<&Hierarchy> for GroupedStructure {
    fn from(h: &Hierarchy) -> Self {
        Self {
            n_bottom: h.n_bottom,
            constraints: h.rows.clone(),
            subhierarchy: h.clone(),
            sub_rows: (0..h.rows.len()).collect(),
            extra: Vec::new(),
            labels: h.labels.clone(),
        }
    }
}
