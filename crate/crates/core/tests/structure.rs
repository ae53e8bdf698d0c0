mod common;

use hier_reconc::hierarchy::{
    coherence_check, extract_max_subhierarchy, temporal_structure, AggregationStructure,
};
use proptest::prelude::*;

fn compatible(a: &[usize], b: &[usize]) -> bool {
    let sub = |x: &[usize], y: &[usize]| x.iter().all(|t| y.contains(t));
    !a.iter().any(|t| b.contains(t)) || sub(a, b) || sub(b, a)
}

fn laminar(sets: &[Vec<usize>], pick: &[usize]) -> bool {
    pick.iter().enumerate().all(|(k, &i)| {
        pick[k + 1..]
            .iter()
            .all(|&j| compatible(&sets[i], &sets[j]))
    })
}

fn constraint_sets(
    max_bottom: usize,
    max_sets: usize,
) -> impl Strategy<Value = (usize, Vec<Vec<usize>>)> {
    (2..=max_bottom).prop_flat_map(move |m| {
        let set = proptest::sample::subsequence((0..m).collect::<Vec<_>>(), 1..=m);
        (Just(m), proptest::collection::vec(set, 1..=max_sets))
    })
}

proptest! {
    #[test]
    fn lifted_bottoms_are_coherent(
        seed in any::<u64>(),
        b in proptest::collection::vec(-1e3..1e3f64, 16),
    ) {
        let h = common::random_tree(seed, 16);
        let y = h.lift(&b[..h.n_bottom()]);
        prop_assert!(coherence_check(&y, &h, 0.0).unwrap());
    }

    #[test]
    fn levels_partition_leaves(seed in any::<u64>()) {
        let h = common::random_tree(seed, 24);
        let a = h.aggregating_matrix();
        for level in h.levels() {
            let mut cover = vec![0u32; h.n_bottom()];
            for &row in level {
                for (t, c) in cover.iter_mut().enumerate() {
                    *c += u32::from(a.get(row, t));
                }
            }
            prop_assert!(cover.iter().all(|&c| c <= 1));
        }
    }

    #[test]
    fn extracted_subhierarchy_is_maximum((m, sets) in constraint_sets(7, 12)) {
        let g = extract_max_subhierarchy(&sets, m).unwrap();
        let chosen = g.subhierarchy_rows().to_vec();
        prop_assert_eq!(chosen.len() + g.extra_constraints().len(), sets.len());
        prop_assert!(laminar(&sets, &chosen));
        for &e in g.extra_constraints() {
            let mut bigger = chosen.clone();
            bigger.push(e);
            prop_assert!(!laminar(&sets, &bigger), "constraint {} could be added", e);
        }
        let best = (0u32..1 << sets.len())
            .filter_map(|mask| {
                let pick: Vec<usize> = (0..sets.len()).filter(|i| mask >> i & 1 == 1).collect();
                laminar(&sets, &pick).then_some(pick.len())
            })
            .max()
            .unwrap();
        prop_assert_eq!(chosen.len(), best);
    }

    #[test]
    fn subhierarchy_rows_match_constraints((m, sets) in constraint_sets(8, 10)) {
        let g = extract_max_subhierarchy(&sets, m).unwrap();
        let sub = g.subhierarchy();
        for (row, &j) in g.subhierarchy_rows().iter().enumerate() {
            let mut want = sets[j].clone();
            want.sort_unstable();
            prop_assert_eq!(sub.leaves(row), &want[..]);
        }
    }
}

#[test]
fn single_factor_temporal_structure_has_one_constraint() {
    for p in [2, 4, 7, 12, 52] {
        let g = temporal_structure(p, &[p]).unwrap();
        assert_eq!(g.n_upper(), 1);
        assert_eq!(g.constraints()[0], (0..p).collect::<Vec<_>>());
        assert!(g.is_tree());
    }
}

#[test]
fn weekly_structure_sizes() {
    let g = temporal_structure(52, &[2, 4, 13, 26, 52]).unwrap();
    assert_eq!(g.n_upper(), 26 + 13 + 4 + 2 + 1);
    assert_eq!(g.subhierarchy_rows().len(), 40);
    assert_eq!(g.extra_constraints().len(), 6);
}
