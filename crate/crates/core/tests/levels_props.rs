use memxbar::levels::{
    count_separated, count_unique_levels, enumerate_node_levels, enumerate_node_levels_capped, select_node_size,
    simplicial_sequence, LevelSet, Multisets,
};
use memxbar::Error;
use proptest::prelude::*;

fn level_set() -> impl Strategy<Value = LevelSet> {
    prop::collection::btree_set(1u32..1_000_000, 1..=6)
        .prop_map(|s| LevelSet::new(s.into_iter().map(|k| k as f64 * 1e-9).collect()).unwrap())
}

proptest! {
    #[test]
    fn pascal_recurrence(m in 2u32..=12, l in 2u32..=20) {
        let f = |m, l| count_unique_levels(m, l).unwrap();
        prop_assert_eq!(f(m, l), f(m, l - 1) + f(m - 1, l));
    }

    #[test]
    fn node_has_at_least_device_levels(m in 1u32..=12, l in 1u32..=20) {
        let c = count_unique_levels(m, l).unwrap();
        prop_assert!(c >= l as u64);
        prop_assert!(count_unique_levels(m + 1, l).unwrap() >= c);
        prop_assert!(count_unique_levels(m, l + 1).unwrap() > c);
    }

    #[test]
    fn sequence_agrees_with_counts(m in 1u32..=10, l_max in 1u32..=15) {
        let seq = simplicial_sequence(m, l_max).unwrap();
        prop_assert_eq!(seq.len(), l_max as usize);
        for (i, &c) in seq.iter().enumerate() {
            prop_assert_eq!(c, count_unique_levels(m, i as u32 + 1).unwrap());
        }
    }

    #[test]
    fn node_size_is_minimal(l in 2u32..=16, required in 1u64..5000) {
        let m = match select_node_size(l, required) {
            Ok(m) => m,
            Err(Error::Infeasible { .. }) => {
                // Only when even the largest countable node falls short.
                prop_assert!(count_unique_levels(64 - l, l).unwrap() < required);
                return Ok(());
            }
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(count_unique_levels(m, l).unwrap() >= required);
        if m > 1 {
            prop_assert!(count_unique_levels(m - 1, l).unwrap() < required);
        }
    }

    #[test]
    fn catalog_is_sorted_and_complete(levels in level_set(), m in 1u32..=5) {
        let cat = enumerate_node_levels(&levels, m, 0.0).unwrap();
        prop_assert_eq!(cat.entries.len() as u64, cat.combinatorial_count);
        prop_assert_eq!(cat.combinatorial_count, count_unique_levels(m, levels.len() as u32).unwrap());
        prop_assert!(cat.effective_count as u64 <= cat.combinatorial_count);
        for w in cat.entries.windows(2) {
            prop_assert!(w[0].conductance <= w[1].conductance);
        }
        for e in &cat.entries {
            prop_assert_eq!(e.assignment.len(), m as usize);
            prop_assert!(e.assignment.windows(2).all(|w| w[0] >= w[1]));
            let sum: f64 = e.assignment.iter().map(|&i| levels.as_slice()[i]).sum();
            prop_assert!((sum - e.conductance).abs() <= 1e-12 * sum);
        }
    }

    #[test]
    fn wider_epsilon_merges_more(levels in level_set(), m in 1u32..=4, eps in 0.0f64..1e-4) {
        let tight = enumerate_node_levels(&levels, m, 0.0).unwrap();
        let loose = enumerate_node_levels(&levels, m, eps).unwrap();
        prop_assert!(loose.effective_count <= tight.effective_count);
        prop_assert_eq!(loose.distinct().len(), loose.effective_count);
    }

    #[test]
    fn multisets_are_canonical_and_unique(items in 1usize..=6, m in 1usize..=5) {
        let all: Vec<Vec<usize>> = Multisets::new(items, m).collect();
        prop_assert_eq!(all.len() as u64, count_unique_levels(m as u32, items as u32).unwrap());
        let unique: std::collections::BTreeSet<_> = all.iter().cloned().collect();
        prop_assert_eq!(unique.len(), all.len());
        prop_assert!(all.iter().all(|a| a.windows(2).all(|w| w[0] >= w[1]) && a.iter().all(|&i| i < items)));
    }
}

#[test]
fn single_device_and_single_level_cases() {
    assert_eq!(count_unique_levels(1, 7).unwrap(), 7);
    assert_eq!(count_unique_levels(9, 1).unwrap(), 1);
    assert_eq!(count_unique_levels(3, 4).unwrap(), 20);
}

#[test]
fn invalid_arguments() {
    assert!(matches!(count_unique_levels(0, 4), Err(Error::Domain(_))));
    assert!(matches!(count_unique_levels(3, 0), Err(Error::Domain(_))));
    assert!(matches!(count_unique_levels(400, 400), Err(Error::Overflow { .. })));
    assert!(matches!(select_node_size(1, 5), Err(Error::Infeasible { .. })));
    assert!(LevelSet::new(vec![]).is_err());
    assert!(LevelSet::new(vec![2.0, 1.0]).is_err());
    assert!(LevelSet::new(vec![1.0, 1.0]).is_err());
    assert!(LevelSet::new(vec![-1.0, 1.0]).is_err());
}

#[test]
fn enumeration_cap_is_enforced() {
    let levels = LevelSet::new((1..=12).map(|k| k as f64).collect()).unwrap();
    let err = enumerate_node_levels_capped(&levels, 8, 0.0, 1000).unwrap_err();
    assert!(matches!(
        err,
        Error::EnumerationTooLarge {
            count: 75582,
            cap: 1000
        }
    ));
}

#[test]
fn coincident_sums_collapse() {
    // 1 + 3 = 2 + 2: six multisets, five distinct conductances.
    let levels = LevelSet::new(vec![1.0, 2.0, 3.0]).unwrap();
    let cat = enumerate_node_levels(&levels, 2, 1e-9).unwrap();
    assert_eq!(cat.combinatorial_count, 6);
    assert_eq!(cat.effective_count, 5);
    assert_eq!(count_separated([1.0, 1.0 + 1e-12, 2.0], 1e-9), 2);
}
