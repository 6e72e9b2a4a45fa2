//! Conductance level combinatorics for multi-device nodes.
//!
//! A node built from `m` parallel devices, each holding one of `L` stable
//! levels, can realize one conductance per multiset of level choices. The
//! number of such multisets is `C(m + L - 1, m)`, the `m`-th simplicial
//! `L`-polytopic number. Generic level sets realize every one of them as a
//! distinct conductance; degenerate ones (for example an arithmetic
//! progression) collide, which [`LevelCatalog::effective_count`] exposes.

use crate::error::{Error, Result};

/// Sums closer than this (in siemens) count as one effective level.
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Largest catalog [`enumerate_node_levels`] will materialize.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// Ordered stable conductance values of a single device, in siemens.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSet {
    levels: Vec<f64>,
}

impl LevelSet {
    /// Builds a level set; values must be finite, positive and strictly increasing.
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Domain("level set is empty".into()));
        }
        for (i, &g) in levels.iter().enumerate() {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::Domain(format!(
                    "level {i} = {g} is not a positive finite conductance"
                )));
            }
        }
        if let Some(i) = levels.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Domain(format!(
                "levels must be strictly increasing (index {} -> {})",
                i,
                i + 1
            )));
        }
        Ok(Self { levels })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.levels
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.levels.get(index).copied()
    }

    pub fn g_min(&self) -> f64 {
        self.levels[0]
    }

    pub fn g_max(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }
}

/// One node configuration: the level index of every device plus the
/// resulting node conductance.
///
/// Canonical form lists indices in non-increasing order, so `(g_l, g_h)` and
/// `(g_h, g_l)` are the same entry.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeLevelMultiset {
    pub assignment: Vec<usize>,
    pub conductance: f64,
}

/// Every node configuration for one `(levels, m)` pair, sorted by conductance.
#[derive(Debug, Clone)]
pub struct LevelCatalog {
    pub entries: Vec<NodeLevelMultiset>,
    pub combinatorial_count: u64,
    pub effective_count: usize,
    pub epsilon: f64,
}

impl LevelCatalog {
    /// Builds a catalog from unsorted entries.
    pub(crate) fn from_entries(mut entries: Vec<NodeLevelMultiset>, combinatorial_count: u64, epsilon: f64) -> Self {
        entries.sort_by(|a, b| {
            a.conductance
                .total_cmp(&b.conductance)
                .then_with(|| a.assignment.cmp(&b.assignment))
        });
        let effective_count = count_separated(entries.iter().map(|e| e.conductance), epsilon);
        Self {
            entries,
            combinatorial_count,
            effective_count,
            epsilon,
        }
    }

    /// Sorted conductances with near-duplicates (within `epsilon`) merged,
    /// each paired with the index of the first catalog entry realizing it.
    pub fn distinct(&self) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::with_capacity(self.effective_count);
        for (i, e) in self.entries.iter().enumerate() {
            match out.last() {
                Some(&(g, _)) if e.conductance - g <= self.epsilon => {}
                _ => out.push((e.conductance, i)),
            }
        }
        out
    }
}

/// Number of values in a sorted sequence whose gap to the previously counted
/// value exceeds `epsilon`.
pub fn count_separated(sorted: impl IntoIterator<Item = f64>, epsilon: f64) -> usize {
    let mut count = 0;
    let mut last: Option<f64> = None;
    for g in sorted {
        match last {
            Some(prev) if g - prev <= epsilon => {}
            _ => {
                count += 1;
                last = Some(g);
            }
        }
    }
    count
}

/// Number of distinct conductances of a node with `m` devices of `levels`
/// generic levels each: `C(m + L - 1, m)`.
pub fn count_unique_levels(m: u32, levels: u32) -> Result<u64> {
    if m == 0 || levels == 0 {
        return Err(Error::Domain(format!("m and L must be positive (m={m}, L={levels})")));
    }
    if m as u64 + levels as u64 > 64 {
        return Err(Error::Overflow { m, levels });
    }
    Ok(binomial(m as u64 + levels as u64 - 1, m as u64))
}

/// `C(n, k)` for `n <= 63`; every intermediate product fits in `u128`.
fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        acc = acc * (n as u128 - k as u128 + i) / i;
    }
    acc as u64
}

/// `[count_unique_levels(m, 1), ..., count_unique_levels(m, l_max)]`.
pub fn simplicial_sequence(m: u32, l_max: u32) -> Result<Vec<u64>> {
    if l_max == 0 {
        return Err(Error::Domain("L_max must be positive".into()));
    }
    (1..=l_max).map(|l| count_unique_levels(m, l)).collect()
}

/// Smallest node size whose level count reaches `required_levels`.
pub fn select_node_size(levels: u32, required_levels: u64) -> Result<u32> {
    if levels == 0 || required_levels == 0 {
        return Err(Error::Domain(format!(
            "L and required_levels must be positive (L={levels}, required={required_levels})"
        )));
    }
    if levels == 1 {
        return if required_levels == 1 {
            Ok(1)
        } else {
            Err(Error::Infeasible {
                levels,
                required: required_levels,
            })
        };
    }
    let mut m = 1;
    loop {
        match count_unique_levels(m, levels) {
            Ok(c) if c >= required_levels => return Ok(m),
            Ok(_) => m += 1,
            Err(Error::Overflow { .. }) => {
                return Err(Error::Infeasible {
                    levels,
                    required: required_levels,
                })
            }
            Err(e) => return Err(e),
        }
    }
}

/// Iterator over all size-`m` multisets drawn from `0..items`, each yielded
/// as a non-increasing index vector.
#[derive(Debug, Clone)]
pub struct Multisets {
    items: usize,
    // Non-decreasing working tuple; reversed on output.
    current: Option<Vec<usize>>,
}

impl Multisets {
    pub fn new(items: usize, m: usize) -> Self {
        let current = if items == 0 && m > 0 { None } else { Some(vec![0; m]) };
        Self { items, current }
    }
}

impl Iterator for Multisets {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.current.as_mut()?;
        let out: Vec<usize> = cur.iter().rev().copied().collect();
        match cur.iter().rposition(|&b| b + 1 < self.items) {
            Some(i) => {
                let v = cur[i] + 1;
                cur[i..].iter_mut().for_each(|b| *b = v);
            }
            None => self.current = None,
        }
        Some(out)
    }
}

/// Enumerates every parallel-node configuration of `m` devices over `levels`.
pub fn enumerate_node_levels(levels: &LevelSet, m: u32, epsilon: f64) -> Result<LevelCatalog> {
    enumerate_node_levels_capped(levels, m, epsilon, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_node_levels_capped(levels: &LevelSet, m: u32, epsilon: f64, cap: u64) -> Result<LevelCatalog> {
    if !(epsilon >= 0.0) {
        return Err(Error::Domain(format!("epsilon must be >= 0 (got {epsilon})")));
    }
    let count = count_unique_levels(m, levels.len() as u32)?;
    if count > cap {
        return Err(Error::EnumerationTooLarge { count, cap });
    }
    let g = levels.as_slice();
    let entries = Multisets::new(g.len(), m as usize)
        .map(|assignment| {
            let conductance = assignment.iter().map(|&i| g[i]).sum();
            NodeLevelMultiset {
                assignment,
                conductance,
            }
        })
        .collect();
    Ok(LevelCatalog::from_entries(entries, count, epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn us(v: &[f64]) -> LevelSet {
        LevelSet::new(v.iter().map(|x| x * 1e-6).collect()).unwrap()
    }

    #[test]
    fn counts_match_worked_values() {
        assert_eq!(count_unique_levels(1, 5).unwrap(), 5);
        assert_eq!(count_unique_levels(8, 8).unwrap(), 6435);
        assert_eq!(count_unique_levels(3, 3).unwrap(), 10);
        assert_eq!(count_unique_levels(1, 1).unwrap(), 1);
    }

    #[test]
    fn count_rejects_zero_and_overflow() {
        assert!(matches!(count_unique_levels(0, 3), Err(Error::Domain(_))));
        assert!(matches!(count_unique_levels(3, 0), Err(Error::Domain(_))));
        assert!(matches!(count_unique_levels(40, 30), Err(Error::Overflow { .. })));
        // Largest admissible argument pair still computes exactly.
        assert_eq!(count_unique_levels(32, 32).unwrap(), 916_312_070_471_295_267);
    }

    #[test]
    fn sequences() {
        assert_eq!(simplicial_sequence(2, 6).unwrap(), vec![1, 3, 6, 10, 15, 21]);
        assert_eq!(simplicial_sequence(5, 5).unwrap(), vec![1, 6, 21, 56, 126]);
        assert_eq!(simplicial_sequence(1, 3).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn node_size_selection() {
        assert_eq!(select_node_size(4, 10).unwrap(), 2);
        assert_eq!(select_node_size(4, 100).unwrap(), 7);
        assert_eq!(select_node_size(2, 1).unwrap(), 1);
        assert_eq!(select_node_size(1, 1).unwrap(), 1);
        assert!(matches!(select_node_size(1, 2), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn multisets_are_canonical_and_complete() {
        let all: Vec<_> = Multisets::new(3, 2).collect();
        assert_eq!(all.len(), 6);
        for a in &all {
            assert!(a.windows(2).all(|w| w[0] >= w[1]), "{a:?}");
        }
        let mut dedup = all.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 6);
        assert_eq!(Multisets::new(4, 0).count(), 1);
        assert_eq!(Multisets::new(1, 5).count(), 1);
    }

    #[test]
    fn binary_pair_catalog() {
        let cat = enumerate_node_levels(&us(&[10.0, 1000.0]), 2, DEFAULT_EPSILON).unwrap();
        let sums: Vec<f64> = cat.entries.iter().map(|e| e.conductance * 1e6).collect();
        assert_eq!(cat.combinatorial_count, 3);
        assert_eq!(cat.effective_count, 3);
        approx::assert_relative_eq!(sums[0], 20.0, max_relative = 1e-12);
        approx::assert_relative_eq!(sums[1], 1010.0, max_relative = 1e-12);
        approx::assert_relative_eq!(sums[2], 2000.0, max_relative = 1e-12);
    }

    #[test]
    fn arithmetic_levels_collide() {
        let levels = LevelSet::new(vec![1.0, 2.0, 3.0]).unwrap();
        let cat = enumerate_node_levels(&levels, 2, 0.0).unwrap();
        assert_eq!(cat.combinatorial_count, 6);
        assert_eq!(cat.effective_count, 5);
        assert_eq!(cat.distinct().len(), 5);
    }

    #[test]
    fn cap_is_enforced() {
        let levels = LevelSet::new((1..=12).map(f64::from).collect()).unwrap();
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
    fn level_set_validation() {
        assert!(LevelSet::new(vec![]).is_err());
        assert!(LevelSet::new(vec![1.0, 1.0]).is_err());
        assert!(LevelSet::new(vec![0.0, 1.0]).is_err());
        assert!(LevelSet::new(vec![2.0, 1.0]).is_err());
        assert!(LevelSet::new(vec![1.0, f64::NAN]).is_err());
    }
}
