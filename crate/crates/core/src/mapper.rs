//! Weight to node-conductance lookup.
//!
//! A [`QuantizerTable`] lists every conductance a node can realize, keeps an
//! affine map between a weight interval and the node's conductance range, and
//! answers nearest-neighbour queries. Signed matrices use a differential pair
//! of physical columns per logical column.

use std::fmt::Write as _;

use crate::crossbar::{ConductanceMatrix, NodeSpec, ProgrammedCrossbar, Topology};
use crate::device::DeviceSpec;
use crate::error::{Error, Result};
use crate::levels::{
    count_unique_levels, LevelCatalog, LevelSet, Multisets, NodeLevelMultiset, DEFAULT_ENUMERATION_CAP,
};

#[derive(Debug, Clone)]
pub struct QuantizerTable {
    pub node: NodeSpec,
    pub levels: LevelSet,
    pub catalog: LevelCatalog,
    pub w_min: f64,
    pub w_max: f64,
    pub g_node_min: f64,
    pub g_node_max: f64,
    // Distinct conductances and the first catalog entry realizing each.
    points: Vec<f64>,
    point_entry: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantized {
    pub conductance: f64,
    /// Index into `catalog.entries`.
    pub entry: usize,
    pub w_realized: f64,
    /// The weight was outside the table's range and was clamped.
    pub clamped: bool,
}

/// Every configuration of a node, for any topology.
pub fn node_catalog(node: &NodeSpec, levels: &LevelSet, epsilon: f64, cap: u64) -> Result<LevelCatalog> {
    if !(epsilon >= 0.0) {
        return Err(Error::Domain(format!("epsilon must be >= 0 (got {epsilon})")));
    }
    let g = levels.as_slice();
    let l = g.len();
    let m = node.m as usize;
    // Unit = what one branch can hold: a single level, or an unordered
    // (layer-1, layer-2) level pair for two-layer nodes.
    let units: Vec<Vec<usize>> = match node.topology {
        Topology::ThreeDTwoLayer => (0..l)
            .rev()
            .flat_map(|a| (0..=a).rev().map(move |b| vec![a, b]))
            .collect(),
        _ => (0..l).rev().map(|a| vec![a]).collect(),
    };
    let count = count_unique_levels(node.m, units.len() as u32)?;
    if count > cap {
        return Err(Error::EnumerationTooLarge { count, cap });
    }
    // `units` is listed in descending order, so ascending unit indices from
    // `Multisets` map to descending assignments.
    let entries = Multisets::new(units.len(), m)
        .map(|combo| {
            let chosen: Vec<&Vec<usize>> = combo.iter().rev().map(|&u| &units[u]).collect();
            let assignment: Vec<usize> = match node.topology {
                Topology::ThreeDTwoLayer => chosen.iter().map(|u| u[0]).chain(chosen.iter().map(|u| u[1])).collect(),
                _ => chosen.iter().map(|u| u[0]).collect(),
            };
            let conductance = match node.topology {
                Topology::Parallel => assignment.iter().map(|&i| g[i]).sum(),
                Topology::Series => 1.0 / assignment.iter().map(|&i| 1.0 / g[i]).sum::<f64>(),
                Topology::ThreeDTwoLayer => chosen.iter().map(|u| 1.0 / (1.0 / g[u[0]] + 1.0 / g[u[1]])).sum(),
            };
            NodeLevelMultiset {
                assignment,
                conductance,
            }
        })
        .collect();
    Ok(LevelCatalog::from_entries(entries, count, epsilon))
}

impl QuantizerTable {
    pub fn new(node: &NodeSpec, w_min: f64, w_max: f64, epsilon: f64) -> Result<Self> {
        Self::with_cap(node, w_min, w_max, epsilon, DEFAULT_ENUMERATION_CAP)
    }

    pub fn with_cap(node: &NodeSpec, w_min: f64, w_max: f64, epsilon: f64, cap: u64) -> Result<Self> {
        if !(w_min < w_max && w_min.is_finite() && w_max.is_finite()) {
            return Err(Error::Domain(format!("require w_min < w_max (got {w_min}, {w_max})")));
        }
        let levels = node.levels()?;
        let catalog = node_catalog(node, &levels, epsilon, cap)?;
        let g_node_min = catalog.entries.first().map(|e| e.conductance).unwrap_or(0.0);
        let g_node_max = catalog.entries.last().map(|e| e.conductance).unwrap_or(0.0);
        if !(g_node_max > g_node_min) {
            return Err(Error::DegenerateWindow(g_node_min));
        }
        let (points, point_entry) = catalog.distinct().into_iter().unzip();
        Ok(Self {
            node: node.clone(),
            levels,
            catalog,
            w_min,
            w_max,
            g_node_min,
            g_node_max,
            points,
            point_entry,
        })
    }

    /// Affine weight to conductance map.
    pub fn map(&self, w: f64) -> f64 {
        self.g_node_min + (w - self.w_min) / (self.w_max - self.w_min) * (self.g_node_max - self.g_node_min)
    }

    pub fn map_inv(&self, g: f64) -> f64 {
        self.w_min + (g - self.g_node_min) / (self.g_node_max - self.g_node_min) * (self.w_max - self.w_min)
    }

    /// Largest magnitude representable by one column of a differential pair.
    pub fn magnitude_range(&self) -> f64 {
        self.w_min.abs().max(self.w_max.abs())
    }

    /// Conductance for `|w|` in the signed mapping.
    pub fn magnitude_map(&self, magnitude: f64) -> f64 {
        self.g_node_min + magnitude / self.magnitude_range() * (self.g_node_max - self.g_node_min)
    }

    /// Siemens of differential conductance per unit weight in the signed mapping.
    pub fn signed_scale(&self) -> f64 {
        (self.g_node_max - self.g_node_min) / self.magnitude_range()
    }

    /// Distinct realizable conductances, ascending.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Index into [`Self::points`] nearest to `g`; ties go to the lower conductance.
    pub fn nearest_point(&self, g: f64) -> usize {
        let p = &self.points;
        let hi = p.partition_point(|&x| x < g);
        if hi == 0 {
            return 0;
        }
        if hi == p.len() {
            return p.len() - 1;
        }
        if g - p[hi - 1] <= p[hi] - g {
            hi - 1
        } else {
            hi
        }
    }

    /// Nearest catalog entry to a target conductance.
    pub fn quantize_conductance(&self, g: f64) -> (f64, usize) {
        let k = self.nearest_point(g);
        (self.points[k], self.point_entry[k])
    }

    pub fn entry(&self, index: usize) -> &NodeLevelMultiset {
        &self.catalog.entries[index]
    }

    /// Largest gap between adjacent realizable conductances.
    pub fn max_gap(&self) -> f64 {
        self.points.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Lookup table rows: device conductances (S) per entry, node
    /// conductance, realized weight.
    pub fn rows(&self) -> Vec<(Vec<f64>, f64, f64)> {
        let g = self.levels.as_slice();
        self.catalog
            .entries
            .iter()
            .map(|e| {
                (
                    e.assignment.iter().map(|&i| g[i]).collect(),
                    e.conductance,
                    self.map_inv(e.conductance),
                )
            })
            .collect()
    }

    /// Lookup table as CSV with conductances in microsiemens.
    pub fn mapping_csv(&self) -> String {
        let d = self.node.devices_per_node();
        let mut out = String::new();
        let header: Vec<String> = (1..=d)
            .map(|i| format!("g_{i}"))
            .chain(["g_n".into(), "w_realized".into()])
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for (devices, gn, w) in self.rows() {
            let mut fields: Vec<String> = devices.iter().map(|g| fmt_trimmed(g * 1e6)).collect();
            fields.push(fmt_trimmed(gn * 1e6));
            fields.push(fmt_trimmed(w));
            let _ = writeln!(out, "{}", fields.join(","));
        }
        out
    }
}

/// Six decimals with trailing zeros removed.
pub(crate) fn fmt_trimmed(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Lookup table for a node of `m` devices with the given explicit levels.
pub fn build_quantizer(
    levels: &LevelSet,
    m: u32,
    topology: Topology,
    w_min: f64,
    w_max: f64,
    epsilon: f64,
) -> Result<QuantizerTable> {
    let node = NodeSpec::new(m, DeviceSpec::explicit(levels.as_slice().to_vec())?, topology)?;
    QuantizerTable::new(&node, w_min, w_max, epsilon)
}

/// Nearest realizable weight; out-of-range weights clamp to the endpoints.
pub fn quantize_weight(q: &QuantizerTable, w: f64) -> Quantized {
    let clamped = !(q.w_min..=q.w_max).contains(&w);
    let wc = w.clamp(q.w_min, q.w_max);
    let (conductance, entry) = q.quantize_conductance(q.map(wc));
    Quantized {
        conductance,
        entry,
        w_realized: q.map_inv(conductance),
        clamped,
    }
}

#[derive(Debug, Clone)]
pub struct MappedMatrix {
    pub crossbar: ProgrammedCrossbar,
    /// Unquantized conductances on the same physical layout.
    pub reference: ConductanceMatrix,
    /// `(positive, negative)` physical columns per logical column; empty when unsigned.
    pub pairs: Vec<(usize, usize)>,
    pub signed: bool,
    /// Weights outside the table's range.
    pub clamped: usize,
}

/// Programs an `rows x cols` row-major weight matrix onto a crossbar.
///
/// Unsigned: one node per weight through the affine map. Signed: logical
/// column `j` uses physical columns `2j` (positive) and `2j + 1`
/// (negative); the active column holds `|w|` through
/// [`QuantizerTable::magnitude_map`] and the inactive one sits at the
/// lowest node conductance.
pub fn map_matrix(weights: &[f64], rows: usize, cols: usize, q: &QuantizerTable, signed: bool) -> Result<MappedMatrix> {
    if weights.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            expected: rows * cols,
            got: weights.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
        return Err(Error::Domain(format!("non-finite weight {w}")));
    }
    let floor = q.quantize_conductance(q.g_node_min).1;
    let mut clamped = 0;
    let (phys_cols, assignments, reference) = if signed {
        let range = q.magnitude_range();
        let mut assignments = Vec::with_capacity(rows * cols * 2);
        let mut reference = Vec::with_capacity(rows * cols * 2);
        for &w in weights {
            if w.abs() > range {
                clamped += 1;
            }
            let g_ref = q.magnitude_map(w.abs().min(range));
            let active = q.quantize_conductance(g_ref).1;
            let (pos, neg, rp, rn) = if w > 0.0 {
                (active, floor, g_ref, q.g_node_min)
            } else if w < 0.0 {
                (floor, active, q.g_node_min, g_ref)
            } else {
                (floor, floor, q.g_node_min, q.g_node_min)
            };
            assignments.push(q.entry(pos).assignment.clone());
            assignments.push(q.entry(neg).assignment.clone());
            reference.push(rp);
            reference.push(rn);
        }
        (2 * cols, assignments, reference)
    } else {
        let mut assignments = Vec::with_capacity(rows * cols);
        let mut reference = Vec::with_capacity(rows * cols);
        for &w in weights {
            let qw = quantize_weight(q, w);
            clamped += qw.clamped as usize;
            assignments.push(q.entry(qw.entry).assignment.clone());
            reference.push(q.map(w.clamp(q.w_min, q.w_max)));
        }
        (cols, assignments, reference)
    };
    let crossbar = ProgrammedCrossbar::uniform(q.node.clone(), rows, phys_cols, assignments)?;
    let reference = ConductanceMatrix::new(rows, phys_cols, reference)?;
    let pairs = if signed {
        (0..cols).map(|j| (2 * j, 2 * j + 1)).collect()
    } else {
        Vec::new()
    };
    Ok(MappedMatrix {
        crossbar,
        reference,
        pairs,
        signed,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::LevelPlacement;
    use approx::assert_relative_eq;

    fn four_level_table() -> QuantizerTable {
        let levels = LevelSet::new(vec![10e-6, 15e-6, 29e-6, 1000e-6]).unwrap();
        build_quantizer(&levels, 3, Topology::Parallel, -1.0, 1.0, 1e-9).unwrap()
    }

    #[test]
    fn four_level_extremes_and_lookup() {
        let q = four_level_table();
        assert_eq!(q.catalog.entries.len(), 20);
        assert_relative_eq!(q.g_node_min, 30e-6, max_relative = 1e-12);
        assert_relative_eq!(q.g_node_max, 3000e-6, max_relative = 1e-12);
        let (g, e) = q.quantize_conductance(40e-6);
        assert_relative_eq!(g, 40e-6, max_relative = 1e-12);
        assert_eq!(q.entry(e).assignment, vec![1, 1, 0]);
        let (g, _) = q.quantize_conductance(41e-6);
        assert_relative_eq!(g, 40e-6, max_relative = 1e-12);
    }

    #[test]
    fn weight_endpoints_and_idempotence() {
        let q = four_level_table();
        let lo = quantize_weight(&q, -1.0);
        assert_eq!(lo.conductance, q.g_node_min);
        assert!(!lo.clamped);
        let w40 = q.map_inv(40e-6);
        let a = quantize_weight(&q, w40);
        assert_relative_eq!(a.conductance, 40e-6, max_relative = 1e-12);
        let b = quantize_weight(&q, a.w_realized);
        assert_eq!(a.entry, b.entry);
        assert!(quantize_weight(&q, 7.0).clamped);
        assert_eq!(quantize_weight(&q, 7.0).conductance, q.g_node_max);
    }

    #[test]
    fn ties_go_to_lower_conductance() {
        let levels = LevelSet::new(vec![1e-6, 3e-6]).unwrap();
        let q = build_quantizer(&levels, 1, Topology::Parallel, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(q.quantize_conductance(2e-6).0, 1e-6);
    }

    #[test]
    fn binary_single_device_table() {
        let levels = LevelSet::new(vec![10e-6, 1000e-6]).unwrap();
        let q = build_quantizer(&levels, 1, Topology::Parallel, -1.0, 1.0, 1e-9).unwrap();
        assert_eq!(q.points(), &[10e-6, 1000e-6]);
    }

    #[test]
    fn degenerate_window_is_rejected() {
        let levels = LevelSet::new(vec![10e-6]).unwrap();
        let err = build_quantizer(&levels, 3, Topology::Parallel, -1.0, 1.0, 1e-9).unwrap_err();
        assert!(matches!(err, Error::DegenerateWindow(_)));
    }

    #[test]
    fn two_layer_catalog_uses_level_pairs() {
        let levels = LevelSet::new(vec![1e-3, 2e-3]).unwrap();
        let q = build_quantizer(&levels, 2, Topology::ThreeDTwoLayer, 0.0, 1.0, 1e-12).unwrap();
        // 3 unordered pairs per branch, 2 branches: C(4, 2) = 6 configurations.
        assert_eq!(q.catalog.entries.len(), 6);
        assert_eq!(q.catalog.combinatorial_count, 6);
        let top = q.catalog.entries.last().unwrap();
        assert_eq!(top.assignment, vec![1, 1, 1, 1]);
        assert_relative_eq!(top.conductance, 2e-3, max_relative = 1e-12);
    }

    #[test]
    fn mapping_csv_for_four_levels() {
        let csv = four_level_table().mapping_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("g_1,g_2,g_3,g_n,w_realized"));
        assert_eq!(lines.next(), Some("10,10,10,30,-1"));
        assert_eq!(lines.last(), Some("1000,1000,1000,3000,1"));
    }

    #[test]
    fn signed_zero_matrix_sits_at_floor() {
        let node = NodeSpec::new(
            2,
            DeviceSpec::new(1e3, 1e5, 3, LevelPlacement::LinearInConductance).unwrap(),
            Topology::Parallel,
        )
        .unwrap();
        let q = QuantizerTable::new(&node, -1.0, 1.0, 1e-9).unwrap();
        let mm = map_matrix(&[0.0; 6], 2, 3, &q, true).unwrap();
        assert_eq!(mm.crossbar.cols(), 6);
        for i in 0..2 {
            for j in 0..6 {
                assert_eq!(mm.crossbar.nominal_conductance(i, j), q.g_node_min);
            }
        }
    }

    #[test]
    fn unsigned_max_weight_hits_top() {
        let q = four_level_table();
        let mm = map_matrix(&[1.0], 1, 1, &q, false).unwrap();
        assert_relative_eq!(mm.crossbar.nominal_conductance(0, 0), 3000e-6, max_relative = 1e-12);
        assert!(map_matrix(&[f64::NAN], 1, 1, &q, false).is_err());
    }
}
