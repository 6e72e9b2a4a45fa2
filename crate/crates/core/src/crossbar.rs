//! Analog vector-matrix multiplication over multi-device nodes.

use serde::{Deserialize, Serialize};

use crate::device::{perturb_level, AgingState, DeviceSpec};
use crate::error::{Error, Result};
use crate::levels::LevelSet;
use crate::rng::{standard_normal, StreamKey, StreamKind};

/// Ideal currents below this magnitude (amps) make the relative error undefined.
pub const RCE_FLOOR_AMPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Parallel,
    Series,
    /// `m` branches, each a series pair of one layer-1 and one layer-2 device.
    ThreeDTwoLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub m: u32,
    pub device: DeviceSpec,
    pub topology: Topology,
}

impl NodeSpec {
    pub fn new(m: u32, device: DeviceSpec, topology: Topology) -> Result<Self> {
        if m == 0 {
            return Err(Error::Domain("node needs at least one memristor".into()));
        }
        device.validate()?;
        Ok(Self { m, device, topology })
    }

    /// Physical devices per node (`2m` for the two-layer topology).
    pub fn devices_per_node(&self) -> usize {
        match self.topology {
            Topology::ThreeDTwoLayer => 2 * self.m as usize,
            _ => self.m as usize,
        }
    }

    pub fn levels(&self) -> Result<LevelSet> {
        self.device.derive_levels()
    }
}

/// Equivalent conductance of one node.
///
/// For the two-layer topology `g` holds the `m` layer-1 devices followed by
/// the `m` layer-2 devices; branch `i` pairs `g[i]` with `g[m + i]`. When
/// `wire` is given, each device conductance is first put in series with its
/// wire resistance.
pub fn effective_node_conductance(g: &[f64], topology: Topology, wire: Option<&[f64]>) -> Result<f64> {
    if g.is_empty() {
        return Err(Error::Domain("empty node assignment".into()));
    }
    if let Some(w) = wire {
        if w.len() != g.len() {
            return Err(Error::DimensionMismatch {
                expected: g.len(),
                got: w.len(),
            });
        }
    }
    let dev = |i: usize| match wire {
        Some(w) => 1.0 / (1.0 / g[i] + w[i]),
        None => g[i],
    };
    match topology {
        Topology::Parallel => Ok((0..g.len()).map(dev).sum()),
        Topology::Series => {
            if g.contains(&0.0) {
                return Err(Error::DegeneratePath);
            }
            Ok(1.0 / (0..g.len()).map(|i| 1.0 / dev(i)).sum::<f64>())
        }
        Topology::ThreeDTwoLayer => {
            if !g.len().is_multiple_of(2) {
                return Err(Error::Shape(format!(
                    "two-layer node needs an even device count, got {}",
                    g.len()
                )));
            }
            if g.contains(&0.0) {
                return Err(Error::DegeneratePath);
            }
            let m = g.len() / 2;
            Ok((0..m).map(|i| 1.0 / (1.0 / dev(i) + 1.0 / dev(m + i))).sum())
        }
    }
}

/// How the per-column read noise relates to the reference current.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadNoiseReference {
    /// The sensing chain noise is common to the physical and the reference
    /// readout, so only the conductance mismatch shows up in the error.
    #[default]
    Shared,
    /// Noise is added to the physical readout only.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonIdealityConfig {
    pub read_noise_frac: f64,
    pub read_noise_reference: ReadNoiseReference,
    pub conductance_var_frac: f64,
    pub wire_enabled: bool,
    pub wire_res_mean: f64,
    pub wire_res_std: f64,
    pub boundary_drift_frac: f64,
    pub read_instability_frac: f64,
    pub input_noise_variance: f64,
    pub aging: Option<AgingState>,
    pub master_seed: u64,
}

impl Default for NonIdealityConfig {
    fn default() -> Self {
        Self {
            read_noise_frac: 0.10,
            read_noise_reference: ReadNoiseReference::Shared,
            conductance_var_frac: 0.0,
            wire_enabled: false,
            wire_res_mean: 2.5,
            wire_res_std: 0.25,
            boundary_drift_frac: 0.0,
            read_instability_frac: 0.0,
            input_noise_variance: 0.0,
            aging: None,
            master_seed: 0,
        }
    }
}

impl NonIdealityConfig {
    /// Every source switched off.
    pub fn ideal() -> Self {
        Self {
            read_noise_frac: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fracs = [
            ("read_noise_frac", self.read_noise_frac),
            ("conductance_var_frac", self.conductance_var_frac),
            ("boundary_drift_frac", self.boundary_drift_frac),
            ("read_instability_frac", self.read_instability_frac),
            ("input_noise_variance", self.input_noise_variance),
            ("wire_res_std", self.wire_res_std),
        ];
        for (name, v) in fracs {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0 (got {v})")));
            }
        }
        if self.wire_enabled && !(self.wire_res_mean > 0.0) {
            return Err(Error::Config("wire_res_mean must be > 0 when wire_enabled".into()));
        }
        if let Some(a) = &self.aging {
            AgingState::new(a.aging_type, a.ratio).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Whether any source draws random numbers.
    pub fn is_stochastic(&self) -> bool {
        self.read_noise_frac > 0.0
            || self.conductance_var_frac > 0.0
            || self.wire_enabled
            || self.boundary_drift_frac > 0.0
            || self.read_instability_frac > 0.0
            || self.input_noise_variance > 0.0
    }

    fn key(&self, kind: StreamKind, trial: u64, tag: u64) -> StreamKey {
        StreamKey::root(self.master_seed).kind(kind).indices(&[trial, tag])
    }
}

/// Dense row-major conductance matrix, used for infinite-resolution references.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceMatrix {
    pub rows: usize,
    pub cols: usize,
    pub g: Vec<f64>,
}

impl ConductanceMatrix {
    pub fn new(rows: usize, cols: usize, g: Vec<f64>) -> Result<Self> {
        if g.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: g.len(),
            });
        }
        Ok(Self { rows, cols, g })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.cols + j]
    }

    pub fn vmm(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.rows, v.len())?;
        Ok(matvec(&self.g, self.cols, v))
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn matvec(g: &[f64], cols: usize, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (row, &vi) in g.chunks_exact(cols).zip(v) {
        for (o, &gij) in out.iter_mut().zip(row) {
            *o += vi * gij;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Level index per device.
    pub assignment: Vec<usize>,
    /// Conductance per device after variability, in siemens.
    pub realized: Vec<f64>,
}

/// An `n x k` grid of programmed nodes. Node specs are given per row so
/// that row groups can use different node sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgrammedCrossbar {
    rows: usize,
    cols: usize,
    row_specs: Vec<NodeSpec>,
    row_levels: Vec<LevelSet>,
    cells: Vec<Cell>,
}

impl ProgrammedCrossbar {
    /// Programs every cell to its nominal level values.
    pub fn from_assignments(row_specs: Vec<NodeSpec>, cols: usize, assignments: Vec<Vec<usize>>) -> Result<Self> {
        let rows = row_specs.len();
        check_len(rows * cols, assignments.len())?;
        let row_levels = row_specs.iter().map(NodeSpec::levels).collect::<Result<Vec<_>>>()?;
        let mut cells = Vec::with_capacity(assignments.len());
        for (idx, assignment) in assignments.into_iter().enumerate() {
            let i = idx / cols;
            let spec = &row_specs[i];
            check_len(spec.devices_per_node(), assignment.len())?;
            let levels = &row_levels[i];
            let realized = assignment
                .iter()
                .map(|&a| {
                    levels
                        .get(a)
                        .ok_or_else(|| Error::Domain(format!("level index {a} out of range for L = {}", levels.len())))
                })
                .collect::<Result<Vec<_>>>()?;
            cells.push(Cell { assignment, realized });
        }
        Ok(Self {
            rows,
            cols,
            row_specs,
            row_levels,
            cells,
        })
    }

    /// Uniform node spec for all rows.
    pub fn uniform(spec: NodeSpec, rows: usize, cols: usize, assignments: Vec<Vec<usize>>) -> Result<Self> {
        Self::from_assignments(vec![spec; rows], cols, assignments)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row_spec(&self, i: usize) -> &NodeSpec {
        &self.row_specs[i]
    }

    pub fn cell(&self, i: usize, j: usize) -> &Cell {
        &self.cells[i * self.cols + j]
    }

    /// Node conductance with the nominal level values.
    pub fn nominal_conductance(&self, i: usize, j: usize) -> f64 {
        let levels = &self.row_levels[i];
        let g: Vec<f64> = self
            .cell(i, j)
            .assignment
            .iter()
            .map(|&a| levels.as_slice()[a])
            .collect();
        effective_node_conductance(&g, self.row_specs[i].topology, None).expect("validated at construction")
    }

    /// Node conductance with the realized device values.
    pub fn realized_conductance(&self, i: usize, j: usize) -> f64 {
        effective_node_conductance(&self.cell(i, j).realized, self.row_specs[i].topology, None)
            .expect("validated at construction")
    }

    pub fn nominal_matrix(&self) -> ConductanceMatrix {
        let g = (0..self.rows)
            .flat_map(|i| (0..self.cols).map(move |j| (i, j)))
            .map(|(i, j)| self.nominal_conductance(i, j))
            .collect();
        ConductanceMatrix {
            rows: self.rows,
            cols: self.cols,
            g,
        }
    }

    pub fn realized_matrix(&self) -> ConductanceMatrix {
        let g = (0..self.rows)
            .flat_map(|i| (0..self.cols).map(move |j| (i, j)))
            .map(|(i, j)| self.realized_conductance(i, j))
            .collect();
        ConductanceMatrix {
            rows: self.rows,
            cols: self.cols,
            g,
        }
    }

    /// Noise-free currents through the realized conductances.
    pub fn ideal_vmm(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.rows, v.len())?;
        Ok(matvec(&self.realized_matrix().g, self.cols, v))
    }

    /// Copy with boundary drift and programming variability applied to
    /// every device. Each device draws from its own substream.
    pub fn with_device_variation(&self, cfg: &NonIdealityConfig, trial: u64, tag: u64) -> Self {
        let mut out = self.clone();
        if cfg.boundary_drift_frac <= 0.0 && cfg.conductance_var_frac <= 0.0 {
            return out;
        }
        let drift_key = cfg.key(StreamKind::BoundaryDrift, trial, tag);
        let var_key = cfg.key(StreamKind::Variability, trial, tag);
        for i in 0..self.rows {
            let device = &self.row_specs[i].device;
            for j in 0..self.cols {
                let cell = &mut out.cells[i * self.cols + j];
                let path = [i as u64, j as u64];
                if cfg.boundary_drift_frac > 0.0 {
                    let mut rng = drift_key.indices(&path).rng();
                    for (g, &a) in cell.realized.iter_mut().zip(&cell.assignment) {
                        let s = cfg.boundary_drift_frac;
                        let r_on = (device.r_on * (1.0 + s * standard_normal(&mut rng))).max(1e-3 * device.r_on);
                        let r_off = (device.r_off * (1.0 + s * standard_normal(&mut rng))).max(r_on * 1.0001);
                        *g = device.level_in_window(a, r_on, r_off);
                    }
                }
                if cfg.conductance_var_frac > 0.0 {
                    let mut rng = var_key.indices(&path).rng();
                    for g in cell.realized.iter_mut() {
                        *g = perturb_level(*g, cfg.conductance_var_frac, &mut rng);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadResult {
    pub currents: Vec<f64>,
    pub ideal_currents: Vec<f64>,
    /// `None` where the ideal current is below [`RCE_FLOOR_AMPS`].
    pub rce_percent: Vec<Option<f64>>,
}

impl ReadResult {
    pub fn new(currents: Vec<f64>, ideal_currents: Vec<f64>) -> Self {
        let rce_percent = currents.iter().zip(&ideal_currents).map(|(&r, &i)| rce(i, r)).collect();
        Self {
            currents,
            ideal_currents,
            rce_percent,
        }
    }
}

/// Relative current error in percent.
pub fn rce(ideal: f64, real: f64) -> Option<f64> {
    (ideal.abs() >= RCE_FLOOR_AMPS).then(|| 100.0 * (ideal - real).abs() / ideal.abs())
}

/// A crossbar prepared for repeated reads within one trial: device
/// variation and wire resistance are drawn once, per-read noise is drawn
/// per `read_index`.
#[derive(Debug, Clone)]
pub struct ReadContext<'a> {
    cfg: &'a NonIdealityConfig,
    trial: u64,
    tag: u64,
    rows: usize,
    cols: usize,
    physical: Vec<f64>,
    reference: Vec<f64>,
}

impl<'a> ReadContext<'a> {
    pub fn new(
        crossbar: &ProgrammedCrossbar,
        reference: &ConductanceMatrix,
        cfg: &'a NonIdealityConfig,
        trial: u64,
        tag: u64,
    ) -> Result<Self> {
        if reference.rows != crossbar.rows || reference.cols != crossbar.cols {
            return Err(Error::Shape(format!(
                "reference is {}x{}, crossbar is {}x{}",
                reference.rows, reference.cols, crossbar.rows, crossbar.cols
            )));
        }
        let varied = crossbar.with_device_variation(cfg, trial, tag);
        let physical = if cfg.wire_enabled {
            let key = cfg.key(StreamKind::Wire, trial, tag);
            let mut g = Vec::with_capacity(crossbar.rows * crossbar.cols);
            for i in 0..crossbar.rows {
                for j in 0..crossbar.cols {
                    let cell = varied.cell(i, j);
                    let mut rng = key.indices(&[i as u64, j as u64]).rng();
                    let wire: Vec<f64> = cell
                        .realized
                        .iter()
                        .map(|_| (cfg.wire_res_mean + cfg.wire_res_std * standard_normal(&mut rng)).max(0.0))
                        .collect();
                    g.push(effective_node_conductance(
                        &cell.realized,
                        varied.row_specs[i].topology,
                        Some(&wire),
                    )?);
                }
            }
            g
        } else {
            varied.realized_matrix().g
        };
        Ok(Self {
            cfg,
            trial,
            tag,
            rows: crossbar.rows,
            cols: crossbar.cols,
            physical,
            reference: reference.g.clone(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Reads one input vector. Sources are applied in signal-path order:
    /// input noise, array currents, read instability, read noise.
    pub fn read(&self, v: &[f64], read_index: u64) -> Result<ReadResult> {
        check_len(self.rows, v.len())?;
        let cfg = self.cfg;
        let path = [read_index];
        let noisy_v;
        let v = if cfg.input_noise_variance > 0.0 {
            let sd = cfg.input_noise_variance.sqrt();
            let mut rng = cfg
                .key(StreamKind::InputNoise, self.trial, self.tag)
                .indices(&path)
                .rng();
            // Noise never flips the drive polarity of a row.
            noisy_v = v
                .iter()
                .map(|&x| {
                    let y = x + sd * standard_normal(&mut rng);
                    if x >= 0.0 {
                        y.max(0.0)
                    } else {
                        y.min(0.0)
                    }
                })
                .collect::<Vec<_>>();
            &noisy_v[..]
        } else {
            v
        };
        let mut currents = matvec(&self.physical, self.cols, v);
        let mut ideal = matvec(&self.reference, self.cols, v);
        if cfg.read_instability_frac > 0.0 {
            let mut rng = cfg
                .key(StreamKind::ReadInstability, self.trial, self.tag)
                .indices(&path)
                .rng();
            for c in currents.iter_mut() {
                *c *= 1.0 + cfg.read_instability_frac * standard_normal(&mut rng);
            }
        }
        if cfg.read_noise_frac > 0.0 {
            let mut rng = cfg
                .key(StreamKind::ReadNoise, self.trial, self.tag)
                .indices(&path)
                .rng();
            for (c, r) in currents.iter_mut().zip(ideal.iter_mut()) {
                let n = cfg.read_noise_frac * r.abs() * standard_normal(&mut rng);
                *c += n;
                if cfg.read_noise_reference == ReadNoiseReference::Shared {
                    *r += n;
                }
            }
        }
        Ok(ReadResult::new(currents, ideal))
    }
}

/// One read of `crossbar` against `reference` (use
/// [`ProgrammedCrossbar::nominal_matrix`] when no separate reference exists).
pub fn noisy_read(
    crossbar: &ProgrammedCrossbar,
    reference: &ConductanceMatrix,
    v: &[f64],
    cfg: &NonIdealityConfig,
    trial: u64,
) -> Result<ReadResult> {
    ReadContext::new(crossbar, reference, cfg, trial, 0)?.read(v, 0)
}

/// Splits a tall logical crossbar into tiles and sums their column currents.
pub fn tile_and_sum(
    tiles: &[(&ProgrammedCrossbar, &ConductanceMatrix)],
    v_segments: &[&[f64]],
    cfg: &NonIdealityConfig,
    trial: u64,
) -> Result<ReadResult> {
    if tiles.is_empty() {
        return Err(Error::Shape("no tiles".into()));
    }
    check_len(tiles.len(), v_segments.len())?;
    let k = tiles[0].0.cols();
    if let Some((t, _)) = tiles.iter().find(|(t, _)| t.cols() != k) {
        return Err(Error::Shape(format!(
            "tiles disagree on column count ({} vs {k})",
            t.cols()
        )));
    }
    let mut currents = vec![0.0; k];
    let mut ideal = vec![0.0; k];
    for (tag, ((tile, reference), v)) in tiles.iter().zip(v_segments).enumerate() {
        let r = ReadContext::new(tile, reference, cfg, trial, tag as u64)?.read(v, 0)?;
        for j in 0..k {
            currents[j] += r.currents[j];
            ideal[j] += r.ideal_currents[j];
        }
    }
    Ok(ReadResult::new(currents, ideal))
}

fn check_pairs(pairs: &[(usize, usize)], cols: usize) -> Result<()> {
    let mut seen = vec![false; cols];
    for &(p, n) in pairs {
        for c in [p, n] {
            if c >= cols {
                return Err(Error::Shape(format!("column {c} out of range ({cols} columns)")));
            }
            if seen[c] {
                return Err(Error::OverlappingPairs(c));
            }
            seen[c] = true;
        }
    }
    Ok(())
}

/// Differential currents `I[pos] - I[neg]` per column pair.
pub fn signed_read(pairs: &[(usize, usize)], read: &ReadResult) -> Result<Vec<f64>> {
    check_pairs(pairs, read.currents.len())?;
    Ok(pairs
        .iter()
        .map(|&(p, n)| read.currents[p] - read.currents[n])
        .collect())
}

/// Same as [`signed_read`] on the reference currents.
pub fn signed_ideal(pairs: &[(usize, usize)], read: &ReadResult) -> Result<Vec<f64>> {
    check_pairs(pairs, read.ideal_currents.len())?;
    Ok(pairs
        .iter()
        .map(|&(p, n)| read.ideal_currents[p] - read.ideal_currents[n])
        .collect())
}
