//! Experiment configuration, sweep runners and CSV output.
//!
//! Every RCE-style sweep shares one core: for each trial a weight matrix and
//! an input vector are drawn from streams keyed only by the trial number, so
//! different node configurations and sweep points see the same workloads.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crossbar::{NodeSpec, NonIdealityConfig, ReadContext, Topology};
use crate::device::{apply_aging, AgingState, AgingType, DeviceSpec, LevelPlacement};
use crate::error::{Error, Result};
use crate::levels::{count_unique_levels, enumerate_node_levels_capped, DEFAULT_ENUMERATION_CAP, DEFAULT_EPSILON};
use crate::mapper::{map_matrix, QuantizerTable};
use crate::net::{evaluate_grid, Dataset, EvalSettings, NetworkDef};
use crate::rng::{StreamKey, StreamKind};

pub const TOOL_VERSION: &str = concat!("memxbar ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Levels,
    RceGrid,
    RatioSweep,
    AgingSweep,
    NoiseSweep,
    WireTable,
    NnGrid,
    Mapdump,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Levels => "levels",
            ExperimentKind::RceGrid => "rce_grid",
            ExperimentKind::RatioSweep => "ratio_sweep",
            ExperimentKind::AgingSweep => "aging_sweep",
            ExperimentKind::NoiseSweep => "noise_sweep",
            ExperimentKind::WireTable => "wire_table",
            ExperimentKind::NnGrid => "nn_grid",
            ExperimentKind::Mapdump => "mapdump",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementName {
    LinearInConductance,
    LinearInResistance,
    Geometric,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossbarSection {
    pub n: usize,
    pub k: usize,
    pub signed: bool,
    pub topology: Topology,
}

impl Default for CrossbarSection {
    fn default() -> Self {
        Self {
            n: 10,
            k: 10,
            signed: true,
            topology: Topology::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSection {
    pub r_on: f64,
    pub r_off: f64,
    pub placement: PlacementName,
    /// Level values in microsiemens for `placement = "explicit"`.
    pub levels_us: Vec<f64>,
}

impl Default for DeviceSection {
    fn default() -> Self {
        Self {
            r_on: 1e3,
            r_off: 1e5,
            placement: PlacementName::Geometric,
            levels_us: Vec::new(),
        }
    }
}

impl DeviceSection {
    /// Device with `levels` levels (ignored for explicit placement).
    pub fn spec(&self, levels: u32) -> Result<DeviceSpec> {
        let placement = match self.placement {
            PlacementName::LinearInConductance => LevelPlacement::LinearInConductance,
            PlacementName::LinearInResistance => LevelPlacement::LinearInResistance,
            PlacementName::Geometric => LevelPlacement::Geometric,
            PlacementName::Explicit => {
                return DeviceSpec::explicit(self.levels_us.iter().map(|g| g * 1e-6).collect());
            }
        };
        DeviceSpec::new(self.r_on, self.r_off, levels, placement)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub m: Vec<u32>,
    #[serde(rename = "L")]
    pub levels: Vec<u32>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            m: (1..=6).collect(),
            levels: (2..=12).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsSection {
    pub w_min: f64,
    pub w_max: f64,
}

impl Default for WeightsSection {
    fn default() -> Self {
        Self {
            w_min: -1.0,
            w_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatioSection {
    pub ratios: Vec<f64>,
}

impl Default for RatioSection {
    fn default() -> Self {
        Self {
            ratios: vec![100.0, 80.0, 60.0, 40.0, 20.0, 10.0, 5.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgingSection {
    pub aging_type: AgingType,
    pub ratios: Vec<f64>,
}

impl Default for AgingSection {
    fn default() -> Self {
        Self {
            aging_type: AgingType::Type3,
            ratios: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub variances: Vec<f64>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            variances: vec![0.0, 1e-4, 1e-3, 1e-2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WireCondition {
    /// Boundary drift only.
    N,
    /// Drift and wire resistance.
    Y,
    /// Drift, wire resistance and read instability.
    R,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WireSection {
    pub conditions: Vec<WireCondition>,
    pub boundary_drift_frac: f64,
    pub read_instability_frac: f64,
}

impl Default for WireSection {
    fn default() -> Self {
        Self {
            conditions: vec![WireCondition::N, WireCondition::Y, WireCondition::R],
            boundary_drift_frac: 0.2,
            read_instability_frac: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelsSection {
    pub m_max: u32,
    pub l_max: u32,
    /// Skip effective counts for catalogs larger than this.
    pub enumeration_cap: u64,
    pub epsilon: f64,
}

impl Default for LevelsSection {
    fn default() -> Self {
        Self {
            m_max: 8,
            l_max: 12,
            enumeration_cap: 100_000,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnSection {
    pub network: PathBuf,
    pub dataset: PathBuf,
    pub variability: Vec<f64>,
    /// Overrides the top-level trial count.
    pub trials: Option<usize>,
    /// Use only the first `max_samples` samples (all when absent).
    pub max_samples: Option<usize>,
}

impl Default for NnSection {
    fn default() -> Self {
        Self {
            network: PathBuf::from("crates/core/fixtures/digits_cnn.mxw"),
            dataset: PathBuf::from("crates/core/fixtures/digits_test.csv"),
            variability: vec![0.0],
            trials: None,
            max_samples: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapdumpSection {
    pub m: u32,
    #[serde(rename = "L")]
    pub levels: u32,
}

impl Default for MapdumpSection {
    fn default() -> Self {
        Self { m: 3, levels: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    pub seed: u64,
    pub trials: usize,
    pub output: Option<PathBuf>,
    pub crossbar: CrossbarSection,
    pub device: DeviceSection,
    pub grid: GridSection,
    pub weights: WeightsSection,
    pub nonideal: NonIdealityConfig,
    pub ratio: RatioSection,
    pub aging: AgingSection,
    pub noise: NoiseSection,
    pub wire: WireSection,
    pub levels: LevelsSection,
    pub nn: NnSection,
    pub mapdump: MapdumpSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 1,
            trials: 100,
            output: None,
            crossbar: CrossbarSection::default(),
            device: DeviceSection::default(),
            grid: GridSection::default(),
            weights: WeightsSection::default(),
            nonideal: NonIdealityConfig::default(),
            ratio: RatioSection::default(),
            aging: AgingSection::default(),
            noise: NoiseSection::default(),
            wire: WireSection::default(),
            levels: LevelsSection::default(),
            nn: NnSection::default(),
            mapdump: MapdumpSection::default(),
        }
    }
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads a config file. Relative `nn` paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| {
            Error::Config(format!(
                "{}: {}",
                path.display(),
                e.to_string().trim_start_matches("config error: ")
            ))
        })?;
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.nn.network, &mut cfg.nn.dataset] {
                if p.is_relative() && !p.as_os_str().is_empty() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Digest of the effective configuration, embedded in CSV headers.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Non-ideality settings with the run seed applied.
    pub fn nonideal(&self) -> NonIdealityConfig {
        NonIdealityConfig {
            master_seed: self.seed,
            ..self.nonideal.clone()
        }
    }

    pub fn validate(&self, kind: ExperimentKind) -> Result<()> {
        if self.trials == 0 {
            return Err(config_err("trials", "must be >= 1"));
        }
        if self.crossbar.n == 0 || self.crossbar.k == 0 {
            return Err(config_err("crossbar", "n and k must be >= 1"));
        }
        if self.grid.m.is_empty() || self.grid.levels.is_empty() {
            return Err(config_err("grid", "m and L lists must be non-empty"));
        }
        if let Some(&m) = self.grid.m.iter().find(|&&m| m == 0) {
            return Err(config_err("grid.m", format!("node size {m} must be >= 1")));
        }
        if let Some(&l) = self.grid.levels.iter().find(|&&l| l == 0) {
            return Err(config_err("grid.L", format!("level count {l} must be >= 1")));
        }
        if !(self.weights.w_min < self.weights.w_max) {
            return Err(config_err("weights", "w_min must be < w_max"));
        }
        self.nonideal.validate()?;
        if self.device.placement == PlacementName::Explicit {
            let n = self.device.levels_us.len() as u32;
            if n == 0 {
                return Err(config_err("device.levels_us", "explicit placement needs level values"));
            }
            match kind {
                ExperimentKind::Levels => {}
                ExperimentKind::Mapdump if self.mapdump.levels != n => {
                    return Err(config_err("mapdump.L", format!("explicit placement lists {n} levels")));
                }
                ExperimentKind::Mapdump => {}
                _ if self.grid.levels.iter().any(|&l| l != n) => {
                    return Err(config_err("grid.L", format!("explicit placement lists {n} levels")));
                }
                _ => {}
            }
        }
        self.device
            .spec(2)
            .map_err(|e| config_err("device", e.to_string().trim_start_matches("domain error: ")))?;
        match kind {
            ExperimentKind::RatioSweep if self.ratio.ratios.iter().any(|&r| !(r > 1.0)) => {
                Err(config_err("ratio.ratios", "every ratio must be > 1"))
            }
            ExperimentKind::AgingSweep if self.aging.ratios.iter().any(|r| !(0.0..1.0).contains(r)) => {
                Err(config_err("aging.ratios", "every ratio must lie in [0, 1)"))
            }
            ExperimentKind::NoiseSweep if self.noise.variances.iter().any(|&v| !(v >= 0.0)) => {
                Err(config_err("noise.variances", "variances must be >= 0"))
            }
            ExperimentKind::NnGrid if self.nn.variability.is_empty() => {
                Err(config_err("nn.variability", "must be non-empty"))
            }
            ExperimentKind::WireTable if self.wire.conditions.is_empty() => {
                Err(config_err("wire.conditions", "must be non-empty"))
            }
            ExperimentKind::Levels if self.levels.m_max == 0 || self.levels.l_max == 0 => {
                Err(config_err("levels", "m_max and l_max must be >= 1"))
            }
            _ => Ok(()),
        }
    }
}

/// Per-trial, per-physical-column RCE of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RceCell {
    /// Value of the sweep column, if the experiment has one.
    pub sweep: Option<String>,
    pub m: u32,
    pub levels: u32,
    pub l_c: u64,
    /// `trials[t][j]`: RCE of column `j` in trial `t`; `None` when undefined.
    pub trials: Vec<Vec<Option<f64>>>,
}

impl RceCell {
    pub fn values(&self) -> impl Iterator<Item = f64> + Clone + '_ {
        self.trials.iter().flatten().filter_map(|x| *x)
    }

    pub fn mean(&self) -> f64 {
        mean(self.values())
    }

    pub fn std(&self) -> f64 {
        sample_std(self.values())
    }

    /// Mean RCE of each trial.
    pub fn trial_means(&self) -> Vec<f64> {
        self.trials.iter().map(|t| mean(t.iter().filter_map(|x| *x))).collect()
    }

    /// Standard error of the cell mean, treating trials as the independent unit.
    pub fn trial_standard_error(&self) -> f64 {
        let tm = self.trial_means();
        sample_std(tm.iter().copied()) / (tm.len() as f64).sqrt()
    }
}

pub fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_std(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let mu = mean(xs.clone());
    let (ss, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + (x - mu) * (x - mu), n + 1));
    if n < 2 {
        f64::NAN
    } else {
        (ss / (n - 1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RceTable {
    pub kind: ExperimentKind,
    pub sweep_column: Option<&'static str>,
    pub cells: Vec<RceCell>,
}

impl RceTable {
    pub fn cell(&self, sweep: Option<&str>, m: u32, levels: u32) -> Option<&RceCell> {
        self.cells
            .iter()
            .find(|c| c.sweep.as_deref() == sweep && c.m == m && c.levels == levels)
    }

    pub fn mean(&self, sweep: Option<&str>, m: u32, levels: u32) -> f64 {
        self.cell(sweep, m, levels).map(RceCell::mean).unwrap_or(f64::NAN)
    }
}

/// The settings of one RCE cell.
struct CellSpec {
    sweep: Option<String>,
    device: DeviceSpec,
    m: u32,
    nonideal: NonIdealityConfig,
}

fn trial_workload(cfg: &ExperimentConfig, trial: u64) -> (Vec<f64>, Vec<f64>) {
    let (n, k) = (cfg.crossbar.n, cfg.crossbar.k);
    let root = StreamKey::root(cfg.seed);
    let mut wr = root.kind(StreamKind::Weights).index(trial).rng();
    let (lo, hi) = (cfg.weights.w_min, cfg.weights.w_max);
    let w = (0..n * k).map(|_| wr.random_range(lo..=hi)).collect();
    let mut vr = root.kind(StreamKind::Inputs).index(trial).rng();
    let v = (0..n).map(|_| vr.random_range(0.0..=1.0)).collect();
    (w, v)
}

fn run_cell(cfg: &ExperimentConfig, spec: CellSpec) -> Result<RceCell> {
    let node = NodeSpec::new(spec.m, spec.device.clone(), cfg.crossbar.topology)?;
    let q = QuantizerTable::new(&node, cfg.weights.w_min, cfg.weights.w_max, DEFAULT_EPSILON)?;
    let (n, k) = (cfg.crossbar.n, cfg.crossbar.k);
    let trials = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let (w, v) = trial_workload(cfg, t);
            let mm = map_matrix(&w, n, k, &q, cfg.crossbar.signed)?;
            let ctx = ReadContext::new(&mm.crossbar, &mm.reference, &spec.nonideal, t, 0)?;
            Ok(ctx.read(&v, 0)?.rce_percent)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RceCell {
        sweep: spec.sweep,
        m: spec.m,
        levels: spec.device.levels,
        l_c: count_unique_levels(spec.m, spec.device.levels)?,
        trials,
    })
}

fn run_cells(cfg: &ExperimentConfig, kind: ExperimentKind, specs: Vec<CellSpec>) -> Result<RceTable> {
    let sweep_column = match kind {
        ExperimentKind::RatioSweep => Some("ratio"),
        ExperimentKind::AgingSweep => Some("aging_ratio"),
        ExperimentKind::NoiseSweep => Some("input_noise_variance"),
        ExperimentKind::WireTable => Some("condition"),
        _ => None,
    };
    let cells = specs
        .into_iter()
        .map(|s| run_cell(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(RceTable {
        kind,
        sweep_column,
        cells,
    })
}

fn grid_specs(
    cfg: &ExperimentConfig,
    sweep: Option<String>,
    device_for: impl Fn(u32) -> Result<DeviceSpec>,
    nonideal: &NonIdealityConfig,
) -> Result<Vec<CellSpec>> {
    let mut out = Vec::new();
    for &m in &cfg.grid.m {
        for &l in &cfg.grid.levels {
            out.push(CellSpec {
                sweep: sweep.clone(),
                device: device_for(l)?,
                m,
                nonideal: nonideal.clone(),
            });
        }
    }
    Ok(out)
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

pub fn run_rce_grid(cfg: &ExperimentConfig) -> Result<RceTable> {
    cfg.validate(ExperimentKind::RceGrid)?;
    let specs = grid_specs(cfg, None, |l| cfg.device.spec(l), &cfg.nonideal())?;
    run_cells(cfg, ExperimentKind::RceGrid, specs)
}

/// RCE grid per `R_OFF / R_ON` ratio with `R_ON` fixed.
pub fn run_ratio_sweep(cfg: &ExperimentConfig) -> Result<RceTable> {
    cfg.validate(ExperimentKind::RatioSweep)?;
    let mut specs = Vec::new();
    for &ratio in &cfg.ratio.ratios {
        let device = |l: u32| {
            let base = cfg.device.spec(l)?;
            base.with_window(base.r_on, base.r_on * ratio)
        };
        specs.extend(grid_specs(cfg, Some(fmt_num(ratio)), device, &cfg.nonideal())?);
    }
    run_cells(cfg, ExperimentKind::RatioSweep, specs)
}

/// RCE grid per aging ratio; the devices are reprogrammed inside the aged window.
pub fn run_aging_sweep(cfg: &ExperimentConfig) -> Result<RceTable> {
    cfg.validate(ExperimentKind::AgingSweep)?;
    let mut specs = Vec::new();
    for &ratio in &cfg.aging.ratios {
        let state = AgingState::new(cfg.aging.aging_type, ratio)?;
        let nonideal = NonIdealityConfig {
            aging: Some(state),
            ..cfg.nonideal()
        };
        let device = |l: u32| apply_aging(&cfg.device.spec(l)?, &state);
        specs.extend(grid_specs(cfg, Some(fmt_num(ratio)), device, &nonideal)?);
    }
    run_cells(cfg, ExperimentKind::AgingSweep, specs)
}

/// RCE grid per input-noise variance. The reference sees the same noisy input.
pub fn run_noise_sweep(cfg: &ExperimentConfig) -> Result<RceTable> {
    cfg.validate(ExperimentKind::NoiseSweep)?;
    let mut specs = Vec::new();
    for &var in &cfg.noise.variances {
        let nonideal = NonIdealityConfig {
            input_noise_variance: var,
            ..cfg.nonideal()
        };
        specs.extend(grid_specs(cfg, Some(fmt_num(var)), |l| cfg.device.spec(l), &nonideal)?);
    }
    run_cells(cfg, ExperimentKind::NoiseSweep, specs)
}

/// Boundary drift (N), plus wire resistance (Y), plus read instability (R).
pub fn run_wire_table(cfg: &ExperimentConfig) -> Result<RceTable> {
    cfg.validate(ExperimentKind::WireTable)?;
    let mut specs = Vec::new();
    for &m in &cfg.grid.m {
        for &l in &cfg.grid.levels {
            for &cond in &cfg.wire.conditions {
                let nonideal = NonIdealityConfig {
                    boundary_drift_frac: cfg.wire.boundary_drift_frac,
                    wire_enabled: cond != WireCondition::N,
                    read_instability_frac: if cond == WireCondition::R {
                        cfg.wire.read_instability_frac
                    } else {
                        0.0
                    },
                    ..cfg.nonideal()
                };
                specs.push(CellSpec {
                    sweep: Some(format!("{cond:?}")),
                    device: cfg.device.spec(l)?,
                    m,
                    nonideal,
                });
            }
        }
    }
    run_cells(cfg, ExperimentKind::WireTable, specs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelsRow {
    pub m: u32,
    pub levels: u32,
    pub l_c: u64,
    /// Distinct sums for the configured device; `None` above the enumeration cap.
    pub effective: Option<usize>,
}

/// `L_C` table plus effective counts for the configured level placement.
pub fn run_levels_report(cfg: &ExperimentConfig) -> Result<Vec<LevelsRow>> {
    cfg.validate(ExperimentKind::Levels)?;
    let explicit = cfg.device.placement == PlacementName::Explicit;
    let ls: Vec<u32> = if explicit {
        vec![cfg.device.levels_us.len() as u32]
    } else {
        (1..=cfg.levels.l_max).collect()
    };
    let mut rows = Vec::new();
    for m in 1..=cfg.levels.m_max {
        for &l in &ls {
            let l_c = count_unique_levels(m, l)?;
            let effective = if l_c <= cfg.levels.enumeration_cap.min(DEFAULT_ENUMERATION_CAP) {
                let set = cfg.device.spec(l)?.derive_levels()?;
                Some(
                    enumerate_node_levels_capped(&set, m, cfg.levels.epsilon, DEFAULT_ENUMERATION_CAP)?.effective_count,
                )
            } else {
                None
            };
            rows.push(LevelsRow {
                m,
                levels: l,
                l_c,
                effective,
            });
        }
    }
    Ok(rows)
}

pub fn run_nn_grid(cfg: &ExperimentConfig) -> Result<crate::net::EvalReport> {
    cfg.validate(ExperimentKind::NnGrid)?;
    let net = NetworkDef::load(&cfg.nn.network)?;
    let mut data = Dataset::load_csv(&cfg.nn.dataset)?;
    if let Some(n) = cfg.nn.max_samples {
        data.features.truncate(n);
        data.labels.truncate(n);
    }
    let grid: Vec<(u32, u32)> = cfg
        .grid
        .m
        .iter()
        .flat_map(|&m| cfg.grid.levels.iter().map(move |&l| (m, l)))
        .collect();
    let settings = EvalSettings {
        device: cfg.device.spec(cfg.grid.levels[0])?,
        topology: cfg.crossbar.topology,
        nonideal: cfg.nonideal(),
        trials: cfg.nn.trials.unwrap_or(cfg.trials),
    };
    evaluate_grid(&net, &data, &grid, &cfg.nn.variability, &settings)
}

pub fn run_mapdump(cfg: &ExperimentConfig) -> Result<QuantizerTable> {
    cfg.validate(ExperimentKind::Mapdump)?;
    let node = NodeSpec::new(
        cfg.mapdump.m,
        cfg.device.spec(cfg.mapdump.levels)?,
        cfg.crossbar.topology,
    )?;
    QuantizerTable::new(&node, cfg.weights.w_min, cfg.weights.w_max, DEFAULT_EPSILON)
}

fn header(cfg: &ExperimentConfig, kind: ExperimentKind) -> String {
    format!(
        "# tool = {TOOL_VERSION}\n# experiment = {}\n# seed = {}\n# config_sha256 = {}\n",
        kind.name(),
        cfg.seed,
        cfg.hash()
    )
}

fn csv_body(records: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in records {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

pub fn rce_csv(cfg: &ExperimentConfig, table: &RceTable) -> Result<String> {
    let mut head = vec!["row".to_string()];
    head.extend(table.sweep_column.map(String::from));
    head.extend(["m", "L", "L_C", "trial", "column", "rce_percent"].map(String::from));
    let mut records = vec![head];
    for cell in &table.cells {
        let key = |row: &str| {
            let mut r = vec![row.to_string()];
            r.extend(cell.sweep.clone());
            r.extend([cell.m.to_string(), cell.levels.to_string(), cell.l_c.to_string()]);
            r
        };
        for (t, cols) in cell.trials.iter().enumerate() {
            for (j, v) in cols.iter().enumerate() {
                let mut r = key("sample");
                r.extend([t.to_string(), j.to_string(), opt(*v)]);
                records.push(r);
            }
        }
        for (name, v) in [("mean", cell.mean()), ("std", cell.std())] {
            let mut r = key(name);
            r.extend([
                String::new(),
                String::new(),
                if v.is_nan() { String::new() } else { fmt_num(v) },
            ]);
            records.push(r);
        }
    }
    Ok(header(cfg, table.kind) + &csv_body(records)?)
}

pub fn levels_csv(cfg: &ExperimentConfig, rows: &[LevelsRow]) -> Result<String> {
    let mut records = vec![["m", "L", "L_C", "effective_count"].map(String::from).to_vec()];
    for r in rows {
        records.push(vec![
            r.m.to_string(),
            r.levels.to_string(),
            r.l_c.to_string(),
            r.effective.map(|e| e.to_string()).unwrap_or_default(),
        ]);
    }
    Ok(header(cfg, ExperimentKind::Levels) + &csv_body(records)?)
}

pub fn nn_csv(cfg: &ExperimentConfig, report: &crate::net::EvalReport) -> Result<String> {
    let mut records = vec![[
        "m",
        "L",
        "L_C",
        "variability_frac",
        "trials",
        "accuracy_percent",
        "accuracy_std",
        "float_baseline_percent",
    ]
    .map(String::from)
    .to_vec()];
    for r in &report.rows {
        let sd = sample_std(r.trial_accuracy.iter().copied());
        records.push(vec![
            r.m.to_string(),
            r.levels.to_string(),
            r.l_c.to_string(),
            fmt_num(r.variability_frac),
            r.trials().to_string(),
            fmt_num(r.accuracy_percent()),
            if sd.is_nan() { String::new() } else { fmt_num(sd) },
            fmt_num(r.float_baseline_percent),
        ]);
    }
    Ok(header(cfg, ExperimentKind::NnGrid) + &csv_body(records)?)
}

pub fn mapdump_csv(cfg: &ExperimentConfig, q: &QuantizerTable) -> Result<String> {
    let text = q.mapping_csv();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let records = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok(header(cfg, ExperimentKind::Mapdump) + &csv_body(records)?)
}

/// Runs `kind` and renders its CSV.
pub fn run_to_csv(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<String> {
    match kind {
        ExperimentKind::Levels => levels_csv(cfg, &run_levels_report(cfg)?),
        ExperimentKind::RceGrid => rce_csv(cfg, &run_rce_grid(cfg)?),
        ExperimentKind::RatioSweep => rce_csv(cfg, &run_ratio_sweep(cfg)?),
        ExperimentKind::AgingSweep => rce_csv(cfg, &run_aging_sweep(cfg)?),
        ExperimentKind::NoiseSweep => rce_csv(cfg, &run_noise_sweep(cfg)?),
        ExperimentKind::WireTable => rce_csv(cfg, &run_wire_table(cfg)?),
        ExperimentKind::NnGrid => nn_csv(cfg, &run_nn_grid(cfg)?),
        ExperimentKind::Mapdump => mapdump_csv(cfg, &run_mapdump(cfg)?),
    }
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Strips `#` comment lines.
pub fn strip_comments(csv: &str) -> String {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            trials: 3,
            crossbar: CrossbarSection {
                n: 4,
                k: 3,
                ..CrossbarSection::default()
            },
            grid: GridSection {
                m: vec![1, 2],
                levels: vec![2, 3],
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = small();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let err = ExperimentConfig::from_toml_str("[grid]\nmm = [1]\n").unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("mm"), "{err}");
        let err = ExperimentConfig::from_toml_str("trials = \"x\"\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg = small();
        cfg.grid.m.clear();
        let e = cfg.validate(ExperimentKind::RceGrid).unwrap_err();
        assert!(e.is_config() && e.to_string().contains("grid"));
        let mut cfg = small();
        cfg.nonideal.read_noise_frac = -1.0;
        assert!(cfg.validate(ExperimentKind::RceGrid).unwrap_err().is_config());
    }

    #[test]
    fn rce_table_shape_and_aggregates() {
        let cfg = small();
        let t = run_rce_grid(&cfg).unwrap();
        assert_eq!(t.cells.len(), 4);
        for c in &t.cells {
            assert_eq!(c.trials.len(), 3);
            assert!(c.trials.iter().all(|row| row.len() == 6));
        }
        let csv = rce_csv(&cfg, &t).unwrap();
        assert!(csv.starts_with("# tool = memxbar"));
        let body = strip_comments(&csv);
        assert!(body.starts_with("row,m,L,L_C,trial,column,rce_percent"));
    }

    #[test]
    fn sample_std_uses_n_minus_one() {
        assert_eq!(sample_std([1.0, 3.0].into_iter()), 2f64.sqrt());
        assert!(sample_std([1.0].into_iter()).is_nan());
    }
}
