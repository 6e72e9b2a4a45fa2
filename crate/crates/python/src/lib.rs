//! Python bindings for `memxbar`.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use memxbar::crossbar::ReadNoiseReference;
use memxbar::experiments::{run_to_csv, ExperimentConfig, ExperimentKind};
use memxbar::net::{float_accuracy, forward_float, Dataset, NetworkDef, ProgrammedNetwork};
use memxbar::{
    AgingState, AgingType, DeviceSpec, Error, LevelPlacement, NodeSpec, NonIdealityConfig, QuantizerTable, ReadContext,
    Topology,
};

type Catalog = (Vec<(Vec<usize>, f64)>, usize);
type Readout = (Vec<f64>, Vec<f64>, Vec<Option<f64>>);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        Error::Csv(e) => PyOSError::new_err(e.to_string()),
        Error::Domain(_)
        | Error::Config(_)
        | Error::Overflow { .. }
        | Error::Infeasible { .. }
        | Error::DimensionMismatch { .. }
        | Error::Shape(_)
        | Error::OverlappingPairs(_)
        | Error::AgingCollapse { .. }
        | Error::EnumerationTooLarge { .. }
        | Error::Format(_) => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_placement(name: &str) -> PyResult<LevelPlacement> {
    match name {
        "linear_in_conductance" | "linear" => Ok(LevelPlacement::LinearInConductance),
        "linear_in_resistance" => Ok(LevelPlacement::LinearInResistance),
        "geometric" => Ok(LevelPlacement::Geometric),
        _ => Err(PyValueError::new_err(format!("unknown placement `{name}`"))),
    }
}

fn parse_topology(name: &str) -> PyResult<Topology> {
    match name {
        "parallel" => Ok(Topology::Parallel),
        "series" => Ok(Topology::Series),
        "three_d_two_layer" | "3d" => Ok(Topology::ThreeDTwoLayer),
        _ => Err(PyValueError::new_err(format!("unknown topology `{name}`"))),
    }
}

fn parse_aging(name: &str) -> PyResult<AgingType> {
    match name {
        "type1" => Ok(AgingType::Type1),
        "type2" => Ok(AgingType::Type2),
        "type3" => Ok(AgingType::Type3),
        _ => Err(PyValueError::new_err(format!("unknown aging type `{name}`"))),
    }
}

fn parse_kind(name: &str) -> PyResult<ExperimentKind> {
    let kinds = [
        ExperimentKind::Levels,
        ExperimentKind::RceGrid,
        ExperimentKind::RatioSweep,
        ExperimentKind::AgingSweep,
        ExperimentKind::NoiseSweep,
        ExperimentKind::WireTable,
        ExperimentKind::NnGrid,
        ExperimentKind::Mapdump,
    ];
    kinds
        .into_iter()
        .find(|k| k.name() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown experiment `{name}`")))
}

/// Number of distinct conductances of an `m`-device node with `L` levels per device.
#[pyfunction]
fn count_unique_levels(m: u32, levels: u32) -> PyResult<u64> {
    memxbar::count_unique_levels(m, levels).map_err(to_py)
}

#[pyfunction]
fn simplicial_sequence(m: u32, l_max: u32) -> PyResult<Vec<u64>> {
    memxbar::simplicial_sequence(m, l_max).map_err(to_py)
}

/// Smallest node size reaching `required` levels.
#[pyfunction]
fn select_node_size(levels: u32, required: u64) -> PyResult<u32> {
    memxbar::select_node_size(levels, required).map_err(to_py)
}

/// All node configurations as `(assignment, conductance)`, sorted by conductance.
#[pyfunction]
#[pyo3(signature = (levels, m, epsilon=1e-9))]
fn enumerate_node_levels(levels: Vec<f64>, m: u32, epsilon: f64) -> PyResult<Catalog> {
    let set = memxbar::LevelSet::new(levels).map_err(to_py)?;
    let cat = memxbar::enumerate_node_levels(&set, m, epsilon).map_err(to_py)?;
    let entries = cat.entries.into_iter().map(|e| (e.assignment, e.conductance)).collect();
    Ok((entries, cat.effective_count))
}

/// Runs an experiment from a TOML config string and returns the CSV text.
#[pyfunction]
#[pyo3(signature = (kind, config="", seed=None, trials=None))]
fn run_experiment(
    py: Python<'_>,
    kind: &str,
    config: &str,
    seed: Option<u64>,
    trials: Option<usize>,
) -> PyResult<String> {
    let kind = parse_kind(kind)?;
    let mut cfg = ExperimentConfig::from_toml_str(config).map_err(to_py)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    py.detach(|| run_to_csv(&cfg, kind)).map_err(to_py)
}

/// Same as `run_experiment`, reading the config from a file.
#[pyfunction]
fn run_experiment_file(py: Python<'_>, kind: &str, path: PathBuf) -> PyResult<String> {
    let kind = parse_kind(kind)?;
    let cfg = ExperimentConfig::load(&path).map_err(to_py)?;
    py.detach(|| run_to_csv(&cfg, kind)).map_err(to_py)
}

/// One memristor type: conductance window and level placement.
#[pyclass(name = "DeviceSpec", module = "memxbar", from_py_object)]
#[derive(Clone)]
struct PyDeviceSpec {
    inner: DeviceSpec,
}

#[pymethods]
impl PyDeviceSpec {
    #[new]
    #[pyo3(signature = (r_on=1e3, r_off=1e5, levels=2, placement="linear_in_conductance"))]
    fn new(r_on: f64, r_off: f64, levels: u32, placement: &str) -> PyResult<Self> {
        let inner = DeviceSpec::new(r_on, r_off, levels, parse_placement(placement)?).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Device with the given levels in siemens.
    #[staticmethod]
    fn explicit(levels: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: DeviceSpec::explicit(levels).map_err(to_py)?,
        })
    }

    #[getter]
    fn r_on(&self) -> f64 {
        self.inner.r_on
    }

    #[getter]
    fn r_off(&self) -> f64 {
        self.inner.r_off
    }

    #[getter]
    fn levels(&self) -> u32 {
        self.inner.levels
    }

    /// Level conductances in siemens, ascending.
    fn derive_levels(&self) -> PyResult<Vec<f64>> {
        Ok(self.inner.derive_levels().map_err(to_py)?.as_slice().to_vec())
    }

    /// The device reprogrammed inside its aged window.
    fn aged(&self, aging_type: &str, ratio: f64) -> PyResult<Self> {
        let state = AgingState::new(parse_aging(aging_type)?, ratio).map_err(to_py)?;
        Ok(Self {
            inner: memxbar::apply_aging(&self.inner, &state).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "DeviceSpec(r_on={}, r_off={}, levels={}, placement={:?})",
            self.inner.r_on, self.inner.r_off, self.inner.levels, self.inner.placement
        )
    }
}

/// Non-ideality switches for crossbar reads.
#[pyclass(name = "NonIdeality", module = "memxbar", from_py_object)]
#[derive(Clone)]
struct PyNonIdeality {
    inner: NonIdealityConfig,
}

#[pymethods]
impl PyNonIdeality {
    #[new]
    #[pyo3(signature = (
        read_noise_frac=0.0,
        conductance_var_frac=0.0,
        wire_enabled=false,
        boundary_drift_frac=0.0,
        read_instability_frac=0.0,
        input_noise_variance=0.0,
        shared_read_noise=true,
        seed=0,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        read_noise_frac: f64,
        conductance_var_frac: f64,
        wire_enabled: bool,
        boundary_drift_frac: f64,
        read_instability_frac: f64,
        input_noise_variance: f64,
        shared_read_noise: bool,
        seed: u64,
    ) -> PyResult<Self> {
        let inner = NonIdealityConfig {
            read_noise_frac,
            read_noise_reference: if shared_read_noise {
                ReadNoiseReference::Shared
            } else {
                ReadNoiseReference::Independent
            },
            conductance_var_frac,
            wire_enabled,
            boundary_drift_frac,
            read_instability_frac,
            input_noise_variance,
            master_seed: seed,
            ..NonIdealityConfig::default()
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Weight to node-conductance lookup table.
#[pyclass(name = "Quantizer", module = "memxbar")]
struct PyQuantizer {
    inner: QuantizerTable,
}

#[pymethods]
impl PyQuantizer {
    #[new]
    #[pyo3(signature = (device, m, topology="parallel", w_min=-1.0, w_max=1.0, epsilon=1e-12))]
    fn new(device: &PyDeviceSpec, m: u32, topology: &str, w_min: f64, w_max: f64, epsilon: f64) -> PyResult<Self> {
        let node = NodeSpec::new(m, device.inner.clone(), parse_topology(topology)?).map_err(to_py)?;
        Ok(Self {
            inner: QuantizerTable::new(&node, w_min, w_max, epsilon).map_err(to_py)?,
        })
    }

    #[getter]
    fn g_node_min(&self) -> f64 {
        self.inner.g_node_min
    }

    #[getter]
    fn g_node_max(&self) -> f64 {
        self.inner.g_node_max
    }

    /// Distinct realizable node conductances, ascending.
    fn points(&self) -> Vec<f64> {
        self.inner.points().to_vec()
    }

    fn map(&self, w: f64) -> f64 {
        self.inner.map(w)
    }

    fn map_inv(&self, g: f64) -> f64 {
        self.inner.map_inv(g)
    }

    /// `(conductance, assignment, w_realized, clamped)` for one weight.
    fn quantize(&self, w: f64) -> (f64, Vec<usize>, f64, bool) {
        let q = memxbar::quantize_weight(&self.inner, w);
        (
            q.conductance,
            self.inner.entry(q.entry).assignment.clone(),
            q.w_realized,
            q.clamped,
        )
    }

    /// The lookup table as CSV, conductances in microsiemens.
    fn mapping_csv(&self) -> String {
        self.inner.mapping_csv()
    }

    fn __len__(&self) -> usize {
        self.inner.catalog.entries.len()
    }
}

/// A weight matrix programmed onto a crossbar.
#[pyclass(name = "MappedCrossbar", module = "memxbar")]
struct PyMappedCrossbar {
    inner: memxbar::MappedMatrix,
    scale: f64,
}

#[pymethods]
impl PyMappedCrossbar {
    /// Programs a row-major weight matrix (`rows` inputs by `cols` outputs).
    #[new]
    #[pyo3(signature = (weights, quantizer, signed=true))]
    fn new(weights: Vec<Vec<f64>>, quantizer: &PyQuantizer, signed: bool) -> PyResult<Self> {
        let rows = weights.len();
        let cols = weights.first().map_or(0, Vec::len);
        if weights.iter().any(|r| r.len() != cols) {
            return Err(PyValueError::new_err("ragged weight matrix"));
        }
        let flat: Vec<f64> = weights.into_iter().flatten().collect();
        let inner = memxbar::map_matrix(&flat, rows, cols, &quantizer.inner, signed).map_err(to_py)?;
        Ok(Self {
            inner,
            scale: quantizer.inner.signed_scale(),
        })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.crossbar.rows(), self.inner.crossbar.cols())
    }

    #[getter]
    fn clamped(&self) -> usize {
        self.inner.clamped
    }

    /// Nominal physical conductances, row-major.
    fn conductances(&self) -> Vec<Vec<f64>> {
        let xb = &self.inner.crossbar;
        (0..xb.rows())
            .map(|i| (0..xb.cols()).map(|j| xb.nominal_conductance(i, j)).collect())
            .collect()
    }

    /// One read: physical currents, reference currents and per-column RCE (%).
    #[pyo3(signature = (v, nonideality=None, trial=0, read_index=0))]
    fn read(&self, v: Vec<f64>, nonideality: Option<&PyNonIdeality>, trial: u64, read_index: u64) -> PyResult<Readout> {
        let cfg = nonideality.map_or_else(NonIdealityConfig::ideal, |n| n.inner.clone());
        let ctx = ReadContext::new(&self.inner.crossbar, &self.inner.reference, &cfg, trial, 0).map_err(to_py)?;
        let r = ctx.read(&v, read_index).map_err(to_py)?;
        Ok((r.currents, r.ideal_currents, r.rce_percent))
    }

    /// Signed outputs in weight units (`sum_i v_i w_ij`); requires a signed mapping.
    #[pyo3(signature = (v, nonideality=None, trial=0, read_index=0))]
    fn matvec(
        &self,
        v: Vec<f64>,
        nonideality: Option<&PyNonIdeality>,
        trial: u64,
        read_index: u64,
    ) -> PyResult<Vec<f64>> {
        if !self.inner.signed {
            return Err(PyValueError::new_err("matvec needs a signed mapping"));
        }
        let cfg = nonideality.map_or_else(NonIdealityConfig::ideal, |n| n.inner.clone());
        let ctx = ReadContext::new(&self.inner.crossbar, &self.inner.reference, &cfg, trial, 0).map_err(to_py)?;
        let r = ctx.read(&v, read_index).map_err(to_py)?;
        let diff = memxbar::signed_read(&self.inner.pairs, &r).map_err(to_py)?;
        Ok(diff.into_iter().map(|d| d / self.scale).collect())
    }
}

/// A feed-forward network in the MXW1 weight format.
#[pyclass(name = "Network", module = "memxbar")]
struct PyNetwork {
    inner: NetworkDef,
}

#[pymethods]
impl PyNetwork {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: NetworkDef::load(&path).map_err(to_py)?,
        })
    }

    #[getter]
    fn input_len(&self) -> usize {
        self.inner.input.len()
    }

    fn classify(&self, x: Vec<f64>) -> PyResult<usize> {
        forward_float(&self.inner, &x).map_err(to_py)
    }

    /// Float accuracy (%) on a headerless CSV dataset.
    fn float_accuracy(&self, py: Python<'_>, dataset: PathBuf) -> PyResult<f64> {
        let data = Dataset::load_csv(&dataset).map_err(to_py)?;
        py.detach(|| float_accuracy(&self.inner, &data)).map_err(to_py)
    }

    /// Accuracy (%) with every layer mapped onto `m`-device nodes.
    #[pyo3(signature = (dataset, device, m, nonideality=None, trial=0))]
    fn mapped_accuracy(
        &self,
        py: Python<'_>,
        dataset: PathBuf,
        device: &PyDeviceSpec,
        m: u32,
        nonideality: Option<&PyNonIdeality>,
        trial: u64,
    ) -> PyResult<f64> {
        let data = Dataset::load_csv(&dataset).map_err(to_py)?;
        let node = NodeSpec::new(m, device.inner.clone(), Topology::Parallel).map_err(to_py)?;
        let cfg = nonideality.map_or_else(NonIdealityConfig::ideal, |n| n.inner.clone());
        py.detach(|| {
            let programmed = ProgrammedNetwork::program(&self.inner, &node)?;
            let inst = programmed.instance(&cfg, trial)?;
            memxbar::net::accuracy(&data, |i, x| inst.classify(&self.inner, x, i as u64))
        })
        .map_err(to_py)
    }
}

#[pymodule]
#[pyo3(name = "memxbar")]
fn memxbar_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(count_unique_levels, m)?)?;
    m.add_function(wrap_pyfunction!(simplicial_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(select_node_size, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_node_levels, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment_file, m)?)?;
    m.add_class::<PyDeviceSpec>()?;
    m.add_class::<PyNonIdeality>()?;
    m.add_class::<PyQuantizer>()?;
    m.add_class::<PyMappedCrossbar>()?;
    m.add_class::<PyNetwork>()?;
    Ok(())
}
