//! Small feed-forward networks evaluated in float or through mapped crossbars.
//!
//! Activations are stored height-width-channel. A convolution patch is
//! flattened as `(ky, kx, c)` with the channel fastest, and each parametric
//! layer keeps a `(fan_in + 1) x fan_out` matrix whose last row is the bias.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::crossbar::{signed_read, NodeSpec, NonIdealityConfig, ReadContext, Topology};
use crate::device::DeviceSpec;
use crate::error::{Error, Result};
use crate::levels::count_unique_levels;
use crate::mapper::{map_matrix, MappedMatrix, QuantizerTable};

const MAGIC: &[u8; 4] = b"MXW1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Dense {
        n_in: usize,
        n_out: usize,
    },
    Conv2d {
        kh: usize,
        kw: usize,
        c_in: usize,
        c_out: usize,
        stride: usize,
    },
    Relu,
    MeanPool {
        p: usize,
    },
    SoftmaxArgmax,
}

impl Layer {
    fn tag(&self) -> u8 {
        match self {
            Layer::Dense { .. } => 1,
            Layer::Conv2d { .. } => 2,
            Layer::Relu => 3,
            Layer::MeanPool { .. } => 4,
            Layer::SoftmaxArgmax => 5,
        }
    }

    fn params(&self) -> Vec<usize> {
        match *self {
            Layer::Dense { n_in, n_out } => vec![n_in, n_out],
            Layer::Conv2d {
                kh,
                kw,
                c_in,
                c_out,
                stride,
            } => vec![kh, kw, c_in, c_out, stride],
            Layer::MeanPool { p } => vec![p],
            Layer::Relu | Layer::SoftmaxArgmax => vec![],
        }
    }

    /// `(fan_in + 1, fan_out)` for parametric layers.
    pub fn matrix_shape(&self) -> Option<(usize, usize)> {
        match *self {
            Layer::Dense { n_in, n_out } => Some((n_in + 1, n_out)),
            Layer::Conv2d {
                kh, kw, c_in, c_out, ..
            } => Some((kh * kw * c_in + 1, c_out)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, &b| a.max(b.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDef {
    pub input: Shape,
    pub layers: Vec<Layer>,
    /// One matrix per parametric layer, in layer order.
    pub weights: Vec<Matrix>,
}

impl NetworkDef {
    pub fn new(input: Shape, layers: Vec<Layer>, weights: Vec<Matrix>) -> Result<Self> {
        let net = Self { input, layers, weights };
        net.output_shape()?;
        Ok(net)
    }

    /// Validates layer compatibility and returns the score vector length.
    pub fn output_shape(&self) -> Result<Shape> {
        let mut s = self.input;
        let mut wi = 0;
        for (idx, layer) in self.layers.iter().enumerate() {
            let bad = |msg: String| Err(Error::Shape(format!("layer {idx}: {msg}")));
            match *layer {
                Layer::Dense { n_in, n_out } => {
                    if n_in != s.len() {
                        return bad(format!("dense expects {n_in} inputs, previous layer gives {}", s.len()));
                    }
                    s = Shape { h: 1, w: 1, c: n_out };
                }
                Layer::Conv2d {
                    kh,
                    kw,
                    c_in,
                    c_out,
                    stride,
                } => {
                    if c_in != s.c || kh > s.h || kw > s.w || stride == 0 {
                        return bad(format!("conv {kh}x{kw}x{c_in}/{stride} does not fit input {s:?}"));
                    }
                    s = Shape {
                        h: (s.h - kh) / stride + 1,
                        w: (s.w - kw) / stride + 1,
                        c: c_out,
                    };
                }
                Layer::MeanPool { p } => {
                    if p == 0 || !s.h.is_multiple_of(p) || !s.w.is_multiple_of(p) {
                        return bad(format!("pool {p} does not divide {}x{}", s.h, s.w));
                    }
                    s = Shape {
                        h: s.h / p,
                        w: s.w / p,
                        c: s.c,
                    };
                }
                Layer::SoftmaxArgmax => {
                    if idx + 1 != self.layers.len() {
                        return bad("softmax_argmax must be the last layer".into());
                    }
                }
                Layer::Relu => {}
            }
            if let Some((r, c)) = layer.matrix_shape() {
                let m = self
                    .weights
                    .get(wi)
                    .ok_or_else(|| Error::Shape(format!("layer {idx}: missing weights")))?;
                if (m.rows, m.cols) != (r, c) {
                    return bad(format!("weights are {}x{}, expected {r}x{c}", m.rows, m.cols));
                }
                wi += 1;
            }
        }
        if wi != self.weights.len() {
            return Err(Error::Shape(format!(
                "{} weight matrices for {wi} parametric layers",
                self.weights.len()
            )));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("missing MXW1 magic".into()));
        }
        let input = Shape {
            h: r.u32()? as usize,
            w: r.u32()? as usize,
            c: r.u32()? as usize,
        };
        let n = r.u32()? as usize;
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let tag = r.take(1)?[0];
            let layer = match tag {
                1 => Layer::Dense {
                    n_in: r.u32()? as usize,
                    n_out: r.u32()? as usize,
                },
                2 => Layer::Conv2d {
                    kh: r.u32()? as usize,
                    kw: r.u32()? as usize,
                    c_in: r.u32()? as usize,
                    c_out: r.u32()? as usize,
                    stride: r.u32()? as usize,
                },
                3 => Layer::Relu,
                4 => Layer::MeanPool { p: r.u32()? as usize },
                5 => Layer::SoftmaxArgmax,
                t => return Err(Error::Format(format!("unknown layer tag {t}"))),
            };
            layers.push(layer);
        }
        let mut weights = Vec::new();
        for layer in &layers {
            if let Some((rows, cols)) = layer.matrix_shape() {
                let raw = r.take(rows * cols * 4)?;
                let data = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                    .collect();
                weights.push(Matrix { rows, cols, data });
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Self::new(input, layers, weights)
    }

    /// Serializes with weights rounded to `f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for v in [self.input.h, self.input.w, self.input.c, self.layers.len()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for layer in &self.layers {
            out.push(layer.tag());
            for p in layer.params() {
                out.extend_from_slice(&(p as u32).to_le_bytes());
            }
        }
        for m in &self.weights {
            for &x in &m.data {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    /// Copy whose weights are snapped to the values the node can represent,
    /// so that an ideal mapped forward pass reproduces it exactly.
    pub fn quantized(&self, node: &NodeSpec) -> Result<Self> {
        let mut out = self.clone();
        for m in out.weights.iter_mut() {
            let q = layer_quantizer(node, m)?;
            let scale = q.signed_scale();
            for w in m.data.iter_mut() {
                let (g, _) = q.quantize_conductance(q.magnitude_map(w.abs()));
                let mag = (g - q.g_node_min) / scale;
                *w = if *w < 0.0 {
                    -mag
                } else if *w > 0.0 {
                    mag
                } else {
                    0.0
                };
            }
        }
        Ok(out)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format("unexpected end of weights file".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn layer_quantizer(node: &NodeSpec, m: &Matrix) -> Result<QuantizerTable> {
    let w = m.max_abs();
    let w = if w > 0.0 { w } else { 1.0 };
    QuantizerTable::new(node, -w, w, crate::levels::DEFAULT_EPSILON)
}

/// Runs the network, with `matvec(param_index, x_with_bias, read_index)`
/// evaluating each parametric layer.
fn forward_with<F>(net: &NetworkDef, input: &[f64], mut matvec: F) -> Result<Vec<f64>>
where
    F: FnMut(usize, &[f64], u64) -> Result<Vec<f64>>,
{
    if input.len() != net.input.len() {
        return Err(Error::DimensionMismatch {
            expected: net.input.len(),
            got: input.len(),
        });
    }
    let mut s = net.input;
    let mut a = input.to_vec();
    let mut pi = 0;
    for layer in &net.layers {
        match *layer {
            Layer::Dense { n_out, .. } => {
                let mut x = a.clone();
                x.push(1.0);
                a = matvec(pi, &x, 0)?;
                pi += 1;
                s = Shape { h: 1, w: 1, c: n_out };
            }
            Layer::Conv2d {
                kh,
                kw,
                c_in,
                c_out,
                stride,
            } => {
                let oh = (s.h - kh) / stride + 1;
                let ow = (s.w - kw) / stride + 1;
                let mut out = Vec::with_capacity(oh * ow * c_out);
                let mut patch = Vec::with_capacity(kh * kw * c_in + 1);
                for oy in 0..oh {
                    for ox in 0..ow {
                        patch.clear();
                        for ky in 0..kh {
                            let row = (oy * stride + ky) * s.w;
                            for kx in 0..kw {
                                let base = (row + ox * stride + kx) * s.c;
                                patch.extend_from_slice(&a[base..base + c_in]);
                            }
                        }
                        patch.push(1.0);
                        out.extend(matvec(pi, &patch, (oy * ow + ox) as u64)?);
                    }
                }
                a = out;
                pi += 1;
                s = Shape { h: oh, w: ow, c: c_out };
            }
            Layer::Relu => a.iter_mut().for_each(|x| *x = x.max(0.0)),
            Layer::MeanPool { p } => {
                let (oh, ow) = (s.h / p, s.w / p);
                let mut out = vec![0.0; oh * ow * s.c];
                let inv = 1.0 / (p * p) as f64;
                for oy in 0..oh {
                    for ox in 0..ow {
                        for c in 0..s.c {
                            let mut acc = 0.0;
                            for dy in 0..p {
                                for dx in 0..p {
                                    acc += a[((oy * p + dy) * s.w + ox * p + dx) * s.c + c];
                                }
                            }
                            out[(oy * ow + ox) * s.c + c] = acc * inv;
                        }
                    }
                }
                a = out;
                s = Shape { h: oh, w: ow, c: s.c };
            }
            // Softmax is monotone; the scores are returned as is.
            Layer::SoftmaxArgmax => {}
        }
    }
    Ok(a)
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn float_matvec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.cols];
    for (row, &xi) in m.data.chunks_exact(m.cols).zip(x) {
        for (o, &w) in out.iter_mut().zip(row) {
            *o += xi * w;
        }
    }
    out
}

pub fn scores_float(net: &NetworkDef, input: &[f64]) -> Result<Vec<f64>> {
    forward_with(net, input, |pi, x, _| Ok(float_matvec(&net.weights[pi], x)))
}

pub fn forward_float(net: &NetworkDef, input: &[f64]) -> Result<usize> {
    Ok(argmax(&scores_float(net, input)?))
}

/// Layer weights programmed onto signed crossbars for one node configuration.
#[derive(Debug, Clone)]
pub struct ProgrammedNetwork {
    pub node: NodeSpec,
    layers: Vec<(MappedMatrix, f64)>,
    pub clamped: usize,
}

impl ProgrammedNetwork {
    pub fn program(net: &NetworkDef, node: &NodeSpec) -> Result<Self> {
        let mut layers = Vec::with_capacity(net.weights.len());
        let mut clamped = 0;
        for m in &net.weights {
            let q = layer_quantizer(node, m)?;
            let mapped = map_matrix(&m.data, m.rows, m.cols, &q, true)?;
            clamped += mapped.clamped;
            layers.push((mapped, q.signed_scale()));
        }
        Ok(Self {
            node: node.clone(),
            layers,
            clamped,
        })
    }

    /// Draws the per-trial device state (variability, drift, wire).
    pub fn instance<'a>(&self, cfg: &'a NonIdealityConfig, trial: u64) -> Result<MappedNetwork<'a>> {
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(tag, (mm, scale))| {
                Ok(MappedLayer {
                    ctx: ReadContext::new(&mm.crossbar, &mm.reference, cfg, trial, tag as u64)?,
                    pairs: mm.pairs.clone(),
                    scale: *scale,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MappedNetwork { layers })
    }
}

#[derive(Debug, Clone)]
struct MappedLayer<'a> {
    ctx: ReadContext<'a>,
    pairs: Vec<(usize, usize)>,
    scale: f64,
}

/// A programmed network with one trial's device state drawn.
#[derive(Debug, Clone)]
pub struct MappedNetwork<'a> {
    layers: Vec<MappedLayer<'a>>,
}

impl MappedNetwork<'_> {
    /// Scores for one sample; `sample` keys the per-read noise streams.
    pub fn scores(&self, net: &NetworkDef, input: &[f64], sample: u64) -> Result<Vec<f64>> {
        forward_with(net, input, |pi, x, patch| {
            let layer = &self.layers[pi];
            let read = layer.ctx.read(x, (sample << 24) | patch)?;
            Ok(signed_read(&layer.pairs, &read)?
                .into_iter()
                .map(|i| i / layer.scale)
                .collect())
        })
    }

    pub fn classify(&self, net: &NetworkDef, input: &[f64], sample: u64) -> Result<usize> {
        Ok(argmax(&self.scores(net, input, sample)?))
    }
}

/// One-shot mapped inference. Building the lookup tables dominates the
/// cost; use [`ProgrammedNetwork`] to classify many inputs.
pub fn forward_mapped(
    net: &NetworkDef,
    input: &[f64],
    node: &NodeSpec,
    nonideal: &NonIdealityConfig,
    trial: u64,
) -> Result<usize> {
    ProgrammedNetwork::program(net, node)?
        .instance(nonideal, trial)?
        .classify(net, input, 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    /// Headerless CSV, one sample per row: features then an integer label.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let n = rec.len();
            if n < 2 {
                return Err(Error::Format(format!("row {}: need features and a label", line + 1)));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("row {}: bad number {s:?}", line + 1)))
            };
            features.push(rec.iter().take(n - 1).map(parse).collect::<Result<Vec<_>>>()?);
            let label = rec[n - 1]
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("row {}: bad label {:?}", line + 1, &rec[n - 1])))?;
            labels.push(label);
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Percentage of samples classified correctly by `classify`.
pub fn accuracy<F>(data: &Dataset, classify: F) -> Result<f64>
where
    F: Fn(usize, &[f64]) -> Result<usize> + Sync,
{
    if data.is_empty() {
        return Err(Error::Domain("empty dataset".into()));
    }
    let correct = (0..data.len())
        .into_par_iter()
        .map(|i| classify(i, &data.features[i]).map(|p| (p == data.labels[i]) as usize))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(100.0 * correct as f64 / data.len() as f64)
}

pub fn float_accuracy(net: &NetworkDef, data: &Dataset) -> Result<f64> {
    accuracy(data, |_, x| forward_float(net, x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub m: u32,
    pub levels: u32,
    pub l_c: u64,
    pub variability_frac: f64,
    /// Per-trial accuracies in percent.
    pub trial_accuracy: Vec<f64>,
    pub float_baseline_percent: f64,
}

impl EvalRow {
    pub fn trials(&self) -> usize {
        self.trial_accuracy.len()
    }

    pub fn accuracy_percent(&self) -> f64 {
        self.trial_accuracy.iter().sum::<f64>() / self.trials() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

/// Shared settings of a grid evaluation.
#[derive(Debug, Clone)]
pub struct EvalSettings {
    pub device: DeviceSpec,
    pub topology: Topology,
    pub nonideal: NonIdealityConfig,
    pub trials: usize,
}

/// Accuracy over `grid x variabilities`. Configurations without any random
/// source run a single trial.
pub fn evaluate_grid(
    net: &NetworkDef,
    data: &Dataset,
    grid: &[(u32, u32)],
    variabilities: &[f64],
    settings: &EvalSettings,
) -> Result<EvalReport> {
    if grid.is_empty() || variabilities.is_empty() {
        return Err(Error::Domain("grid and variability list must be non-empty".into()));
    }
    if settings.trials == 0 {
        return Err(Error::Domain("trials must be >= 1".into()));
    }
    let baseline = float_accuracy(net, data)?;
    let mut rows = Vec::new();
    for &(m, l) in grid {
        let device = DeviceSpec {
            levels: l,
            ..settings.device.clone()
        };
        let node = NodeSpec::new(m, device, settings.topology)?;
        let programmed = ProgrammedNetwork::program(net, &node)?;
        for &var in variabilities {
            let cfg = NonIdealityConfig {
                conductance_var_frac: var,
                ..settings.nonideal.clone()
            };
            cfg.validate()?;
            let trials = if cfg.is_stochastic() { settings.trials } else { 1 };
            let mut trial_accuracy = Vec::with_capacity(trials);
            for t in 0..trials {
                let inst = programmed.instance(&cfg, t as u64)?;
                trial_accuracy.push(accuracy(data, |i, x| inst.classify(net, x, i as u64))?);
            }
            rows.push(EvalRow {
                m,
                levels: l,
                l_c: count_unique_levels(m, l)?,
                variability_frac: var,
                trial_accuracy,
                float_baseline_percent: baseline,
            });
        }
    }
    Ok(EvalReport { rows })
}
