//! The two network topologies: a single temporal-conv stack (tCNN) and the
//! limb-branch late-fusion variant (tCNN-IMU).

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{BranchLayout, Limb};
use crate::nn::{orthonormal_init, Activation, LayerSpec, NamedLayer, NnError, ParamSet, Tensor};

pub const CONV_LAYERS: usize = 4;
pub const DEFAULT_FC_UNITS: usize = 256;
pub const DEFAULT_DROPOUT: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArchError {
    #[error("window length {0} too short: four [5,1] convolutions need at least 17 samples")]
    WindowTooShort(usize),
    #[error("no branches: limb map has no channels")]
    NoBranches,
    #[error("invalid architecture: {0}")]
    Invalid(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// One limb branch of the fusion network, reading a subset of input columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub limb: Limb,
    pub channels: Vec<usize>,
    pub layers: Vec<NamedLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Topology {
    Sequential { layers: Vec<NamedLayer> },
    BranchFusion { branches: Vec<Branch>, fusion: Vec<NamedLayer> },
}

/// Layer topology plus the input geometry `[window_len, channels]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkGraph {
    pub window_len: usize,
    pub channels: usize,
    pub num_classes: usize,
    pub topology: Topology,
}

/// A named stack of layers with the prefix of its parameter keys.
pub struct Stack<'a> {
    pub prefix: String,
    pub layers: &'a [NamedLayer],
}

impl NetworkGraph {
    /// Stacks in execution order; for fusion graphs the branches come first.
    pub fn stacks(&self) -> Vec<Stack<'_>> {
        match &self.topology {
            Topology::Sequential { layers } => vec![Stack { prefix: String::new(), layers }],
            Topology::BranchFusion { branches, fusion } => branches
                .iter()
                .map(|b| Stack { prefix: branch_prefix(b.limb), layers: &b.layers })
                .chain(std::iter::once(Stack { prefix: "fusion.".into(), layers: fusion }))
                .collect(),
        }
    }

    /// Parameter keys and shapes in initialization order.
    pub fn param_shapes(&self) -> Result<Vec<(String, Vec<usize>)>, ArchError> {
        let mut out = Vec::new();
        match &self.topology {
            Topology::Sequential { layers } => {
                stack_shapes("", layers, &[self.window_len, self.channels, 1], &mut out)?;
            }
            Topology::BranchFusion { branches, fusion } => {
                let mut concat = 0;
                for b in branches {
                    let width = stack_shapes(
                        &branch_prefix(b.limb),
                        &b.layers,
                        &[self.window_len, b.channels.len(), 1],
                        &mut out,
                    )?;
                    match width.as_slice() {
                        [n] => concat += n,
                        s => return Err(ArchError::Invalid(format!("branch {} must end flat, ends at {s:?}", b.limb))),
                    }
                }
                stack_shapes("fusion.", fusion, &[concat], &mut out)?;
            }
        }
        Ok(out)
    }

    /// Keys of the convolution weights and biases in a stack, in order.
    pub fn conv_keys(&self, prefix: &str) -> Vec<(String, String)> {
        self.stacks()
            .into_iter()
            .filter(|s| s.prefix == prefix)
            .flat_map(|s| {
                s.layers
                    .iter()
                    .filter(|l| matches!(l.spec, LayerSpec::TemporalConv { .. }))
                    .map(|l| (format!("{prefix}{}.W", l.name), format!("{prefix}{}.b", l.name)))
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    pub fn is_sequential(&self) -> bool {
        matches!(self.topology, Topology::Sequential { .. })
    }

    pub fn num_params(&self) -> Result<usize, ArchError> {
        Ok(self.param_shapes()?.iter().map(|(_, s)| s.iter().product::<usize>()).sum())
    }
}

pub fn branch_prefix(limb: Limb) -> String {
    format!("branch.{limb}.")
}

/// Walks a stack from per-sample input shape, recording parameter shapes;
/// returns the per-sample output shape.
fn stack_shapes(
    prefix: &str,
    layers: &[NamedLayer],
    input: &[usize],
    out: &mut Vec<(String, Vec<usize>)>,
) -> Result<Vec<usize>, ArchError> {
    let mut shape = input.to_vec();
    for l in layers {
        let key = |p: &str| format!("{prefix}{}.{p}", l.name);
        match &l.spec {
            LayerSpec::TemporalConv { filters, kernel, .. } => {
                let c_in = match shape.as_slice() {
                    [_, _, c] => *c,
                    s => {
                        return Err(ArchError::Invalid(format!(
                            "{}: convolution needs [T, D, C] input, got {s:?}",
                            l.name
                        )))
                    }
                };
                out.push((key("W"), vec![*filters, c_in, kernel[0]]));
                out.push((key("b"), vec![*filters]));
            }
            LayerSpec::Dense { units: n, .. } | LayerSpec::SoftmaxOutput { classes: n } => {
                let fan_in = match shape.as_slice() {
                    [f] => *f,
                    s => {
                        return Err(ArchError::Invalid(format!("{}: dense layer needs flat input, got {s:?}", l.name)))
                    }
                };
                out.push((key("W"), vec![fan_in, *n]));
                out.push((key("b"), vec![*n]));
            }
            LayerSpec::Flatten | LayerSpec::Dropout { .. } => {}
        }
        shape = layer_output_shape(&l.name, &l.spec, &shape)?;
    }
    Ok(shape)
}

/// Per-sample output shape of one layer.
pub fn layer_output_shape(name: &str, spec: &LayerSpec, input: &[usize]) -> Result<Vec<usize>, ArchError> {
    match spec {
        LayerSpec::TemporalConv { filters, kernel, .. } => match input {
            [t, d, _] => {
                if kernel[1] != 1 || kernel[0] == 0 {
                    return Err(ArchError::Invalid(format!("{name}: kernel {kernel:?} must be [k, 1]")));
                }
                if *t < kernel[0] {
                    return Err(NnError::Shape(format!(
                        "{name}: time dimension {t} shorter than kernel {}",
                        kernel[0]
                    ))
                    .into());
                }
                Ok(vec![t - kernel[0] + 1, *d, *filters])
            }
            s => Err(ArchError::Invalid(format!("{name}: convolution needs [T, D, C] input, got {s:?}"))),
        },
        LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        LayerSpec::Dense { units, .. } => Ok(vec![*units]),
        LayerSpec::Dropout { p } => {
            if !(0.0..1.0).contains(p) {
                return Err(ArchError::Invalid(format!("{name}: dropout p = {p} outside [0, 1)")));
            }
            Ok(input.to_vec())
        }
        LayerSpec::SoftmaxOutput { classes } => Ok(vec![*classes]),
    }
}

fn conv_stack() -> Vec<NamedLayer> {
    (1..=CONV_LAYERS).map(|i| NamedLayer { name: format!("conv{i}"), spec: LayerSpec::conv() }).collect()
}

fn named(name: &str, spec: LayerSpec) -> NamedLayer {
    NamedLayer { name: name.into(), spec }
}

fn check_window(w: usize) -> Result<(), ArchError> {
    if w < 4 * CONV_LAYERS + 1 {
        return Err(ArchError::WindowTooShort(w));
    }
    Ok(())
}

/// Single-stack network: conv×4 → flatten → fc1 → dropout → fc2 → dropout → softmax.
pub fn build_tcnn(
    window_len: usize,
    channels: usize,
    num_classes: usize,
    fc_units: usize,
    dropout_p: f64,
) -> Result<NetworkGraph, ArchError> {
    check_window(window_len)?;
    if channels == 0 || num_classes == 0 || fc_units == 0 {
        return Err(ArchError::Invalid("channels, classes and fc units must be positive".into()));
    }
    let mut layers = conv_stack();
    layers.push(named("flatten", LayerSpec::Flatten));
    layers.push(named("fc1", LayerSpec::Dense { units: fc_units, activation: Activation::Relu }));
    layers.push(named("drop1", LayerSpec::Dropout { p: dropout_p }));
    layers.push(named("fc2", LayerSpec::Dense { units: fc_units, activation: Activation::Relu }));
    layers.push(named("drop2", LayerSpec::Dropout { p: dropout_p }));
    layers.push(named("out", LayerSpec::SoftmaxOutput { classes: num_classes }));
    let graph = NetworkGraph { window_len, channels, num_classes, topology: Topology::Sequential { layers } };
    graph.param_shapes()?;
    Ok(graph)
}

/// Limb-branch network. Each present limb gets conv×4 → flatten → fc →
/// dropout over its own columns; branch outputs are concatenated and fed to
/// fc → dropout → softmax.
pub fn build_tcnn_imu(
    layout: &BranchLayout,
    window_len: usize,
    num_classes: usize,
    branch_units: usize,
    fusion_units: usize,
    dropout_p: f64,
) -> Result<NetworkGraph, ArchError> {
    check_window(window_len)?;
    let present: Vec<&(Limb, Vec<usize>)> = layout.iter().filter(|(_, c)| !c.is_empty()).collect();
    if present.is_empty() {
        return Err(ArchError::NoBranches);
    }
    let channels = present.iter().flat_map(|(_, c)| c.iter()).max().map_or(0, |m| m + 1);
    let branches = present
        .into_iter()
        .map(|(limb, cols)| {
            let mut layers = conv_stack();
            layers.push(named("flatten", LayerSpec::Flatten));
            layers.push(named("fc", LayerSpec::Dense { units: branch_units, activation: Activation::Relu }));
            layers.push(named("drop", LayerSpec::Dropout { p: dropout_p }));
            Branch { limb: *limb, channels: cols.clone(), layers }
        })
        .collect();
    let fusion = vec![
        named("fc", LayerSpec::Dense { units: fusion_units, activation: Activation::Relu }),
        named("drop", LayerSpec::Dropout { p: dropout_p }),
        named("out", LayerSpec::SoftmaxOutput { classes: num_classes }),
    ];
    let graph =
        NetworkGraph { window_len, channels, num_classes, topology: Topology::BranchFusion { branches, fusion } };
    graph.param_shapes()?;
    Ok(graph)
}

/// Orthonormal weights and zero biases, drawn in [`NetworkGraph::param_shapes`] order.
pub fn init_params<R: Rng + ?Sized>(graph: &NetworkGraph, rng: &mut R) -> Result<ParamSet<f32>, ArchError> {
    let mut params = ParamSet::new();
    for (key, shape) in graph.param_shapes()? {
        let t = if key.ends_with(".W") { orthonormal_init(&shape, rng)? } else { Tensor::zeros(&shape) };
        params.insert(key, t)?;
    }
    Ok(params)
}

/// Checks that a parameter set has exactly the graph's keys and shapes.
pub fn check_params(graph: &NetworkGraph, params: &ParamSet<f32>) -> Result<(), ArchError> {
    let shapes = graph.param_shapes()?;
    if shapes.len() != params.len() {
        return Err(ArchError::Invalid(format!(
            "graph has {} tensors, parameter set has {}",
            shapes.len(),
            params.len()
        )));
    }
    for (key, shape) in shapes {
        let t = params.get(&key)?;
        if t.shape() != shape.as_slice() {
            return Err(ArchError::Invalid(format!("`{key}` has shape {:?}, graph expects {shape:?}", t.shape())));
        }
    }
    Ok(())
}

fn describe_stack(
    title: &str,
    prefix: &str,
    layers: &[NamedLayer],
    input: &[usize],
    table: &mut String,
) -> Result<(usize, Vec<usize>), ArchError> {
    let mut shape = input.to_vec();
    let mut shapes = Vec::new();
    stack_shapes(prefix, layers, input, &mut shapes)?;
    let mut total = 0;
    let _ = writeln!(table, "[{title}] input {input:?}");
    for l in layers {
        shape = layer_output_shape(&l.name, &l.spec, &shape)?;
        let count: usize = shapes
            .iter()
            .filter(|(k, _)| {
                k.strip_prefix(prefix).and_then(|r| r.strip_prefix(&l.name)).is_some_and(|r| r.starts_with('.'))
            })
            .map(|(_, s)| s.iter().product::<usize>())
            .sum();
        total += count;
        let kind = match &l.spec {
            LayerSpec::TemporalConv { filters, kernel, .. } => {
                format!("conv {filters}x[{},{}] relu", kernel[0], kernel[1])
            }
            LayerSpec::Flatten => "flatten".into(),
            LayerSpec::Dense { units, activation } => {
                format!("dense {units}{}", if *activation == Activation::Relu { " relu" } else { "" })
            }
            LayerSpec::Dropout { p } => format!("dropout p={p}"),
            LayerSpec::SoftmaxOutput { classes } => format!("softmax {classes}"),
        };
        let _ = writeln!(
            table,
            "  {:<22} {:<22} {:<16} {:>10}",
            format!("{prefix}{}", l.name),
            kind,
            format!("{shape:?}"),
            count
        );
    }
    Ok((total, shape))
}

/// Human-readable layer table with output shapes and parameter counts.
pub fn describe(graph: &NetworkGraph) -> Result<String, ArchError> {
    let mut table = String::new();
    let _ = writeln!(table, "  {:<22} {:<22} {:<16} {:>10}", "layer", "kind", "output", "params");
    let total = match &graph.topology {
        Topology::Sequential { layers } => {
            describe_stack("tcnn", "", layers, &[graph.window_len, graph.channels, 1], &mut table)?.0
        }
        Topology::BranchFusion { branches, fusion } => {
            let mut total = 0;
            let mut concat = 0;
            for b in branches {
                let (n, out) = describe_stack(
                    &format!("branch {} columns {:?}", b.limb, b.channels),
                    &branch_prefix(b.limb),
                    &b.layers,
                    &[graph.window_len, b.channels.len(), 1],
                    &mut table,
                )?;
                total += n;
                concat += out.iter().product::<usize>();
            }
            total + describe_stack("fusion", "fusion.", fusion, &[concat], &mut table)?.0
        }
    };
    let _ = writeln!(table, "total parameters: {total}");
    Ok(table)
}
