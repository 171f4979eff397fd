use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    /// `clamp(0.2 x + 0.5, 0, 1)`
    HardSigmoid,
    Identity,
}

impl Activation {
    pub const SEARCHABLE: [Activation; 4] = [
        Activation::Relu,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::HardSigmoid,
    ];

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::HardSigmoid => (0.2 * z + 0.5).clamp(0.0, 1.0),
            Activation::Identity => z,
        }
    }

    /// Derivative at pre-activation `z` with output `a`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::HardSigmoid => {
                let s = 0.2 * z + 0.5;
                if s > 0.0 && s < 1.0 {
                    0.2
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::HardSigmoid => "hard_sigmoid",
            Activation::Identity => "identity",
        };
        f.write_str(s)
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "hard_sigmoid" | "hardsigmoid" => Ok(Activation::HardSigmoid),
            "identity" | "linear" => Ok(Activation::Identity),
            _ => Err(Error::config(format!("unknown activation {s:?}"))),
        }
    }
}

/// One entity-embedding table: a trainable `rows x dim` lookup.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub variable: String,
    /// Vocabulary cardinality + 1 (row 0 embeds UNK).
    pub rows: usize,
    pub dim: usize,
}

/// What the trunk is fed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSpec {
    /// One index per variable; looked-up vectors are concatenated.
    Embeddings { tables: Vec<EmbeddingSpec> },
    /// An already-encoded real feature vector.
    Dense { width: usize },
}

impl InputSpec {
    pub fn output_width(&self) -> usize {
        match self {
            InputSpec::Embeddings { tables } => tables.iter().map(|t| t.dim).sum(),
            InputSpec::Dense { width } => *width,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        units: usize,
        activation: Activation,
    },
    /// Valid padding, stride 1. A flat input is read as a 1-channel sequence.
    Conv1d {
        filters: usize,
        kernel: usize,
        activation: Activation,
    },
    MaxPool1d {
        size: usize,
    },
    Dropout {
        rate: f64,
    },
    Flatten,
    SoftmaxOutput {
        classes: usize,
    },
}

/// Per-sample activation shape. Memory layout is position-major either way.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Flat(usize),
    Seq { len: usize, channels: usize },
}

impl Shape {
    pub fn size(self) -> usize {
        match self {
            Shape::Flat(n) => n,
            Shape::Seq { len, channels } => len * channels,
        }
    }
}

/// A layer with its shapes resolved and parameter slots assigned.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Layer {
    Dense {
        n_in: usize,
        n_out: usize,
        act: Activation,
        w: usize,
        b: usize,
    },
    Conv1d {
        len: usize,
        in_ch: usize,
        filters: usize,
        kernel: usize,
        act: Activation,
        w: usize,
        b: usize,
    },
    MaxPool {
        len: usize,
        channels: usize,
        size: usize,
    },
    Dropout {
        rate: f64,
    },
    Flatten,
    Output {
        n_in: usize,
        classes: usize,
        w: usize,
        b: usize,
    },
}

#[cfg(test)]
impl Layer {
    pub(crate) fn output_width(&self, input: usize) -> usize {
        match *self {
            Layer::Dense { n_out, .. } => n_out,
            Layer::Conv1d {
                len,
                filters,
                kernel,
                ..
            } => (len - kernel + 1) * filters,
            Layer::MaxPool {
                len,
                channels,
                size,
            } => (len / size) * channels,
            Layer::Dropout { .. } | Layer::Flatten => input,
            Layer::Output { classes, .. } => classes,
        }
    }
}

/// Parameter slot requested by a layer: (name, shape).
pub(crate) type ParamRequest = (String, Vec<usize>);

/// Resolves shapes through the trunk; returns resolved layers and the
/// parameter shapes they need (slot numbers start at `first_slot`).
pub(crate) fn resolve(
    input_width: usize,
    trunk: &[LayerSpec],
    first_slot: usize,
) -> Result<(Vec<Layer>, Vec<ParamRequest>)> {
    if input_width == 0 {
        return Err(Error::config("model input has zero width"));
    }
    match trunk.last() {
        Some(LayerSpec::SoftmaxOutput { .. }) => {}
        _ => return Err(Error::config("trunk must end with a softmax output layer")),
    }
    let mut shape = Shape::Flat(input_width);
    let mut layers = Vec::with_capacity(trunk.len());
    let mut params: Vec<ParamRequest> = Vec::new();
    for (i, spec) in trunk.iter().enumerate() {
        let slot = first_slot + params.len();
        let layer = match *spec {
            LayerSpec::Dense { units, activation } => {
                if units == 0 {
                    return Err(Error::config(format!(
                        "layer {i}: dense needs at least one unit"
                    )));
                }
                let n_in = match shape {
                    Shape::Flat(n) => n,
                    Shape::Seq { .. } => {
                        return Err(Error::config(format!(
                            "layer {i}: dense after a sequence needs flatten"
                        )))
                    }
                };
                params.push((format!("layer{i}.dense.weight"), vec![n_in, units]));
                params.push((format!("layer{i}.dense.bias"), vec![units]));
                shape = Shape::Flat(units);
                Layer::Dense {
                    n_in,
                    n_out: units,
                    act: activation,
                    w: slot,
                    b: slot + 1,
                }
            }
            LayerSpec::Conv1d {
                filters,
                kernel,
                activation,
            } => {
                if filters == 0 || kernel == 0 {
                    return Err(Error::config(format!(
                        "layer {i}: conv1d filters and kernel must be >= 1"
                    )));
                }
                let (len, in_ch) = match shape {
                    Shape::Flat(n) => (n, 1),
                    Shape::Seq { len, channels } => (len, channels),
                };
                if kernel > len {
                    return Err(Error::config(format!(
                        "layer {i}: conv1d kernel {kernel} longer than sequence of length {len}"
                    )));
                }
                params.push((
                    format!("layer{i}.conv1d.weight"),
                    vec![kernel, in_ch, filters],
                ));
                params.push((format!("layer{i}.conv1d.bias"), vec![filters]));
                shape = Shape::Seq {
                    len: len - kernel + 1,
                    channels: filters,
                };
                Layer::Conv1d {
                    len,
                    in_ch,
                    filters,
                    kernel,
                    act: activation,
                    w: slot,
                    b: slot + 1,
                }
            }
            LayerSpec::MaxPool1d { size } => {
                let (len, channels) = match shape {
                    Shape::Seq { len, channels } => (len, channels),
                    Shape::Flat(_) => {
                        return Err(Error::config(format!(
                            "layer {i}: max-pooling needs a sequence input"
                        )))
                    }
                };
                if size == 0 || size > len {
                    return Err(Error::config(format!(
                        "layer {i}: pool size {size} invalid for sequence of length {len}"
                    )));
                }
                shape = Shape::Seq {
                    len: len / size,
                    channels,
                };
                Layer::MaxPool {
                    len,
                    channels,
                    size,
                }
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::config(format!(
                        "layer {i}: dropout rate {rate} outside [0, 1)"
                    )));
                }
                Layer::Dropout { rate }
            }
            LayerSpec::Flatten => {
                shape = Shape::Flat(shape.size());
                Layer::Flatten
            }
            LayerSpec::SoftmaxOutput { classes } => {
                if i + 1 != trunk.len() {
                    return Err(Error::config("softmax output must be the last layer"));
                }
                if classes == 0 {
                    return Err(Error::config("softmax output needs at least one class"));
                }
                let n_in = shape.size();
                params.push((format!("layer{i}.output.weight"), vec![n_in, classes]));
                params.push((format!("layer{i}.output.bias"), vec![classes]));
                Layer::Output {
                    n_in,
                    classes,
                    w: slot,
                    b: slot + 1,
                }
            }
        };
        layers.push(layer);
    }
    Ok((layers, params))
}
