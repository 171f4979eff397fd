//! Default stage architectures and the knobs that override them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::columns::{
    COUNTRY_ORIGIN, DATE_MONTH, DISTRIBUTION_STATUS, HAZARD_CATEGORY, NOTIFICATION_COUNTRY,
    PRODUCT_CATEGORY,
};
use crate::encoders::EncodingScheme;
use crate::error::{Error, Result};
use crate::pipeline::{build_stage_plan, StagePlan};
use crate::schema::{Schema, Vocabulary};

use super::graph::ModelGraph;
use super::layers::{resolve, Activation, EmbeddingSpec, InputSpec, LayerSpec};

pub const DEFAULT_DROPOUT: f64 = 0.2;
pub const MLP_HIDDEN: [usize; 3] = [2048, 1024, 512];
pub const CONV_HIDDEN: [usize; 2] = [512, 256];
pub const CONV_BLOCKS: [ConvBlock; 2] = [
    ConvBlock {
        filters: 128,
        kernel: 4,
        pool: 2,
    },
    ConvBlock {
        filters: 256,
        kernel: 3,
        pool: 2,
    },
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Mlp,
    Conv1d,
}

impl Family {
    /// Family used for a stage when none is requested.
    pub fn stage_default(stage: u8) -> Family {
        if stage == 2 {
            Family::Conv1d
        } else {
            Family::Mlp
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Mlp => "mlp",
            Family::Conv1d => "conv1d",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(Family::Mlp),
            "conv1d" | "conv" | "cnn" => Ok(Family::Conv1d),
            _ => Err(Error::config(format!("unknown model family {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvBlock {
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
}

/// How categorical inputs reach the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputEncoding {
    Embedding,
    Classical(EncodingScheme),
}

impl fmt::Display for InputEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputEncoding::Embedding => f.write_str("embedding"),
            InputEncoding::Classical(s) => s.fmt(f),
        }
    }
}

impl FromStr for InputEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "embedding" | "embeddings" => Ok(InputEncoding::Embedding),
            other => Ok(InputEncoding::Classical(other.parse()?)),
        }
    }
}

/// Published embedding width of a register variable; a capped half-cardinality otherwise.
pub fn default_embedding_dim(variable: &str, cardinality: usize) -> usize {
    match variable {
        DATE_MONTH => 6,
        NOTIFICATION_COUNTRY => 16,
        DISTRIBUTION_STATUS => 9,
        COUNTRY_ORIGIN => 50,
        PRODUCT_CATEGORY => 19,
        HAZARD_CATEGORY => 18,
        _ => cardinality.div_ceil(2).clamp(1, 50),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub family: Family,
    pub encoding: InputEncoding,
    /// One width per input variable; unused for classical encodings.
    pub embedding_dims: Vec<usize>,
    pub conv: Vec<ConvBlock>,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub dropout: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchOverrides {
    pub encoding: Option<InputEncoding>,
    pub embedding_dims: Option<Vec<usize>>,
    pub conv: Option<Vec<ConvBlock>>,
    pub hidden: Option<Vec<usize>>,
    pub activation: Option<Activation>,
    pub dropout: Option<f64>,
}

impl Architecture {
    pub fn stage_default(plan: &StagePlan, schema: &Schema, family: Family) -> Result<Self> {
        let embedding_dims = plan
            .inputs
            .iter()
            .map(|n| Ok(default_embedding_dim(n, schema.variable(n)?.cardinality())))
            .collect::<Result<Vec<_>>>()?;
        let (conv, hidden) = match family {
            Family::Mlp => (Vec::new(), MLP_HIDDEN.to_vec()),
            Family::Conv1d => (CONV_BLOCKS.to_vec(), CONV_HIDDEN.to_vec()),
        };
        Ok(Architecture {
            family,
            encoding: InputEncoding::Embedding,
            embedding_dims,
            conv,
            hidden,
            activation: Activation::Relu,
            dropout: DEFAULT_DROPOUT,
        })
    }

    pub fn apply(mut self, o: &ArchOverrides) -> Self {
        if let Some(e) = o.encoding {
            self.encoding = e;
        }
        if let Some(d) = &o.embedding_dims {
            self.embedding_dims = d.clone();
        }
        if let Some(c) = &o.conv {
            self.conv = c.clone();
        }
        if let Some(h) = &o.hidden {
            self.hidden = h.clone();
        }
        if let Some(a) = o.activation {
            self.activation = a;
        }
        if let Some(d) = o.dropout {
            self.dropout = d;
        }
        self
    }

    pub fn trunk(&self, classes: usize) -> Vec<LayerSpec> {
        let mut trunk = Vec::new();
        if self.family == Family::Conv1d {
            for b in &self.conv {
                trunk.push(LayerSpec::Conv1d {
                    filters: b.filters,
                    kernel: b.kernel,
                    activation: self.activation,
                });
                trunk.push(LayerSpec::MaxPool1d { size: b.pool });
                if self.dropout > 0.0 {
                    trunk.push(LayerSpec::Dropout { rate: self.dropout });
                }
            }
            trunk.push(LayerSpec::Flatten);
        }
        for &units in &self.hidden {
            trunk.push(LayerSpec::Dense {
                units,
                activation: self.activation,
            });
            if self.dropout > 0.0 {
                trunk.push(LayerSpec::Dropout { rate: self.dropout });
            }
        }
        trunk.push(LayerSpec::SoftmaxOutput { classes });
        trunk
    }

    pub fn input_spec(&self, inputs: &[String], vocabularies: &[&Vocabulary]) -> Result<InputSpec> {
        match self.encoding {
            InputEncoding::Embedding => {
                if self.embedding_dims.len() != inputs.len() {
                    return Err(Error::config(format!(
                        "{} embedding widths for {} input variables",
                        self.embedding_dims.len(),
                        inputs.len()
                    )));
                }
                let tables = inputs
                    .iter()
                    .zip(vocabularies)
                    .zip(&self.embedding_dims)
                    .map(|((name, v), &dim)| EmbeddingSpec {
                        variable: name.clone(),
                        rows: v.cardinality() + 1,
                        dim,
                    })
                    .collect();
                Ok(InputSpec::Embeddings { tables })
            }
            InputEncoding::Classical(scheme) => {
                let mut width = 0;
                for v in vocabularies {
                    width += scheme.width(v.cardinality())?;
                }
                Ok(InputSpec::Dense { width })
            }
        }
    }
}

/// Checks that the architecture resolves to valid layer shapes without allocating parameters.
pub fn check_architecture(plan: &StagePlan, schema: &Schema, arch: &Architecture) -> Result<()> {
    let vocabs = plan
        .inputs
        .iter()
        .map(|n| schema.variable(n).map(|v| &v.vocabulary))
        .collect::<Result<Vec<_>>>()?;
    let input = arch.input_spec(&plan.inputs, &vocabs)?;
    resolve(
        input.output_width(),
        &arch.trunk(plan.target_cardinality),
        0,
    )
    .map(|_| ())
}

/// Builds and initializes a model for `plan` with the given architecture.
pub fn build_model(
    plan: &StagePlan,
    schema: &Schema,
    arch: &Architecture,
    seed: u64,
) -> Result<ModelGraph> {
    let vocabs = plan
        .inputs
        .iter()
        .map(|n| schema.variable(n).map(|v| &v.vocabulary))
        .collect::<Result<Vec<_>>>()?;
    let mut model = ModelGraph::new(
        arch.input_spec(&plan.inputs, &vocabs)?,
        arch.trunk(plan.target_cardinality),
    )?;
    model.init_params(seed);
    Ok(model)
}

/// The default architecture of a stage, adjusted by `overrides`.
pub fn build_stage_model(
    stage: u8,
    schema: &Schema,
    family: Family,
    overrides: &ArchOverrides,
    seed: u64,
) -> Result<ModelGraph> {
    let plan = build_stage_plan(stage, schema)?;
    let arch = Architecture::stage_default(&plan, schema, family)?.apply(overrides);
    build_model(&plan, schema, &arch, seed)
}
