//! Model artifact: a magic line, one JSON header line, then the parameter
//! payload as little-endian f64 values guarded by a SHA-256 digest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{ForestModel, LogRegModel, TreeModel};
use crate::error::{Error, Result};
use crate::neural::{InputEncoding, InputSpec, LayerSpec, ModelGraph};
use crate::pipeline::{ModelBody, StageModel, StagePlan, TrainingProvenance};
use crate::schema::{Role, Schema, VariableSpec};
use crate::tensor::Matrix;

pub const FORMAT_NAME: &str = "catcast-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum BodyHeader {
    Neural {
        input: InputSpec,
        trunk: Vec<LayerSpec>,
        init_seed: u64,
        params: Vec<ParamHeader>,
    },
    Logreg {
        width: usize,
        classes: usize,
    },
    Tree {
        tree: TreeModel,
    },
    Forest {
        forest: ForestModel,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    plan: StagePlan,
    schema: Schema,
    encoding: InputEncoding,
    body: BodyHeader,
    provenance: TrainingProvenance,
    payload_bytes: u64,
    sha256: String,
}

fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_f64s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect()
}

/// Serializes a stage model to bytes.
pub fn encode_model(model: &StageModel) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    let body = match &model.body {
        ModelBody::Neural(g) => {
            for p in g.params() {
                push_f64s(&mut payload, &p.data);
            }
            BodyHeader::Neural {
                input: g.input().clone(),
                trunk: g.trunk().to_vec(),
                init_seed: g.seed(),
                params: g
                    .params()
                    .iter()
                    .map(|p| ParamHeader {
                        name: p.name.clone(),
                        shape: p.shape.clone(),
                    })
                    .collect(),
            }
        }
        ModelBody::LogReg(m) => {
            push_f64s(&mut payload, m.weights.as_slice());
            push_f64s(&mut payload, &m.bias);
            BodyHeader::Logreg {
                width: m.width(),
                classes: m.classes(),
            }
        }
        ModelBody::Tree(t) => BodyHeader::Tree { tree: t.clone() },
        ModelBody::Forest(f) => BodyHeader::Forest { forest: f.clone() },
    };
    let mut variables: Vec<VariableSpec> = model
        .plan
        .inputs
        .iter()
        .zip(&model.input_vocabularies)
        .map(|(name, v)| VariableSpec {
            name: name.clone(),
            role: Role::Input,
            vocabulary: v.clone(),
        })
        .collect();
    variables.push(VariableSpec {
        name: model.plan.target.clone(),
        role: Role::Target,
        vocabulary: model.target_vocabulary.clone(),
    });
    let header = Header {
        version: FORMAT_VERSION,
        plan: model.plan.clone(),
        schema: Schema::new(variables)?,
        encoding: model.encoding,
        body,
        provenance: model.provenance.clone(),
        payload_bytes: payload.len() as u64,
        sha256: hex::encode(Sha256::digest(&payload)),
    };
    let json = serde_json::to_string(&header)
        .map_err(|e| Error::format(format!("cannot serialize header: {e}")))?;
    let mut out = format!("{FORMAT_NAME} {FORMAT_VERSION}\n{json}\n").into_bytes();
    out.extend_from_slice(&payload);
    Ok(out)
}

fn split_line(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format("truncated model artifact: missing header line"))?;
    Ok((&bytes[..nl], &bytes[nl + 1..]))
}

/// Parses bytes produced by [`encode_model`].
pub fn decode_model(bytes: &[u8]) -> Result<StageModel> {
    let (magic, rest) = split_line(bytes)?;
    let magic = std::str::from_utf8(magic).map_err(|_| Error::format("not a model artifact"))?;
    let version = match magic.split_once(' ') {
        Some((FORMAT_NAME, v)) => v
            .parse::<u32>()
            .map_err(|_| Error::format(format!("bad version field {v:?}")))?,
        _ => return Err(Error::format("not a model artifact")),
    };
    if version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "unsupported artifact version {version}; expected {FORMAT_VERSION}"
        )));
    }
    let (json, payload) = split_line(rest)?;
    let header: Header = serde_json::from_slice(json)
        .map_err(|e| Error::format(format!("malformed artifact header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "unsupported artifact version {}",
            header.version
        )));
    }
    if payload.len() as u64 != header.payload_bytes {
        return Err(Error::format(format!(
            "truncated model artifact: payload has {} bytes, header declares {}",
            payload.len(),
            header.payload_bytes
        )));
    }
    if hex::encode(Sha256::digest(payload)) != header.sha256 {
        return Err(Error::format("model artifact checksum mismatch"));
    }
    let values = read_f64s(payload);
    let body = match header.body {
        BodyHeader::Neural {
            input,
            trunk,
            init_seed,
            params,
        } => {
            let mut graph = ModelGraph::new(input, trunk)?;
            let mut arrays = Vec::with_capacity(params.len());
            let mut offset = 0;
            for p in &params {
                let size: usize = p.shape.iter().product();
                let end = offset + size;
                if end > values.len() {
                    return Err(Error::format(
                        "parameter payload shorter than declared shapes",
                    ));
                }
                arrays.push(values[offset..end].to_vec());
                offset = end;
            }
            if offset != values.len() {
                return Err(Error::format(
                    "parameter payload longer than declared shapes",
                ));
            }
            graph.replace_params(arrays)?;
            graph.set_seed(init_seed);
            ModelBody::Neural(graph)
        }
        BodyHeader::Logreg { width, classes } => {
            if values.len() != width * classes + classes {
                return Err(Error::format(
                    "logistic regression payload does not match its shape",
                ));
            }
            let bias = values[width * classes..].to_vec();
            let weights = Matrix::from_vec(width, classes, values[..width * classes].to_vec());
            ModelBody::LogReg(LogRegModel { weights, bias })
        }
        BodyHeader::Tree { tree } => ModelBody::Tree(tree),
        BodyHeader::Forest { forest } => ModelBody::Forest(forest),
    };
    let schema = header.schema;
    let input_vocabularies = header
        .plan
        .inputs
        .iter()
        .map(|n| schema.variable(n).map(|v| v.vocabulary.clone()))
        .collect::<Result<Vec<_>>>()?;
    let target_vocabulary = schema.variable(&header.plan.target)?.vocabulary.clone();
    Ok(StageModel {
        plan: header.plan,
        input_vocabularies,
        target_vocabulary,
        encoding: header.encoding,
        body,
        provenance: header.provenance,
    })
}

pub fn save_model(model: &StageModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<StageModel> {
    decode_model(&fs::read(path)?)
}
