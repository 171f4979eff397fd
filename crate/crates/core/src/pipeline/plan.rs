use serde::{Deserialize, Serialize};

use crate::columns::{STAGE1_INPUTS, STAGE_TARGETS};
use crate::error::{Error, Result};
use crate::schema::Schema;

/// Inputs and target of one stage. Each stage adds the previous target to its inputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stage: u8,
    pub inputs: Vec<String>,
    pub target: String,
    pub target_cardinality: usize,
}

pub const STAGES: [u8; 3] = [1, 2, 3];

pub fn build_stage_plan(stage: u8, schema: &Schema) -> Result<StagePlan> {
    if !STAGES.contains(&stage) {
        return Err(Error::config(format!(
            "unknown stage {stage}; expected 1, 2 or 3"
        )));
    }
    let s = stage as usize;
    let inputs: Vec<String> = STAGE1_INPUTS
        .iter()
        .chain(&STAGE_TARGETS[..s - 1])
        .map(|v| v.to_string())
        .collect();
    for v in &inputs {
        schema.position(v)?;
    }
    let target = STAGE_TARGETS[s - 1].to_string();
    let target_cardinality = schema.variable(&target)?.cardinality();
    Ok(StagePlan {
        stage,
        inputs,
        target,
        target_cardinality,
    })
}
