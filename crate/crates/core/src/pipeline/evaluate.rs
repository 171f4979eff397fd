use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Provenance, Table, UNK};

use super::metrics::{top_k, topk_hits};
use super::model::{model_inputs, model_labels, StagePredictor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Parent inputs come from the table.
    TeacherForced,
    /// Parent inputs are the upstream stages' Top1 predictions.
    Chained,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::TeacherForced => "teacher_forced",
            EvalMode::Chained => "chained",
        })
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "teacher" | "teacher_forced" | "teacher-forced" => Ok(EvalMode::TeacherForced),
            "chained" | "chain" => Ok(EvalMode::Chained),
            _ => Err(Error::config(format!("unknown evaluation mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: u8,
    pub target: String,
    pub mode: EvalMode,
    pub top1: f64,
    pub top2: f64,
    pub top3: f64,
    pub n_evaluated: usize,
    /// Rows whose true target is outside the model's vocabulary (scored as misses).
    pub n_unknown_targets: usize,
    pub data: Provenance,
}

/// Top1 category string of every row, for each upstream stage in order.
fn chained_parents(
    table: &Table,
    rows: &[usize],
    upstream: &[&dyn StagePredictor],
) -> Result<Vec<(String, Vec<String>)>> {
    let mut overrides: Vec<(String, Vec<String>)> = Vec::new();
    for up in upstream {
        let probs = up.predict_proba(&model_inputs(*up, table, rows, &overrides)?)?;
        let vocab = up.target_vocabulary();
        let values = (0..rows.len())
            .map(|i| {
                let c = top_k(probs.row(i), 1)[0];
                vocab.decode(c as u32 + 1).unwrap_or_default().to_owned()
            })
            .collect();
        overrides.push((up.plan().target.clone(), values));
    }
    Ok(overrides)
}

fn check_upstream(stage: u8, upstream: &[&dyn StagePredictor]) -> Result<()> {
    let needed = stage as usize - 1;
    if upstream.len() < needed {
        return Err(Error::config(format!(
            "chained evaluation of stage {stage} needs models for stages 1..{}",
            stage - 1
        )));
    }
    for (i, up) in upstream[..needed].iter().enumerate() {
        if up.plan().stage as usize != i + 1 {
            return Err(Error::config(format!(
                "upstream model {} is for stage {}, expected stage {}",
                i + 1,
                up.plan().stage,
                i + 1
            )));
        }
    }
    Ok(())
}

/// Top1/2/3 of `model` on `rows`. Chained mode needs `upstream[s - 1]` for every stage `s` before this one.
pub fn evaluate_stage(
    model: &dyn StagePredictor,
    table: &Table,
    rows: &[usize],
    mode: EvalMode,
    upstream: &[&dyn StagePredictor],
) -> Result<StageReport> {
    if rows.is_empty() {
        return Err(Error::data("no rows to evaluate"));
    }
    let plan = model.plan();
    let overrides = match mode {
        EvalMode::TeacherForced => Vec::new(),
        EvalMode::Chained => {
            check_upstream(plan.stage, upstream)?;
            chained_parents(table, rows, &upstream[..plan.stage as usize - 1])?
        }
    };
    let probs = model.predict_proba(&model_inputs(model, table, rows, &overrides)?)?;
    let labels = model_labels(model, table, rows)?;
    let classes = probs.cols();
    let n = rows.len() as f64;
    let mut top = [0.0; 3];
    for (k, t) in top.iter_mut().enumerate() {
        *t = topk_hits(&probs, &labels, (k + 1).min(classes))? as f64 / n;
    }
    Ok(StageReport {
        stage: plan.stage,
        target: plan.target.clone(),
        mode,
        top1: top[0],
        top2: top[1],
        top3: top[2],
        n_evaluated: rows.len(),
        n_unknown_targets: labels.iter().filter(|l| l.is_none()).count(),
        data: table.provenance(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub category: String,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagePrediction {
    pub stage: u8,
    pub target: String,
    /// Up to three categories, most probable first.
    pub candidates: Vec<Candidate>,
    /// Inputs whose value was unseen in training and went through UNK.
    pub unknown_inputs: Vec<String>,
}

/// Runs the stages in order on one record; each stage's Top1 becomes an input of the next.
pub fn chain_predict(
    record: &BTreeMap<String, String>,
    models: &[&dyn StagePredictor],
) -> Result<Vec<StagePrediction>> {
    if models.is_empty() {
        return Err(Error::config("no stage models supplied"));
    }
    check_upstream(models.len() as u8 + 1, models)?;
    let mut values = record.clone();
    let mut out = Vec::with_capacity(models.len());
    for model in models {
        let plan = model.plan();
        let mut row = Vec::with_capacity(plan.inputs.len());
        let mut unknown_inputs = Vec::new();
        for (name, vocab) in plan.inputs.iter().zip(model.input_vocabularies()) {
            let value = values
                .get(name)
                .ok_or_else(|| Error::schema(format!("record is missing input variable {name}")))?;
            let idx = vocab.lookup(value);
            if idx == UNK {
                unknown_inputs.push(name.clone());
            }
            row.push(idx);
        }
        let probs = model.predict_proba(&row)?;
        let vocab = model.target_vocabulary();
        let candidates: Vec<Candidate> = top_k(probs.row(0), 3)
            .into_iter()
            .map(|c| Candidate {
                category: vocab.decode(c as u32 + 1).unwrap_or_default().to_owned(),
                probability: probs.row(0)[c],
            })
            .collect();
        values.insert(plan.target.clone(), candidates[0].category.clone());
        out.push(StagePrediction {
            stage: plan.stage,
            target: plan.target.clone(),
            candidates,
            unknown_inputs,
        });
    }
    Ok(out)
}
