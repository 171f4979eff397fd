//! Stage wiring, stage models, teacher-forced and chained evaluation, top-k metrics.

mod evaluate;
mod metrics;
mod model;
mod plan;

pub use evaluate::{
    chain_predict, evaluate_stage, Candidate, EvalMode, StagePrediction, StageReport,
};
pub use metrics::{rank_of, top_k, topk_accuracy, topk_hits};
pub use model::{
    fit_stage, FitOutcome, ModelBody, ModelChoice, StageModel, StagePredictor, TrainingProvenance,
};
pub use plan::{build_stage_plan, StagePlan, STAGES};
