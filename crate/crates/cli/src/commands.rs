//! Command implementations. Each reproducible command is a pure function of
//! its [`Invocation`] and [`RunConfig`] returning the JSON results.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use catcast_core::artifact::encode_model;
use catcast_core::baselines::{ForestConfig, LogRegConfig, TreeConfig};
use catcast_core::columns::{DATE_CASE, DATE_MONTH};
use catcast_core::ingest::{
    clean_value, make_split, parse_date, preprocess, synth_generate, table_to_raw, Cardinalities,
    GeneratorConfig, GeneratorSpec, RenameMap,
};
use catcast_core::neural::{
    build_stage_model, grad_check, load_model, resolvable, Activation, ArchOverrides, Architecture,
    Batch, ConvBlock, EpochRecord, Family, GradCheckReport, TrainConfig,
};
use catcast_core::pipeline::{
    build_stage_plan, chain_predict, evaluate_stage, fit_stage, EvalMode, ModelChoice, StageModel,
    StagePlan, StagePrediction, StagePredictor, StageReport,
};
use catcast_core::rng::{derive_seed, seeded};
use catcast_core::schema::{Provenance, Schema};
use catcast_core::search::{run_search_with, ConfigRecord, SearchData, SearchOptions, SearchTrace};
use rand::Rng;

use crate::args::{Format, GradcheckArgs, IngestArgs, PredictArgs, StageSel, SynthArgs};
use crate::config::{ModelKind, RunConfig};
use crate::data::{
    index_table, load_dataset, meta_path, read_meta, read_raw, write_json, write_raw, DatasetMeta,
    RowSet, StoredSplit, SPLIT_FILE, TABLE_FILE,
};
use crate::report::{parse_trace, Invocation, Report, TraceLine, TOOL, VERSION};

/// Bad arguments or inputs the user can fix; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A re-run whose results differ from the recorded ones; exits with status 3.
#[derive(Debug)]
pub struct ReproduceMismatch(pub String);

impl std::fmt::Display for ReproduceMismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "results differ from the recorded run: {}", self.0)
    }
}

impl std::error::Error for ReproduceMismatch {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn artifact_name(stage: u8) -> String {
    format!("stage{stage}.model")
}

// ---------------------------------------------------------------- ingest / synth

#[derive(Debug, Serialize)]
pub struct IngestSummary {
    pub stats: catcast_core::ingest::PreprocessStats,
    pub rows_in_range: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

pub fn ingest(config: &RunConfig, a: &IngestArgs) -> Result<IngestSummary> {
    let renames = match &a.renames {
        Some(p) => {
            RenameMap::from_csv(File::open(p).with_context(|| format!("opening {}", p.display()))?)?
        }
        None => RenameMap::default(),
    };
    let meta = read_meta(&a.input)?;
    let (clean, stats) = preprocess(&read_raw(&a.input)?, &renames)?;
    let table = index_table(&clean, meta.provenance, &config.split)?;
    let plan = make_split(&table, config.split.test_year, config.seed)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let csv = a.out.join(TABLE_FILE);
    write_raw(&clean, &csv)?;
    write_json(&meta, &meta_path(&csv))?;
    let summary = IngestSummary {
        stats,
        rows_in_range: table.n_rows(),
        train: plan.train.len(),
        validation: plan.validation.len(),
        test: plan.test.len(),
    };
    write_json(
        &StoredSplit {
            settings: config.split.clone(),
            plan,
        },
        &a.out.join(SPLIT_FILE),
    )?;
    Ok(summary)
}

pub fn synth(a: &SynthArgs) -> Result<usize> {
    let text = std::fs::read_to_string(&a.spec)
        .with_context(|| format!("reading {}", a.spec.display()))?;
    let spec = GeneratorConfig::from_toml(&text)?.into_spec()?;
    let table = synth_generate(&spec, a.rows)?;
    write_raw(&table_to_raw(&table), &a.out)?;
    write_json(
        &DatasetMeta {
            provenance: Provenance::Synthetic,
            generator: Some(spec),
        },
        &meta_path(&a.out),
    )?;
    Ok(table.n_rows())
}

// ---------------------------------------------------------------- train

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedStage {
    pub stage: u8,
    pub target: String,
    pub artifact: String,
    pub sha256: String,
    pub choice: ModelChoice,
    pub history: Vec<EpochRecord>,
    pub validation: Option<StageReport>,
}

/// The model a run configuration asks for at `stage`.
pub fn model_choice(config: &RunConfig, plan: &StagePlan, schema: &Schema) -> Result<ModelChoice> {
    let m = &config.model;
    let t = &config.train;
    let seed = derive_seed(config.seed, plan.stage as u64);
    if let Some(family) = m.kind.family(plan.stage) {
        let overrides = ArchOverrides {
            encoding: Some(m.neural_encoding()?),
            embedding_dims: m.embedding_dims.clone(),
            conv: m.conv.clone(),
            hidden: m.hidden.clone(),
            activation: m.activation,
            dropout: m.dropout,
        };
        let arch = Architecture::stage_default(plan, schema, family)?.apply(&overrides);
        let train = TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate.unwrap_or(0.001),
            optimizer: t.optimizer,
            seed,
        };
        return Ok(ModelChoice::Neural { arch, train });
    }
    let encoding = m.baseline_encoding()?;
    Ok(match m.kind {
        ModelKind::Logreg => ModelChoice::Logreg {
            encoding,
            config: LogRegConfig {
                epochs: t.epochs,
                batch_size: t.batch_size,
                learning_rate: t.learning_rate.unwrap_or(0.1),
                seed,
            },
        },
        ModelKind::Tree => ModelChoice::Tree {
            encoding,
            config: TreeConfig {
                max_depth: m.max_depth,
                min_samples: m.min_samples,
            },
        },
        ModelKind::Forest => ModelChoice::Forest {
            encoding,
            config: ForestConfig {
                n_trees: m.n_trees,
                max_depth: m.max_depth,
                min_samples: m.min_samples,
                bootstrap: true,
                max_features: m.max_features,
                seed,
            },
        },
        _ => unreachable!("network kinds handled above"),
    })
}

pub fn train(
    config: &RunConfig,
    data: &Path,
    stage: StageSel,
    out: &Path,
) -> Result<Vec<TrainedStage>> {
    let ds = load_dataset(data, &config.split, config.seed)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut results = Vec::new();
    for s in stage.stages() {
        let plan = build_stage_plan(s, ds.table.schema())?;
        let choice = model_choice(config, &plan, ds.table.schema())?;
        let fitted = fit_stage(
            &ds.table,
            &ds.split.train,
            &ds.split.validation,
            &plan,
            &choice,
        )
        .with_context(|| format!("training stage {s}"))?;
        let validation = if ds.split.validation.is_empty() {
            None
        } else {
            Some(evaluate_stage(
                &fitted.model,
                &ds.table,
                &ds.split.validation,
                EvalMode::TeacherForced,
                &[],
            )?)
        };
        let bytes = encode_model(&fitted.model)?;
        let name = artifact_name(s);
        let path = out.join(&name);
        std::fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
        results.push(TrainedStage {
            stage: s,
            target: plan.target.clone(),
            artifact: name,
            sha256: hex::encode(Sha256::digest(&bytes)),
            choice,
            history: fitted.history,
            validation,
        });
    }
    Ok(results)
}

// ---------------------------------------------------------------- evaluate

/// Loads artifacts keyed by stage; duplicates are rejected.
pub fn load_stage_models(paths: &[PathBuf]) -> Result<BTreeMap<u8, StageModel>> {
    let mut models = BTreeMap::new();
    for p in paths {
        let m = load_model(p).with_context(|| format!("loading {}", p.display()))?;
        let stage = m.plan.stage;
        if models.insert(stage, m).is_some() {
            return Err(usage(format!(
                "more than one model given for stage {stage}"
            )));
        }
    }
    Ok(models)
}

pub fn evaluate(
    config: &RunConfig,
    data: &Path,
    stage: StageSel,
    mode: EvalMode,
    model_paths: &[PathBuf],
    rows: RowSet,
) -> Result<Vec<StageReport>> {
    let models = load_stage_models(model_paths)?;
    let stages = match stage {
        StageSel::All => models.keys().copied().collect(),
        StageSel::One(s) => vec![s],
    };
    let ds = load_dataset(data, &config.split, config.seed)?;
    let mut reports = Vec::new();
    for s in stages {
        let model = models
            .get(&s)
            .ok_or_else(|| usage(format!("no model given for stage {s}")))?;
        let upstream: Vec<&dyn StagePredictor> = match mode {
            EvalMode::TeacherForced => Vec::new(),
            EvalMode::Chained => (1..s)
                .map(|u| {
                    models
                        .get(&u)
                        .map(|m| m as &dyn StagePredictor)
                        .ok_or_else(|| {
                            usage(format!(
                                "chained evaluation of stage {s} needs a stage {u} model"
                            ))
                        })
                })
                .collect::<Result<_>>()?,
        };
        reports.push(evaluate_stage(
            model,
            &ds.table,
            ds.rows(rows),
            mode,
            &upstream,
        )?);
    }
    Ok(reports)
}

// ---------------------------------------------------------------- grid search

/// Runs the search on the training rows, streaming each scored configuration.
pub fn gridsearch(
    config: &RunConfig,
    data: &Path,
    stage: u8,
    progress: &mut dyn FnMut(&ConfigRecord),
) -> Result<SearchTrace> {
    let ds = load_dataset(data, &config.split, config.seed)?;
    let plan = build_stage_plan(stage, ds.table.schema())?;
    let grid = config.search.grid()?;
    let options = SearchOptions {
        k: config.search.k,
        seed: config.seed,
        budget: config.search.budget,
    };
    let search = SearchData {
        table: &ds.table,
        rows: &ds.split.train,
        plan: &plan,
        encoding: config.model.neural_encoding()?,
    };
    Ok(run_search_with(&grid, search, &options, progress)?)
}

/// Trace summary: everything in the trace except the per-configuration records.
pub fn trace_summary(trace: &SearchTrace) -> Value {
    json!({
        "family": trace.family,
        "stage": trace.stage,
        "encoding": trace.encoding,
        "options": trace.options,
        "iterations": trace.iterations,
        "final_config": trace.final_config,
    })
}

/// Writes a trace incrementally; returns the finished trace.
pub fn gridsearch_to_file(
    config: &RunConfig,
    data: &Path,
    stage: u8,
    trace_path: &Path,
    mut on_record: impl FnMut(&ConfigRecord),
) -> Result<SearchTrace> {
    let file =
        File::create(trace_path).with_context(|| format!("creating {}", trace_path.display()))?;
    let mut out = BufWriter::new(file);
    let header = TraceLine::Header {
        tool: TOOL.to_owned(),
        version: VERSION.to_owned(),
        invocation: Invocation::Gridsearch {
            data: data.to_owned(),
            stage,
        },
        config: Box::new(config.clone()),
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    out.flush()?;
    let mut write_err: Option<std::io::Error> = None;
    let trace = gridsearch(config, data, stage, &mut |r| {
        let line = serde_json::to_string(&TraceLine::Config(r.clone())).expect("record serializes");
        if let Err(e) = writeln!(out, "{line}").and_then(|_| out.flush()) {
            write_err.get_or_insert(e);
        }
        on_record(r);
    })?;
    if let Some(e) = write_err {
        return Err(e).with_context(|| format!("writing {}", trace_path.display()));
    }
    writeln!(
        out,
        "{}",
        serde_json::to_string(&TraceLine::Summary(trace_summary(&trace)))?
    )?;
    out.flush()?;
    Ok(trace)
}

// ---------------------------------------------------------------- predict

fn read_record_csv(path: &Path) -> Result<BTreeMap<String, String>> {
    let raw = read_raw(path)?;
    let row = raw
        .rows
        .first()
        .ok_or_else(|| usage(format!("{} has no data row", path.display())))?;
    Ok(raw
        .header
        .iter()
        .cloned()
        .zip(row.iter().cloned())
        .collect())
}

/// Cleans raw field values the way ingestion cleans cells.
pub fn prepare_record(fields: BTreeMap<String, String>) -> BTreeMap<String, String> {
    let renames = RenameMap::default();
    let mut record: BTreeMap<String, String> = fields
        .into_iter()
        .map(|(k, v)| {
            let k = k.trim().to_uppercase();
            let v = if k == DATE_CASE {
                v.trim().to_owned()
            } else {
                clean_value(&v, &renames)
            };
            (k, v)
        })
        .collect();
    if let Some(month) = record.get(DATE_MONTH).and_then(|m| m.parse::<u32>().ok()) {
        record.insert(DATE_MONTH.to_owned(), format!("{month:02}"));
    } else if !record.contains_key(DATE_MONTH) {
        if let Some((month, _)) = record.get(DATE_CASE).and_then(|d| parse_date(d)) {
            record.insert(DATE_MONTH.to_owned(), format!("{month:02}"));
        }
    }
    record
}

pub fn predict(a: &PredictArgs) -> Result<Vec<StagePrediction>> {
    let models = load_stage_models(&a.models)?;
    for (i, s) in models.keys().enumerate() {
        if *s as usize != i + 1 {
            return Err(usage(
                "models must cover consecutive stages starting at stage 1",
            ));
        }
    }
    let mut fields = match &a.record {
        Some(p) => read_record_csv(p)?,
        None => BTreeMap::new(),
    };
    for f in &a.fields {
        let (k, v) = f
            .split_once('=')
            .ok_or_else(|| usage(format!("expected NAME=VALUE, got {f:?}")))?;
        fields.insert(k.to_owned(), v.to_owned());
    }
    let record = prepare_record(fields);
    let first = &models[&1];
    for name in &first.plan.inputs {
        if !record.contains_key(name) {
            return Err(usage(format!("record is missing input variable {name}")));
        }
    }
    let chain: Vec<&dyn StagePredictor> =
        models.values().map(|m| m as &dyn StagePredictor).collect();
    Ok(chain_predict(&record, &chain)?)
}

// ---------------------------------------------------------------- gradcheck

#[derive(Clone, Debug, Serialize)]
pub struct StageGradCheck {
    pub stage: u8,
    pub family: Family,
    /// Batches drawn until one was resolvable by finite differences.
    pub draws: usize,
    pub report: GradCheckReport,
}

/// Spreads embeddings so layer inputs are of order one.
const EMBEDDING_SCALE: f64 = 20.0;

const GRADCHECK_DRAWS: usize = 64;

/// Gradient check of a stage network reduced to at most `width` units per layer.
///
/// Redraws the initialization and batch until [`resolvable`] accepts them.
pub fn reduced_stage_check(
    stage: u8,
    width: usize,
    act: Activation,
    step: f64,
    seed: u64,
) -> Result<StageGradCheck> {
    if width < 4 {
        return Err(usage("gradcheck width must be at least 4"));
    }
    let spec = GeneratorSpec::random(Cardinalities::uniform(4), 0.1, derive_seed(seed, 1));
    let table = synth_generate(&spec, 40)?;
    let schema = table.schema();
    let plan = build_stage_plan(stage, schema)?;
    let family = Family::stage_default(stage);
    let dims = [3, 4, 3, 5, 4, 4][..plan.inputs.len()].to_vec();
    let hidden = match family {
        Family::Mlp => vec![width, width / 2, width / 4],
        Family::Conv1d => vec![width / 2, width / 4],
    };
    let overrides = ArchOverrides {
        embedding_dims: Some(dims),
        hidden: Some(hidden),
        conv: Some(vec![
            ConvBlock {
                filters: (width / 8).max(2),
                kernel: 4,
                pool: 2,
            },
            ConvBlock {
                filters: (width / 5).max(2),
                kernel: 3,
                pool: 2,
            },
        ]),
        activation: Some(act),
        ..Default::default()
    };
    let cols: Vec<usize> = plan
        .inputs
        .iter()
        .map(|n| schema.position(n))
        .collect::<Result<_, _>>()?;
    let target = schema.position(&plan.target)?;
    for draw in 0..GRADCHECK_DRAWS {
        let draw_seed = derive_seed(seed, 16 + draw as u64);
        let mut model =
            build_stage_model(stage, schema, family, &overrides, derive_seed(draw_seed, 2))?;
        for p in model.params_mut() {
            if p.name.starts_with("embedding") {
                p.data.iter_mut().for_each(|v| *v *= EMBEDDING_SCALE);
            }
        }
        let mut rng = seeded(derive_seed(draw_seed, 3));
        let rows: Vec<usize> = (0..5).map(|_| rng.gen_range(0..table.n_rows())).collect();
        let ix = table.gather(&rows, &cols);
        let labels: Vec<u32> = rows.iter().map(|&r| table.get(r, target) - 1).collect();
        let dropout_seed = derive_seed(draw_seed, 4);
        if resolvable(&model, Batch::Indices(&ix), &labels, step, dropout_seed)? {
            let report = grad_check(&model, Batch::Indices(&ix), &labels, step, dropout_seed)?;
            return Ok(StageGradCheck {
                stage,
                family,
                draws: draw + 1,
                report,
            });
        }
    }
    bail!("stage {stage}: no batch in {GRADCHECK_DRAWS} draws is resolvable by finite differences")
}

pub fn gradcheck(config: &RunConfig, a: &GradcheckArgs) -> Result<Vec<StageGradCheck>> {
    a.stage
        .stages()
        .into_iter()
        .map(|s| reduced_stage_check(s, a.width, a.activation, a.step, config.seed))
        .collect()
}

// ---------------------------------------------------------------- reproduce

/// Results of a recorded invocation, recomputed. Train re-runs write to a scratch directory.
pub fn execute(invocation: &Invocation, config: &RunConfig, scratch: &Path) -> Result<Value> {
    Ok(match invocation {
        Invocation::Train { data, stage, .. } => {
            serde_json::to_value(train(config, data, *stage, scratch)?)?
        }
        Invocation::Evaluate {
            data,
            stage,
            mode,
            models,
            rows,
        } => serde_json::to_value(evaluate(config, data, *stage, *mode, models, *rows)?)?,
        Invocation::Gridsearch { data, stage } => {
            let trace = gridsearch(config, data, *stage, &mut |_| {})?;
            json!({ "configs": trace.configs, "summary": trace_summary(&trace) })
        }
    })
}

/// Recorded (invocation, config, results) of a report or trace file.
pub fn read_recorded(path: &Path) -> Result<(Invocation, RunConfig, Value)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(report) = serde_json::from_str::<Report>(&text) {
        return Ok((report.invocation, report.config, report.results));
    }
    let (invocation, config, lines) = parse_trace(&text)
        .with_context(|| format!("{} is neither a report nor a trace", path.display()))?;
    let mut configs = Vec::new();
    let mut summary = None;
    for line in lines {
        match line {
            TraceLine::Config(r) => configs.push(r),
            TraceLine::Summary(s) => summary = Some(s),
            TraceLine::Header { .. } => bail!("trace has more than one header"),
        }
    }
    let summary =
        summary.ok_or_else(|| anyhow!("trace has no summary record; the search did not finish"))?;
    Ok((
        invocation,
        config,
        json!({ "configs": configs, "summary": summary }),
    ))
}

/// First differing JSON path, if any.
pub fn first_difference(a: &Value, b: &Value, path: &str) -> Option<String> {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            for k in x.keys().chain(y.keys()) {
                match (x.get(k), y.get(k)) {
                    (Some(u), Some(v)) => {
                        if let Some(d) = first_difference(u, v, &format!("{path}.{k}")) {
                            return Some(d);
                        }
                    }
                    _ => return Some(format!("{path}.{k}")),
                }
            }
            None
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                return Some(format!("{path} (length {} vs {})", x.len(), y.len()));
            }
            x.iter()
                .zip(y)
                .enumerate()
                .find_map(|(i, (u, v))| first_difference(u, v, &format!("{path}[{i}]")))
        }
        _ if a == b => None,
        _ => Some(format!("{path}: {a} vs {b}")),
    }
}

/// Re-runs a recorded invocation and compares its results with the recorded ones.
pub fn reproduce(invocation: &Invocation, config: &RunConfig, recorded: &Value) -> Result<()> {
    let scratch = tempfile::tempdir()?;
    let fresh = execute(invocation, config, scratch.path())?;
    match first_difference(recorded, &fresh, "results") {
        Some(d) => Err(ReproduceMismatch(d).into()),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------- rendering

pub fn print_results<T: Serialize>(
    format: Format,
    value: &T,
    text: impl FnOnce() -> String,
) -> Result<()> {
    match format {
        Format::Machine => println!("{}", serde_json::to_string(value)?),
        Format::Text => print!("{}", text()),
    }
    Ok(())
}

pub fn render_reports(reports: &[StageReport]) -> String {
    let mut s = String::new();
    for r in reports {
        s.push_str(&format!(
            "stage {} {:<20} {:<14} top1 {:.4}  top2 {:.4}  top3 {:.4}  (n={}, unknown targets {})\n",
            r.stage, r.target, r.mode, r.top1, r.top2, r.top3, r.n_evaluated, r.n_unknown_targets
        ));
    }
    s
}

pub fn render_trained(stages: &[TrainedStage], out: &Path) -> String {
    let mut s = String::new();
    for t in stages {
        let loss = t
            .history
            .last()
            .map(|h| format!("{:.4}", h.train_loss))
            .unwrap_or_else(|| "-".into());
        s.push_str(&format!(
            "stage {} {:<20} final loss {loss:<8} saved {}\n",
            t.stage,
            t.target,
            out.join(&t.artifact).display()
        ));
        if let Some(v) = &t.validation {
            s.push_str(&format!(
                "  validation top1 {:.4}  top2 {:.4}  top3 {:.4}\n",
                v.top1, v.top2, v.top3
            ));
        }
    }
    s
}

pub fn render_predictions(preds: &[StagePrediction]) -> String {
    let mut s = String::new();
    for p in preds {
        s.push_str(&format!("stage {} {}\n", p.stage, p.target));
        for (i, c) in p.candidates.iter().enumerate() {
            s.push_str(&format!(
                "  {}. {:<40} {:.4}\n",
                i + 1,
                c.category,
                c.probability
            ));
        }
    }
    s
}

pub fn render_record(r: &ConfigRecord) -> String {
    let v = &r.values;
    let score = match (&r.mean_top1, &r.infeasible) {
        (Some(m), _) => format!("{m:.4}"),
        (None, Some(why)) => format!("infeasible ({why})"),
        _ => "-".into(),
    };
    format!(
        "it{} #{:<4} layers {} neurons {} filters {} kernel {} pool {} {} dropout {} epochs {} {} lr {} -> {score}",
        r.iteration,
        r.grid_index,
        v.hidden_layers,
        v.neurons,
        v.filters,
        v.kernel,
        v.pool,
        v.activation,
        v.dropout,
        v.epochs,
        v.optimizer,
        v.learning_rate
    )
}
