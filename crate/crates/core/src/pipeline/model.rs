use serde::{Deserialize, Serialize};

use crate::baselines::{
    forest_fit, logreg_fit, tree_fit, ForestConfig, ForestModel, LogRegConfig, LogRegModel,
    TreeConfig, TreeModel,
};
use crate::encoders::{encode_rows, EncodingScheme};
use crate::error::{Error, Result};
use crate::neural::{
    build_model, predict, train, Architecture, Dataset, EpochRecord, Features, InputEncoding,
    ModelGraph, TrainConfig,
};
use crate::rng::derive_seed;
use crate::schema::{Provenance, Table, Vocabulary, UNK};
use crate::tensor::Matrix;

use super::plan::StagePlan;

/// Anything that maps stage inputs to target-class probabilities.
///
/// `rows` holds `plan().inputs.len()` indices per row, expressed in
/// `input_vocabularies()`. Output column `c` is target vocabulary index `c + 1`.
pub trait StagePredictor: Send + Sync {
    fn plan(&self) -> &StagePlan;
    fn input_vocabularies(&self) -> &[Vocabulary];
    fn target_vocabulary(&self) -> &Vocabulary;
    fn predict_proba(&self, rows: &[u32]) -> Result<Matrix>;
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelBody {
    Neural(ModelGraph),
    LogReg(LogRegModel),
    Tree(TreeModel),
    Forest(ForestModel),
}

impl ModelBody {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelBody::Neural(_) => "neural",
            ModelBody::LogReg(_) => "logreg",
            ModelBody::Tree(_) => "tree",
            ModelBody::Forest(_) => "forest",
        }
    }
}

/// What was trained, on what, with which settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingProvenance {
    pub seed: u64,
    pub data: Provenance,
    pub choice: ModelChoice,
}

/// A trained stage predictor together with the vocabularies it was fitted on.
#[derive(Clone, Debug, PartialEq)]
pub struct StageModel {
    pub plan: StagePlan,
    pub input_vocabularies: Vec<Vocabulary>,
    pub target_vocabulary: Vocabulary,
    pub encoding: InputEncoding,
    pub body: ModelBody,
    pub provenance: TrainingProvenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelChoice {
    Neural {
        arch: Architecture,
        train: TrainConfig,
    },
    Logreg {
        encoding: EncodingScheme,
        config: LogRegConfig,
    },
    Tree {
        encoding: EncodingScheme,
        config: TreeConfig,
    },
    Forest {
        encoding: EncodingScheme,
        config: ForestConfig,
    },
}

impl ModelChoice {
    pub fn seed(&self) -> u64 {
        match self {
            ModelChoice::Neural { train, .. } => train.seed,
            ModelChoice::Logreg { config, .. } => config.seed,
            ModelChoice::Tree { .. } => 0,
            ModelChoice::Forest { config, .. } => config.seed,
        }
    }

    fn encoding(&self) -> InputEncoding {
        match self {
            ModelChoice::Neural { arch, .. } => arch.encoding,
            ModelChoice::Logreg { encoding, .. }
            | ModelChoice::Tree { encoding, .. }
            | ModelChoice::Forest { encoding, .. } => InputEncoding::Classical(*encoding),
        }
    }
}

/// Maps indices of one vocabulary onto another through the category strings.
pub(crate) fn translation(from: &Vocabulary, to: &Vocabulary) -> Vec<u32> {
    std::iter::once(UNK)
        .chain(from.entries().iter().map(|e| to.lookup(e)))
        .collect()
}

/// Stage inputs of `rows`, re-indexed into the predictor's vocabularies.
/// `overrides` replaces whole input columns with per-row category strings.
pub(crate) fn model_inputs(
    model: &dyn StagePredictor,
    table: &Table,
    rows: &[usize],
    overrides: &[(String, Vec<String>)],
) -> Result<Vec<u32>> {
    let plan = model.plan();
    let width = plan.inputs.len();
    let mut out = vec![UNK; rows.len() * width];
    for (j, (name, vocab)) in plan
        .inputs
        .iter()
        .zip(model.input_vocabularies())
        .enumerate()
    {
        if let Some((_, values)) = overrides.iter().find(|(n, _)| n == name) {
            for (i, v) in values.iter().enumerate() {
                out[i * width + j] = vocab.lookup(v);
            }
            continue;
        }
        let col = table.schema().position(name)?;
        let map = translation(&table.schema().variables()[col].vocabulary, vocab);
        for (i, &r) in rows.iter().enumerate() {
            out[i * width + j] = map[table.get(r, col) as usize];
        }
    }
    Ok(out)
}

/// Target classes of `rows` (`None` where the table value is unknown to the model).
pub(crate) fn model_labels(
    model: &dyn StagePredictor,
    table: &Table,
    rows: &[usize],
) -> Result<Vec<Option<u32>>> {
    let col = table.schema().position(&model.plan().target)?;
    let map = translation(
        &table.schema().variables()[col].vocabulary,
        model.target_vocabulary(),
    );
    Ok(rows
        .iter()
        .map(|&r| match map[table.get(r, col) as usize] {
            UNK => None,
            c => Some(c - 1),
        })
        .collect())
}

impl StageModel {
    fn features(&self, rows: &[u32]) -> Result<Features> {
        match self.encoding {
            InputEncoding::Embedding => Ok(Features::Indices {
                arity: self.plan.inputs.len(),
                data: rows.to_vec(),
            }),
            InputEncoding::Classical(scheme) => {
                let vocabs: Vec<&Vocabulary> = self.input_vocabularies.iter().collect();
                Ok(Features::Dense(encode_rows(&vocabs, &scheme, rows)?))
            }
        }
    }
}

impl StagePredictor for StageModel {
    fn plan(&self) -> &StagePlan {
        &self.plan
    }

    fn input_vocabularies(&self) -> &[Vocabulary] {
        &self.input_vocabularies
    }

    fn target_vocabulary(&self) -> &Vocabulary {
        &self.target_vocabulary
    }

    fn predict_proba(&self, rows: &[u32]) -> Result<Matrix> {
        let features = self.features(rows)?;
        match (&self.body, features) {
            (ModelBody::Neural(m), f) => predict(m, &f),
            (ModelBody::LogReg(m), Features::Dense(x)) => m.predict_proba(&x),
            (ModelBody::Tree(m), Features::Dense(x)) => m.predict_proba(&x),
            (ModelBody::Forest(m), Features::Dense(x)) => m.predict_proba(&x),
            _ => Err(Error::config("baseline models need a classical encoding")),
        }
    }
}

/// A stage model fitted on `train_rows`, plus its per-epoch history.
#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub model: StageModel,
    pub history: Vec<EpochRecord>,
}

/// Shell predictor used only to re-index table rows before a model exists.
struct Indexer<'a> {
    plan: &'a StagePlan,
    inputs: Vec<Vocabulary>,
    target: Vocabulary,
}

impl StagePredictor for Indexer<'_> {
    fn plan(&self) -> &StagePlan {
        self.plan
    }
    fn input_vocabularies(&self) -> &[Vocabulary] {
        &self.inputs
    }
    fn target_vocabulary(&self) -> &Vocabulary {
        &self.target
    }
    fn predict_proba(&self, _: &[u32]) -> Result<Matrix> {
        Err(Error::config("indexer cannot predict"))
    }
}

/// Trains one stage on the table's own vocabularies (teacher forcing: parent
/// inputs are read from the table). Rows with an unknown target are skipped.
pub fn fit_stage(
    table: &Table,
    train_rows: &[usize],
    val_rows: &[usize],
    plan: &StagePlan,
    choice: &ModelChoice,
) -> Result<FitOutcome> {
    let schema = table.schema();
    let indexer = Indexer {
        plan,
        inputs: plan
            .inputs
            .iter()
            .map(|n| schema.variable(n).map(|v| v.vocabulary.clone()))
            .collect::<Result<_>>()?,
        target: schema.variable(&plan.target)?.vocabulary.clone(),
    };
    let encoding = choice.encoding();
    let shell = StageModel {
        plan: plan.clone(),
        input_vocabularies: indexer.inputs.clone(),
        target_vocabulary: indexer.target.clone(),
        encoding,
        body: ModelBody::LogReg(LogRegModel::zeros(0, 0)),
        provenance: TrainingProvenance {
            seed: choice.seed(),
            data: table.provenance(),
            choice: choice.clone(),
        },
    };
    let dataset = |rows: &[usize]| -> Result<Dataset> {
        let labels = model_labels(&indexer, table, rows)?;
        let kept: Vec<usize> = (0..rows.len()).filter(|&i| labels[i].is_some()).collect();
        let kept_rows: Vec<usize> = kept.iter().map(|&i| rows[i]).collect();
        let inputs = model_inputs(&indexer, table, &kept_rows, &[])?;
        Ok(Dataset {
            features: shell.features(&inputs)?,
            labels: kept.iter().map(|&i| labels[i].unwrap()).collect(),
        })
    };
    let train_set = dataset(train_rows)?;
    if train_set.is_empty() {
        return Err(Error::data(format!(
            "no training rows with a known {}",
            plan.target
        )));
    }
    let val_set = if val_rows.is_empty() {
        None
    } else {
        Some(dataset(val_rows)?)
    };
    let classes = plan.target_cardinality;
    let dense = |f: &Features| -> Result<Matrix> {
        match f {
            Features::Dense(m) => Ok(m.clone()),
            Features::Indices { .. } => {
                Err(Error::config("baseline models need a classical encoding"))
            }
        }
    };
    let (body, history) = match choice {
        ModelChoice::Neural { arch, train: cfg } => {
            let mut model = build_model(plan, schema, arch, derive_seed(cfg.seed, 0x1417))?;
            let history = train(&mut model, &train_set, val_set.as_ref(), cfg)?;
            model.optimizer = None;
            (ModelBody::Neural(model), history)
        }
        ModelChoice::Logreg { config, .. } => {
            let (m, losses) = logreg_fit(
                &dense(&train_set.features)?,
                &train_set.labels,
                classes,
                config,
            )?;
            let history = losses
                .into_iter()
                .enumerate()
                .map(|(i, l)| EpochRecord {
                    epoch: i + 1,
                    train_loss: l,
                    val_top1: None,
                })
                .collect();
            (ModelBody::LogReg(m), history)
        }
        ModelChoice::Tree { config, .. } => (
            ModelBody::Tree(tree_fit(
                &dense(&train_set.features)?,
                &train_set.labels,
                classes,
                config,
            )?),
            Vec::new(),
        ),
        ModelChoice::Forest { config, .. } => (
            ModelBody::Forest(forest_fit(
                &dense(&train_set.features)?,
                &train_set.labels,
                classes,
                config,
            )?),
            Vec::new(),
        ),
    };
    Ok(FitOutcome {
        model: StageModel { body, ..shell },
        history,
    })
}
