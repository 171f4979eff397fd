//! Staged grid search scored by k-fold cross-validated Top1.
//!
//! Each iteration sweeps only its own axes. Earlier winners stay frozen and
//! later axes keep their defaults. Every configuration of a search is trained
//! with the same fold seeds, so scores differ only through the hyperparameters.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{make_folds, FoldPlan};
use crate::neural::{
    check_architecture, Activation, Architecture, ConvBlock, Family, InputEncoding, OptimizerKind,
    TrainConfig,
};
use crate::pipeline::{evaluate_stage, fit_stage, EvalMode, ModelChoice, StagePlan};
use crate::rng::{derive_seed, seeded};
use crate::schema::Table;

const FOLD_STREAM: u64 = 0x5EED_F01D;
const BUDGET_STREAM: u64 = 0x00B0_D6E7;
const PYRAMID_FLOOR: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub hidden_layers: usize,
    pub neurons: usize,
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
    pub activation: Activation,
    pub dropout: f64,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            hidden_layers: 3,
            neurons: 2048,
            filters: 128,
            kernel: 3,
            pool: 2,
            activation: Activation::Relu,
            dropout: 0.2,
            epochs: 25,
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.001,
            batch_size: 128,
        }
    }
}

/// Widths of the dense layers: layer `i` gets `max(neurons / 2^i, 64)`
/// (or `neurons` itself when that is already below 64).
pub fn pyramid(neurons: usize, layers: usize) -> Vec<usize> {
    let floor = neurons.min(PYRAMID_FLOOR);
    (0..layers)
        .map(|i| (neurons >> i.min(63)).max(floor))
        .collect()
}

impl Hyperparams {
    pub fn architecture(
        &self,
        family: Family,
        plan: &StagePlan,
        schema: &crate::schema::Schema,
        encoding: InputEncoding,
    ) -> Result<Architecture> {
        let mut arch = Architecture::stage_default(plan, schema, family)?;
        arch.encoding = encoding;
        arch.activation = self.activation;
        arch.dropout = self.dropout;
        match family {
            Family::Mlp => {
                arch.conv = Vec::new();
                arch.hidden = pyramid(self.neurons, self.hidden_layers);
            }
            Family::Conv1d => {
                arch.conv = vec![
                    ConvBlock {
                        filters: self.filters,
                        kernel: self.kernel,
                        pool: self.pool
                    };
                    self.hidden_layers
                ];
                arch.hidden = Vec::new();
            }
        }
        Ok(arch)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            seed,
        }
    }
}

/// One searched hyperparameter with its candidate values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "values", rename_all = "snake_case")]
pub enum Axis {
    HiddenLayers(Vec<usize>),
    Neurons(Vec<usize>),
    Filters(Vec<usize>),
    Kernel(Vec<usize>),
    Pool(Vec<usize>),
    Activation(Vec<Activation>),
    Dropout(Vec<f64>),
    Epochs(Vec<usize>),
    Optimizer(Vec<OptimizerKind>),
    LearningRate(Vec<f64>),
}

impl Axis {
    pub fn len(&self) -> usize {
        match self {
            Axis::HiddenLayers(v)
            | Axis::Neurons(v)
            | Axis::Filters(v)
            | Axis::Kernel(v)
            | Axis::Pool(v)
            | Axis::Epochs(v) => v.len(),
            Axis::Activation(v) => v.len(),
            Axis::Dropout(v) | Axis::LearningRate(v) => v.len(),
            Axis::Optimizer(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn set(&self, hp: &mut Hyperparams, i: usize) {
        match self {
            Axis::HiddenLayers(v) => hp.hidden_layers = v[i],
            Axis::Neurons(v) => hp.neurons = v[i],
            Axis::Filters(v) => hp.filters = v[i],
            Axis::Kernel(v) => hp.kernel = v[i],
            Axis::Pool(v) => hp.pool = v[i],
            Axis::Activation(v) => hp.activation = v[i],
            Axis::Dropout(v) => hp.dropout = v[i],
            Axis::Epochs(v) => hp.epochs = v[i],
            Axis::Optimizer(v) => hp.optimizer = v[i],
            Axis::LearningRate(v) => hp.learning_rate = v[i],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub family: Family,
    pub iterations: Vec<Vec<Axis>>,
}

pub fn default_grid(family: Family) -> GridSpec {
    let first = match family {
        Family::Mlp => vec![
            Axis::HiddenLayers(vec![1, 2, 3, 4]),
            Axis::Neurons(vec![128, 256, 512, 1024, 2048, 4096]),
            Axis::Activation(Activation::SEARCHABLE.to_vec()),
        ],
        Family::Conv1d => vec![
            Axis::HiddenLayers(vec![1, 2, 3, 4]),
            Axis::Filters(vec![32, 64, 128, 256, 512]),
            Axis::Kernel(vec![2, 3, 4, 5]),
            Axis::Pool(vec![2, 3, 4]),
            Axis::Activation(Activation::SEARCHABLE.to_vec()),
        ],
    };
    GridSpec {
        family,
        iterations: vec![
            first,
            vec![
                Axis::Dropout(vec![0.1, 0.2, 0.3, 0.5]),
                Axis::Epochs(vec![10, 25, 50, 100, 150]),
            ],
            vec![Axis::Optimizer(OptimizerKind::ALL.to_vec())],
            vec![Axis::LearningRate(vec![0.01, 0.001, 0.005])],
        ],
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.iterations.is_empty() {
            return Err(Error::config("grid has no iterations"));
        }
        for (i, it) in self.iterations.iter().enumerate() {
            if it.is_empty() || it.iter().any(Axis::is_empty) {
                return Err(Error::config(format!(
                    "grid iteration {} has an empty candidate list",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn iteration_size(&self, iteration: usize) -> usize {
        self.iterations[iteration].iter().map(Axis::len).product()
    }

    /// Applies configuration `index` of `iteration` to `base`; the first axis varies slowest.
    pub fn configure(&self, iteration: usize, index: usize, base: &Hyperparams) -> Hyperparams {
        let mut hp = base.clone();
        let mut rem = index;
        for axis in self.iterations[iteration].iter().rev() {
            axis.set(&mut hp, rem % axis.len());
            rem /= axis.len();
        }
        hp
    }
}

/// The rows and stage a search (or a standalone re-score) trains on.
#[derive(Clone, Copy)]
pub struct SearchData<'a> {
    pub table: &'a Table,
    pub rows: &'a [usize],
    pub plan: &'a StagePlan,
    pub encoding: InputEncoding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub k: usize,
    pub seed: u64,
    /// Configurations evaluated per iteration; `None` is unlimited.
    pub budget: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub iteration: usize,
    pub grid_index: usize,
    pub values: Hyperparams,
    pub fold_scores: Vec<f64>,
    pub mean_top1: Option<f64>,
    /// Set when the configuration cannot be built (e.g. the sequence is too short).
    pub infeasible: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub grid_size: usize,
    pub evaluated: usize,
    pub winner: Option<usize>,
    pub winner_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub family: Family,
    pub stage: u8,
    pub encoding: InputEncoding,
    pub options: SearchOptions,
    pub iterations: Vec<IterationRecord>,
    pub configs: Vec<ConfigRecord>,
    pub final_config: Hyperparams,
}

/// Grid indices evaluated for an iteration: all of them, or a seeded subset kept in enumeration order.
pub fn budgeted_indices(
    size: usize,
    budget: Option<usize>,
    seed: u64,
    iteration: usize,
) -> Vec<usize> {
    match budget {
        Some(b) if b < size => {
            let mut rng = seeded(derive_seed(
                derive_seed(seed, BUDGET_STREAM),
                iteration as u64,
            ));
            let mut idx = sample(&mut rng, size, b).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..size).collect(),
    }
}

pub fn search_folds(rows: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    make_folds(rows, k, derive_seed(seed, FOLD_STREAM))
}

/// Mean held-out Top1 of one configuration over the folds.
pub fn score_config(
    hp: &Hyperparams,
    family: Family,
    data: SearchData<'_>,
    folds: &FoldPlan,
    seed: u64,
) -> Result<Vec<f64>> {
    let arch = hp.architecture(family, data.plan, data.table.schema(), data.encoding)?;
    let mut scores = Vec::with_capacity(folds.k);
    for f in 0..folds.k {
        let (train_rows, held_out) = folds.fold(f);
        let choice = ModelChoice::Neural {
            arch: arch.clone(),
            train: hp.train_config(derive_seed(seed, f as u64)),
        };
        let fitted = fit_stage(data.table, &train_rows, &[], data.plan, &choice)?;
        let report = evaluate_stage(
            &fitted.model,
            data.table,
            held_out,
            EvalMode::TeacherForced,
            &[],
        )?;
        scores.push(report.top1);
    }
    Ok(scores)
}

pub fn run_search(
    grid: &GridSpec,
    data: SearchData<'_>,
    options: &SearchOptions,
) -> Result<SearchTrace> {
    run_search_with(grid, data, options, &mut |_| {})
}

/// [`run_search`] with a callback invoked for every scored configuration.
pub fn run_search_with(
    grid: &GridSpec,
    data: SearchData<'_>,
    options: &SearchOptions,
    progress: &mut dyn FnMut(&ConfigRecord),
) -> Result<SearchTrace> {
    grid.validate()?;
    if options.budget == Some(0) {
        return Err(Error::config("search budget must be at least 1"));
    }
    if options.k < 2 {
        return Err(Error::config("cross-validation needs k >= 2"));
    }
    let folds = search_folds(data.rows, options.k, options.seed)?;
    let mut current = Hyperparams::default();
    let mut iterations = Vec::with_capacity(grid.iterations.len());
    let mut configs = Vec::new();
    for it in 0..grid.iterations.len() {
        let size = grid.iteration_size(it);
        let indices = budgeted_indices(size, options.budget, options.seed, it);
        let score = |&index: &usize| -> Result<ConfigRecord> {
            let values = grid.configure(it, index, &current);
            let scored = match values.architecture(
                grid.family,
                data.plan,
                data.table.schema(),
                data.encoding,
            ) {
                Ok(arch) => check_architecture(data.plan, data.table.schema(), &arch),
                Err(e) => Err(e),
            };
            match scored {
                Err(Error::Config(reason)) => Ok(ConfigRecord {
                    iteration: it + 1,
                    grid_index: index,
                    values,
                    fold_scores: Vec::new(),
                    mean_top1: None,
                    infeasible: Some(reason),
                }),
                Err(e) => Err(e),
                Ok(()) => {
                    let fold_scores =
                        score_config(&values, grid.family, data, &folds, options.seed)?;
                    let mean = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
                    Ok(ConfigRecord {
                        iteration: it + 1,
                        grid_index: index,
                        values,
                        fold_scores,
                        mean_top1: Some(mean),
                        infeasible: None,
                    })
                }
            }
        };
        // one batch per worker keeps progress streaming and ordered
        let mut records = Vec::with_capacity(indices.len());
        for chunk in indices.chunks(rayon::current_num_threads().max(1)) {
            let scored = chunk.par_iter().map(score).collect::<Result<Vec<_>>>()?;
            for r in scored {
                progress(&r);
                records.push(r);
            }
        }
        let mut winner: Option<&ConfigRecord> = None;
        for r in &records {
            if let Some(m) = r.mean_top1 {
                if winner.and_then(|w| w.mean_top1).is_none_or(|best| m > best) {
                    winner = Some(r);
                }
            }
        }
        if let Some(w) = winner {
            current = w.values.clone();
        }
        iterations.push(IterationRecord {
            iteration: it + 1,
            grid_size: size,
            evaluated: records.len(),
            winner: winner.map(|w| w.grid_index),
            winner_mean: winner.and_then(|w| w.mean_top1),
        });
        configs.extend(records);
    }
    Ok(SearchTrace {
        family: grid.family,
        stage: data.plan.stage,
        encoding: data.encoding,
        options: options.clone(),
        iterations,
        configs,
        final_config: current,
    })
}
