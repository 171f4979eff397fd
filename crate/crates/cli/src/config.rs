//! Run configuration: an optional TOML file overlaid by command-line flags.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use catcast_core::encoders::{EncodingScheme, DEFAULT_HASH_BUCKETS};
use catcast_core::ingest::{DEFAULT_FOLDS, DEFAULT_MAX_YEAR, DEFAULT_MIN_YEAR, DEFAULT_TEST_YEAR};
use catcast_core::neural::{Activation, ConvBlock, Family, InputEncoding, OptimizerKind};
use catcast_core::search::{default_grid, GridSpec};
use serde::{Deserialize, Serialize};

/// Environment variable consulted when neither a flag nor the config file sets a seed.
pub const SEED_ENV: &str = "CATCAST_SEED";

/// Every knob a run depends on. Echoed verbatim into each report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub split: SplitSettings,
    pub model: ModelSettings,
    pub train: TrainSettings,
    pub search: SearchSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 1,
            split: SplitSettings::default(),
            model: ModelSettings::default(),
            train: TrainSettings::default(),
            search: SearchSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub min_year: i32,
    pub max_year: i32,
    pub test_year: i32,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings {
            min_year: DEFAULT_MIN_YEAR,
            max_year: DEFAULT_MAX_YEAR,
            test_year: DEFAULT_TEST_YEAR,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// The stage's default network family.
    Neural,
    Mlp,
    Conv1d,
    Logreg,
    Tree,
    Forest,
}

impl ModelKind {
    pub fn family(self, stage: u8) -> Option<Family> {
        match self {
            ModelKind::Neural => Some(Family::stage_default(stage)),
            ModelKind::Mlp => Some(Family::Mlp),
            ModelKind::Conv1d => Some(Family::Conv1d),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Neural => "neural",
            ModelKind::Mlp => "mlp",
            ModelKind::Conv1d => "conv1d",
            ModelKind::Logreg => "logreg",
            ModelKind::Tree => "tree",
            ModelKind::Forest => "forest",
        })
    }
}

impl FromStr for ModelKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "neural" => ModelKind::Neural,
            "mlp" => ModelKind::Mlp,
            "conv1d" | "conv" | "cnn" => ModelKind::Conv1d,
            "logreg" => ModelKind::Logreg,
            "tree" => ModelKind::Tree,
            "forest" => ModelKind::Forest,
            _ => {
                bail!("unknown model {s:?} (expected neural, mlp, conv1d, logreg, tree or forest)")
            }
        })
    }
}

/// Encoding names accepted by `--encoding`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingName {
    Integer,
    Binary,
    Hashing,
    OneHot,
    Embedding,
}

impl FromStr for EncodingName {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "integer" => EncodingName::Integer,
            "binary" => EncodingName::Binary,
            "hashing" => EncodingName::Hashing,
            "one-hot" | "onehot" => EncodingName::OneHot,
            "embedding" => EncodingName::Embedding,
            _ => bail!(
                "unknown encoding {s:?} (expected integer, binary, hashing, one-hot or embedding)"
            ),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub kind: ModelKind,
    /// Defaults to embeddings for networks and one-hot for baselines.
    pub encoding: Option<EncodingName>,
    pub hash_buckets: usize,
    pub embedding_dims: Option<Vec<usize>>,
    pub hidden: Option<Vec<usize>>,
    pub conv: Option<Vec<ConvBlock>>,
    pub activation: Option<Activation>,
    pub dropout: Option<f64>,
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples: usize,
    pub max_features: Option<usize>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            kind: ModelKind::Neural,
            encoding: None,
            hash_buckets: DEFAULT_HASH_BUCKETS,
            embedding_dims: None,
            hidden: None,
            conv: None,
            activation: None,
            dropout: None,
            n_trees: 100,
            max_depth: None,
            min_samples: 2,
            max_features: None,
        }
    }
}

impl ModelSettings {
    fn scheme(&self, name: EncodingName) -> Result<EncodingScheme> {
        Ok(match name {
            EncodingName::Integer => EncodingScheme::Integer,
            EncodingName::Binary => EncodingScheme::Binary,
            EncodingName::Hashing => EncodingScheme::Hashing {
                buckets: self.hash_buckets,
            },
            EncodingName::OneHot => EncodingScheme::OneHot,
            EncodingName::Embedding => {
                bail!("embedding encoding is only available to neural models")
            }
        })
    }

    /// Input encoding of a network.
    pub fn neural_encoding(&self) -> Result<InputEncoding> {
        match self.encoding.unwrap_or(EncodingName::Embedding) {
            EncodingName::Embedding => Ok(InputEncoding::Embedding),
            other => Ok(InputEncoding::Classical(self.scheme(other)?)),
        }
    }

    /// Fixed encoding of a baseline model.
    pub fn baseline_encoding(&self) -> Result<EncodingScheme> {
        self.scheme(self.encoding.unwrap_or(EncodingName::OneHot))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    /// Defaults to 0.001 for networks and 0.1 for softmax regression.
    pub learning_rate: Option<f64>,
    pub optimizer: OptimizerKind,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 50,
            batch_size: 128,
            learning_rate: None,
            optimizer: OptimizerKind::Adam,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSettings {
    pub family: Family,
    pub k: usize,
    pub budget: Option<usize>,
    /// Replaces the family's default grid.
    pub grid: Option<GridSpec>,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            family: Family::Mlp,
            k: DEFAULT_FOLDS,
            budget: None,
            grid: None,
        }
    }
}

impl SearchSettings {
    pub fn grid(&self) -> Result<GridSpec> {
        match &self.grid {
            None => Ok(default_grid(self.family)),
            Some(g) if g.family == self.family => Ok(g.clone()),
            Some(g) => bail!(
                "configured grid is for {} but the search family is {}",
                g.family,
                self.family
            ),
        }
    }
}

/// Reads a config file. Returns the config and whether it set `seed` itself.
pub fn read_config(path: &Path) -> Result<(RunConfig, bool)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let table: toml::Table =
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let has_seed = table.contains_key("seed");
    let config: RunConfig = toml::Value::Table(table)
        .try_into()
        .with_context(|| format!("invalid config {}", path.display()))?;
    Ok((config, has_seed))
}

/// Seed precedence: flag, then config file, then the environment, then 0.
pub fn resolve_seed(flag: Option<u64>, from_config: Option<u64>, env: Option<&str>) -> Result<u64> {
    if let Some(s) = flag.or(from_config) {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer")),
        None => Ok(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(1), Some(2), Some("3")).unwrap(), 1);
        assert_eq!(resolve_seed(None, Some(2), Some("3")).unwrap(), 2);
        assert_eq!(resolve_seed(None, None, Some("3")).unwrap(), 3);
        assert_eq!(resolve_seed(None, None, None).unwrap(), 0);
        assert!(resolve_seed(None, None, Some("x")).is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut c = RunConfig::default();
        c.model.hidden = Some(vec![64, 32]);
        c.model.encoding = Some(EncodingName::OneHot);
        c.search.budget = Some(8);
        let text = toml::to_string(&c).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig = toml::from_str("seed = 9\n[train]\nepochs = 3\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.batch_size, 128);
        assert!(toml::from_str::<RunConfig>("sed = 9\n").is_err());
    }

    #[test]
    fn custom_grid_from_toml() {
        let text = r#"
[search]
family = "mlp"
[search.grid]
family = "mlp"
iterations = [
  [{ name = "neurons", values = [8, 16] }, { name = "epochs", values = [2] }],
  [{ name = "learning_rate", values = [0.01, 0.001] }],
]
"#;
        let c: RunConfig = toml::from_str(text).unwrap();
        let g = c.search.grid().unwrap();
        assert_eq!(g.iteration_size(0), 2);
        assert_eq!(g.iteration_size(1), 2);
        let mut conv = c.search.clone();
        conv.family = Family::Conv1d;
        assert!(conv.grid().is_err());
    }
}
