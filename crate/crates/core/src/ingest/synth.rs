//! Seeded synthetic register with a known Bayes-optimal accuracy.
//!
//! Root variables (month, notifying country, distribution status, origin) are
//! uniform. Each downstream target follows a deterministic mapping of its
//! parents, replaced by a uniform draw with probability `epsilon`:
//!
//! ```text
//! product = product_map[origin][month]
//! hazard  = hazard_map[product][origin]
//! action  = action_map[hazard]
//! ```

use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::columns::*;
use crate::error::{Error, Result};
use crate::neural::Matrix;
use crate::pipeline::{StagePlan, StagePredictor};
use crate::rng::{derive_seed, seeded};
use crate::schema::{Provenance, Role, Schema, Table, VariableSpec, Vocabulary, UNK};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cardinalities {
    pub date_month: usize,
    pub notification_country: usize,
    pub distribution_status: usize,
    pub country_origin: usize,
    pub product_category: usize,
    pub hazard_category: usize,
    pub action_taken: usize,
}

impl Cardinalities {
    pub fn uniform(n: usize) -> Self {
        Cardinalities {
            date_month: n,
            notification_country: n,
            distribution_status: n,
            country_origin: n,
            product_category: n,
            hazard_category: n,
            action_taken: n,
        }
    }

    /// Category counts of the real register.
    pub fn register() -> Self {
        Cardinalities {
            date_month: 12,
            notification_country: 32,
            distribution_status: 17,
            country_origin: 190,
            product_category: 38,
            hazard_category: 35,
            action_taken: 24,
        }
    }

    fn in_column_order(&self) -> [(&'static str, &'static str, usize); 7] {
        [
            (DATE_MONTH, "m", self.date_month),
            (NOTIFICATION_COUNTRY, "n", self.notification_country),
            (DISTRIBUTION_STATUS, "d", self.distribution_status),
            (COUNTRY_ORIGIN, "o", self.country_origin),
            (PRODUCT_CATEGORY, "p", self.product_category),
            (HAZARD_CATEGORY, "h", self.hazard_category),
            (ACTION_TAKEN, "a", self.action_taken),
        ]
    }
}

/// Explicit mapping tables; indices are 0-based category numbers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mappings {
    /// `[origin][month] -> product`
    pub product: Vec<Vec<u32>>,
    /// `[product][origin] -> hazard`
    pub hazard: Vec<Vec<u32>>,
    /// `[hazard] -> action`
    pub action: Vec<u32>,
}

/// Generator configuration as written in a TOML spec file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub epsilon: f64,
    #[serde(default = "default_years")]
    pub years: [i32; 2],
    pub cardinalities: Cardinalities,
    #[serde(default)]
    pub mappings: Option<Mappings>,
}

fn default_years() -> [i32; 2] {
    [2004, 2019]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub cardinalities: Cardinalities,
    pub mappings: Mappings,
    pub epsilon: f64,
    pub seed: u64,
    pub years: [i32; 2],
}

impl GeneratorConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("generator spec: {e}")))
    }

    pub fn into_spec(self) -> Result<GeneratorSpec> {
        let spec = match self.mappings {
            Some(mappings) => GeneratorSpec {
                cardinalities: self.cardinalities,
                mappings,
                epsilon: self.epsilon,
                seed: self.seed,
                years: self.years,
            },
            None => GeneratorSpec::random(self.cardinalities, self.epsilon, self.seed)
                .with_years(self.years),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl GeneratorSpec {
    /// Draws mapping tables uniformly from `seed`.
    pub fn random(cardinalities: Cardinalities, epsilon: f64, seed: u64) -> Self {
        let mut rng = seeded(derive_seed(seed, 1));
        let c = cardinalities;
        let mut draw = |k: usize| rng.gen_range(0..k.max(1)) as u32;
        let product = (0..c.country_origin)
            .map(|_| {
                (0..c.date_month)
                    .map(|_| draw(c.product_category))
                    .collect()
            })
            .collect();
        let hazard = (0..c.product_category)
            .map(|_| {
                (0..c.country_origin)
                    .map(|_| draw(c.hazard_category))
                    .collect()
            })
            .collect();
        let action = (0..c.hazard_category)
            .map(|_| draw(c.action_taken))
            .collect();
        GeneratorSpec {
            cardinalities,
            mappings: Mappings {
                product,
                hazard,
                action,
            },
            epsilon,
            seed,
            years: default_years(),
        }
    }

    pub fn with_years(mut self, years: [i32; 2]) -> Self {
        self.years = years;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.cardinalities;
        if c.in_column_order().iter().any(|(_, _, n)| *n == 0) {
            return Err(Error::config("every cardinality must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::config(format!(
                "epsilon must lie in [0, 1), got {}",
                self.epsilon
            )));
        }
        if self.years[0] > self.years[1] {
            return Err(Error::config("inverted year range"));
        }
        let m = &self.mappings;
        let table_ok = |t: &[Vec<u32>], rows: usize, cols: usize, k: usize| {
            t.len() == rows
                && t.iter()
                    .all(|r| r.len() == cols && r.iter().all(|&v| (v as usize) < k))
        };
        if !table_ok(
            &m.product,
            c.country_origin,
            c.date_month,
            c.product_category,
        ) {
            return Err(Error::config(
                "product mapping must be origin x month with entries < product cardinality",
            ));
        }
        if !table_ok(
            &m.hazard,
            c.product_category,
            c.country_origin,
            c.hazard_category,
        ) {
            return Err(Error::config(
                "hazard mapping must be product x origin with entries < hazard cardinality",
            ));
        }
        if m.action.len() != c.hazard_category
            || m.action.iter().any(|&v| v as usize >= c.action_taken)
        {
            return Err(Error::config(
                "action mapping must list one action < action cardinality per hazard",
            ));
        }
        Ok(())
    }

    /// Category label of the `i`-th (0-based) value of a generated column.
    pub fn category_name(column: &str, i: usize) -> String {
        let prefix = Cardinalities::uniform(0)
            .in_column_order()
            .iter()
            .find(|(c, _, _)| *c == column)
            .map(|(_, p, _)| *p)
            .unwrap_or("v");
        format!("{prefix}{:02}", i)
    }

    pub fn schema(&self) -> Schema {
        let variables = self
            .cardinalities
            .in_column_order()
            .iter()
            .map(|&(name, _, n)| VariableSpec {
                name: name.to_owned(),
                role: if STAGE_TARGETS.contains(&name) {
                    Role::Target
                } else {
                    Role::Input
                },
                vocabulary: Vocabulary::from_entries(
                    (0..n).map(|i| Self::category_name(name, i)).collect(),
                )
                .expect("generated names are distinct"),
            })
            .collect();
        Schema::new(variables).expect("generated column names are distinct")
    }

    /// Mapped product/hazard/action (0-based) of a noiseless row.
    pub fn mapped(&self, month: u32, origin: u32) -> (u32, u32, u32) {
        let product = self.mappings.product[origin as usize][month as usize];
        let hazard = self.mappings.hazard[product as usize][origin as usize];
        (product, hazard, self.mappings.action[hazard as usize])
    }

    /// Cardinality of the target of `stage` (1, 2 or 3).
    pub fn target_cardinality(&self, stage: u8) -> Result<usize> {
        match stage {
            1 => Ok(self.cardinalities.product_category),
            2 => Ok(self.cardinalities.hazard_category),
            3 => Ok(self.cardinalities.action_taken),
            s => Err(Error::config(format!("unknown stage {s}"))),
        }
    }
}

/// Samples `n_rows` rows; the same spec always yields the same table.
pub fn synth_generate(spec: &GeneratorSpec, n_rows: usize) -> Result<Table> {
    spec.validate()?;
    let c = spec.cardinalities;
    let mut rng = seeded(derive_seed(spec.seed, 2));
    let eps = spec.epsilon;
    let mut cells = Vec::with_capacity(n_rows * 7);
    let mut years = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        years.push(rng.gen_range(spec.years[0]..=spec.years[1]));
        let month = rng.gen_range(0..c.date_month) as u32;
        let notifier = rng.gen_range(0..c.notification_country) as u32;
        let status = rng.gen_range(0..c.distribution_status) as u32;
        let origin = rng.gen_range(0..c.country_origin) as u32;
        let mut noisy = |mapped: u32, k: usize| {
            let u: f64 = rng.gen();
            let alt = rng.gen_range(0..k) as u32;
            if u < eps {
                alt
            } else {
                mapped
            }
        };
        let product = noisy(
            spec.mappings.product[origin as usize][month as usize],
            c.product_category,
        );
        let hazard = noisy(
            spec.mappings.hazard[product as usize][origin as usize],
            c.hazard_category,
        );
        let action = noisy(spec.mappings.action[hazard as usize], c.action_taken);
        cells.extend([month, notifier, status, origin, product, hazard, action].map(|v| v + 1));
    }
    Table::new(spec.schema(), cells, years, Provenance::Synthetic)
}

/// Accuracy of the optimal predictor of a stage target given its true parents.
pub fn bayes_accuracy(spec: &GeneratorSpec, stage: u8) -> Result<f64> {
    let k = spec.target_cardinality(stage)? as f64;
    Ok(bayes_accuracy_for(spec.epsilon, k as usize))
}

pub fn bayes_accuracy_for(epsilon: f64, k: usize) -> f64 {
    (1.0 - epsilon) + epsilon / k as f64
}

/// Lookup-table predictor that applies the generator mappings exactly.
///
/// It reads its inputs through the vocabularies of whatever table it is
/// evaluated on, so it works on freshly generated tables and on tables
/// re-read from CSV alike.
pub struct MappingOracle {
    plan: StagePlan,
    input_vocabularies: Vec<Vocabulary>,
    target_vocabulary: Vocabulary,
    parent_positions: Vec<usize>,
    parent_codes: Vec<HashMap<u32, u32>>,
    target_codes: Vec<u32>,
    spec: GeneratorSpec,
}

impl MappingOracle {
    pub fn new(spec: &GeneratorSpec, schema: &Schema, plan: &StagePlan) -> Result<Self> {
        let parents: &[&str] = match plan.stage {
            1 => &[COUNTRY_ORIGIN, DATE_MONTH],
            2 => &[PRODUCT_CATEGORY, COUNTRY_ORIGIN],
            3 => &[HAZARD_CATEGORY],
            s => return Err(Error::config(format!("unknown stage {s}"))),
        };
        let input_vocabularies = plan
            .inputs
            .iter()
            .map(|n| schema.variable(n).map(|v| v.vocabulary.clone()))
            .collect::<Result<Vec<_>>>()?;
        let target_vocabulary = schema.variable(&plan.target)?.vocabulary.clone();
        let mut parent_positions = Vec::new();
        let mut parent_codes = Vec::new();
        for &p in parents {
            let pos = plan.inputs.iter().position(|n| n == p).ok_or_else(|| {
                Error::schema(format!("stage {} plan lacks parent {p}", plan.stage))
            })?;
            let vocab = &input_vocabularies[pos];
            let codes = vocab
                .entries()
                .iter()
                .filter_map(|e| generator_code(p, e).map(|c| (vocab.lookup(e), c)))
                .collect();
            parent_positions.push(pos);
            parent_codes.push(codes);
        }
        let k = spec.target_cardinality(plan.stage)?;
        let target_codes = (0..k)
            .map(|c| target_vocabulary.lookup(&GeneratorSpec::category_name(&plan.target, c)))
            .collect();
        Ok(MappingOracle {
            plan: plan.clone(),
            input_vocabularies,
            target_vocabulary,
            parent_positions,
            parent_codes,
            target_codes,
            spec: spec.clone(),
        })
    }

    fn mapped_target(&self, row: &[u32]) -> Option<u32> {
        let mut parents = Vec::with_capacity(2);
        for (pos, codes) in self.parent_positions.iter().zip(&self.parent_codes) {
            parents.push(*codes.get(&row[*pos])?);
        }
        let m = &self.spec.mappings;
        let code = match self.plan.stage {
            1 => m
                .product
                .get(parents[0] as usize)?
                .get(parents[1] as usize)?,
            2 => m
                .hazard
                .get(parents[0] as usize)?
                .get(parents[1] as usize)?,
            _ => m.action.get(parents[0] as usize)?,
        };
        match self.target_codes[*code as usize] {
            UNK => None,
            idx => Some(idx - 1),
        }
    }
}

fn generator_code(column: &str, entry: &str) -> Option<u32> {
    let expected = GeneratorSpec::category_name(column, 0);
    let prefix = &expected[..expected.len() - 2];
    entry.strip_prefix(prefix)?.parse().ok()
}

impl StagePredictor for MappingOracle {
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
        let width = self.plan.inputs.len();
        let classes = self.target_vocabulary.cardinality();
        let n = rows.len() / width.max(1);
        let mut out = Matrix::zeros(n, classes);
        for (i, row) in rows.chunks(width).enumerate() {
            let probs = out.row_mut(i);
            match self.mapped_target(row) {
                Some(c) => probs[c as usize] = 1.0,
                None => probs.fill(1.0 / classes as f64),
            }
        }
        Ok(out)
    }
}
