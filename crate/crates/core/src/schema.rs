//! Variables, vocabularies and the row store consumed by every other module.
//!
//! Every categorical value is stored as a vocabulary index. Index 0 is the
//! reserved UNK slot for values that were not present when the vocabulary was
//! fitted; known values are numbered from 1 in order of first appearance.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index reserved for unseen categories.
pub const UNK: u32 = 0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    entries: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from already-distinct entries, keeping their order.
    pub fn from_entries(entries: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.clone(), i as u32 + 1).is_some() {
                return Err(Error::schema(format!("duplicate vocabulary entry {e:?}")));
            }
        }
        Ok(Vocabulary { entries, index })
    }

    /// Number of known categories (UNK excluded).
    pub fn cardinality(&self) -> usize {
        self.entries.len()
    }

    /// 1-based index of a known value, [`UNK`] otherwise.
    pub fn lookup(&self, value: &str) -> u32 {
        self.index.get(value).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, value: &str) -> bool {
        self.index.contains_key(value)
    }

    /// Inverse of [`lookup`](Self::lookup); `None` for UNK or out-of-range.
    pub fn decode(&self, index: u32) -> Option<&str> {
        if index == UNK {
            return None;
        }
        self.entries.get(index as usize - 1).map(String::as_str)
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(entries: Vec<String>) -> Result<Self> {
        Vocabulary::from_entries(entries)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.entries
    }
}

/// Fits a vocabulary over a column, numbering values by first appearance.
pub fn fit_vocabulary<S: AsRef<str>>(raw_column: &[S]) -> Result<Vocabulary> {
    if raw_column.is_empty() {
        return Err(Error::schema("cannot fit a vocabulary on an empty column"));
    }
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for value in raw_column {
        let value = value.as_ref();
        if seen.insert(value) {
            entries.push(value.to_owned());
        }
    }
    Vocabulary::from_entries(entries)
}

/// How a variable participates in modelling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Input,
    Target,
    Ignored,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub role: Role,
    pub vocabulary: Vocabulary,
}

impl VariableSpec {
    pub fn cardinality(&self) -> usize {
        self.vocabulary.cardinality()
    }
}

/// Ordered list of variables with unique names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<VariableSpec>", into = "Vec<VariableSpec>")]
pub struct Schema {
    variables: Vec<VariableSpec>,
}

impl Schema {
    pub fn new(variables: Vec<VariableSpec>) -> Result<Self> {
        let mut names = HashSet::new();
        for v in &variables {
            if !names.insert(v.name.as_str()) {
                return Err(Error::schema(format!("duplicate variable name {}", v.name)));
            }
        }
        Ok(Schema { variables })
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::schema(format!("unknown variable {name}")))
    }

    pub fn variable(&self, name: &str) -> Result<&VariableSpec> {
        self.position(name).map(|i| &self.variables[i])
    }

    /// A schema restricted to the named variables, in the given order.
    pub fn project(&self, names: &[String]) -> Result<Schema> {
        let variables = names
            .iter()
            .map(|n| self.variable(n).cloned())
            .collect::<Result<Vec<_>>>()?;
        Schema::new(variables)
    }
}

impl TryFrom<Vec<VariableSpec>> for Schema {
    type Error = Error;

    fn try_from(v: Vec<VariableSpec>) -> Result<Self> {
        Schema::new(v)
    }
}

impl From<Schema> for Vec<VariableSpec> {
    fn from(s: Schema) -> Self {
        s.variables
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Synthetic,
}

/// Row-major store of vocabulary indices plus a per-row year.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    schema: Schema,
    cells: Vec<u32>,
    years: Vec<i32>,
    provenance: Provenance,
}

impl Table {
    pub fn new(
        schema: Schema,
        cells: Vec<u32>,
        years: Vec<i32>,
        provenance: Provenance,
    ) -> Result<Self> {
        let width = schema.len();
        if width == 0 {
            return Err(Error::schema("table schema has no variables"));
        }
        if cells.len() != width * years.len() {
            return Err(Error::schema(format!(
                "cell count {} inconsistent with {} rows of {} variables",
                cells.len(),
                years.len(),
                width
            )));
        }
        for row in cells.chunks(width) {
            for (cell, var) in row.iter().zip(schema.variables()) {
                if *cell as usize > var.cardinality() {
                    return Err(Error::schema(format!(
                        "index {} out of range for {} (cardinality {})",
                        cell,
                        var.name,
                        var.cardinality()
                    )));
                }
            }
        }
        Ok(Table {
            schema,
            cells,
            years,
            provenance,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.years.len()
    }

    pub fn width(&self) -> usize {
        self.schema.len()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn row(&self, i: usize) -> &[u32] {
        let w = self.width();
        &self.cells[i * w..(i + 1) * w]
    }

    pub fn get(&self, row: usize, column: usize) -> u32 {
        self.cells[row * self.width() + column]
    }

    /// Gathers `columns` of the listed rows into a dense row-major block.
    pub fn gather(&self, rows: &[usize], columns: &[usize]) -> Vec<u32> {
        let mut out = Vec::with_capacity(rows.len() * columns.len());
        for &r in rows {
            let row = self.row(r);
            out.extend(columns.iter().map(|&c| row[c]));
        }
        out
    }

    /// A new table holding only the listed rows, in that order.
    pub fn select(&self, rows: &[usize]) -> Table {
        let all: Vec<usize> = (0..self.width()).collect();
        Table {
            schema: self.schema.clone(),
            cells: self.gather(rows, &all),
            years: rows.iter().map(|&r| self.years[r]).collect(),
            provenance: self.provenance,
        }
    }

    /// Decoded string value of a cell; `None` for UNK.
    pub fn value(&self, row: usize, column: usize) -> Option<&str> {
        self.schema.variables()[column]
            .vocabulary
            .decode(self.get(row, column))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn type_variable_gets_first_appearance_order() {
        let v = fit_vocabulary(&["food", "feed", "fcm"]).unwrap();
        assert_eq!(v.lookup("food"), 1);
        assert_eq!(v.lookup("feed"), 2);
        assert_eq!(v.lookup("fcm"), 3);
        assert_eq!(v.cardinality(), 3);
    }

    #[test]
    fn single_category() {
        let v = fit_vocabulary(&["a"]).unwrap();
        assert_eq!(v.lookup("a"), 1);
        assert_eq!(v.cardinality(), 1);
    }

    #[test]
    fn repeated_values_keep_first_position() {
        let v = fit_vocabulary(&["b", "a", "b", "c"]).unwrap();
        assert_eq!(v.entries(), &strings(&["b", "a", "c"])[..]);
        assert_eq!((v.lookup("b"), v.lookup("a"), v.lookup("c")), (1, 2, 3));
    }

    #[test]
    fn empty_column_is_rejected() {
        let empty: [&str; 0] = [];
        assert!(matches!(fit_vocabulary(&empty), Err(Error::Schema(_))));
    }

    #[test]
    fn unseen_maps_to_unk() {
        let v = fit_vocabulary(&["food", "feed", "fcm"]).unwrap();
        assert_eq!(v.lookup("never-seen"), UNK);
        assert_eq!(v.decode(UNK), None);
        assert_eq!(v.decode(4), None);
    }

    #[test]
    fn lookup_is_a_bijection_onto_one_to_n() {
        let column: Vec<String> = (0..300).map(|i| format!("cat{}", (i * 7) % 113)).collect();
        let v = fit_vocabulary(&column).unwrap();
        let mut seen: Vec<u32> = v.entries().iter().map(|e| v.lookup(e)).collect();
        seen.sort_unstable();
        assert_eq!(seen, (1..=v.cardinality() as u32).collect::<Vec<_>>());
    }

    #[test]
    fn duplicate_entries_rejected() {
        assert!(Vocabulary::from_entries(strings(&["x", "x"])).is_err());
    }

    #[test]
    fn schema_names_unique() {
        let v = fit_vocabulary(&["a"]).unwrap();
        let spec = |n: &str| VariableSpec {
            name: n.into(),
            role: Role::Input,
            vocabulary: v.clone(),
        };
        assert!(Schema::new(vec![spec("A"), spec("A")]).is_err());
        assert!(Schema::new(vec![spec("A"), spec("B")]).is_ok());
    }

    #[test]
    fn table_rejects_out_of_range_cells() {
        let v = fit_vocabulary(&["a", "b"]).unwrap();
        let schema = Schema::new(vec![VariableSpec {
            name: "X".into(),
            role: Role::Input,
            vocabulary: v,
        }])
        .unwrap();
        assert!(Table::new(
            schema.clone(),
            vec![0, 1, 2],
            vec![1, 2, 3],
            Provenance::Real
        )
        .is_ok());
        assert!(Table::new(schema.clone(), vec![3], vec![1], Provenance::Real).is_err());
        assert!(Table::new(schema, vec![1, 2], vec![1], Provenance::Real).is_err());
    }

    #[test]
    fn vocabulary_serde_round_trip() {
        let v = fit_vocabulary(&["food", "feed"]).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"["food","feed"]"#);
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert!(serde_json::from_str::<Vocabulary>(r#"["a","a"]"#).is_err());
    }

    proptest! {
        #[test]
        fn decode_inverts_lookup(col in prop::collection::vec("[a-e]{1,3}", 1..60)) {
            let v = fit_vocabulary(&col).unwrap();
            for s in &col {
                prop_assert_eq!(v.decode(v.lookup(s)), Some(s.as_str()));
            }
            prop_assert_eq!(fit_vocabulary(&col).unwrap(), v);
        }

        #[test]
        fn permuting_rows_keeps_cardinality(col in prop::collection::vec("[a-h]", 1..60), seed in any::<u64>()) {
            let mut shuffled = col.clone();
            let mut rng = crate::rng::seeded(seed);
            rand::seq::SliceRandom::shuffle(&mut shuffled[..], &mut rng);
            prop_assert_eq!(
                fit_vocabulary(&col).unwrap().cardinality(),
                fit_vocabulary(&shuffled).unwrap().cardinality()
            );
        }
    }
}
