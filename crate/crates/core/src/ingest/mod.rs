//! Dump parsing, cleaning, year-based splitting and synthetic data.

mod csv;
mod preprocess;
mod split;
pub mod synth;

pub use self::csv::{parse_csv, write_csv, RawTable};
pub use preprocess::{clean_value, parse_date, preprocess, PreprocessStats, RenameMap, BLANK};
pub use split::{
    filter_years, make_folds, make_split, FoldPlan, SplitPlan, DEFAULT_FOLDS, DEFAULT_MAX_YEAR,
    DEFAULT_MIN_YEAR, DEFAULT_TEST_YEAR, TRAIN_FRACTION,
};
pub use synth::{
    bayes_accuracy, synth_generate, Cardinalities, GeneratorConfig, GeneratorSpec, MappingOracle,
};

use std::collections::HashSet;

use crate::columns::{FREE_TEXT, STAGE1_INPUTS, STAGE_TARGETS, YEAR};
use crate::error::{Error, Result};
use crate::schema::{Provenance, Role, Schema, Table, VariableSpec, Vocabulary};

/// Modelling role of a register column.
pub fn default_role(column: &str) -> Role {
    if STAGE_TARGETS.contains(&column) {
        Role::Target
    } else if STAGE1_INPUTS.contains(&column) {
        Role::Input
    } else {
        Role::Ignored
    }
}

/// Builds a [`Table`] from a cleaned dump carrying a `YEAR` column.
///
/// Vocabularies are fitted on the rows whose year satisfies `fit_year`, in
/// first-appearance order; values that only occur in the other rows map to UNK.
pub fn build_table(
    raw: &RawTable,
    provenance: Provenance,
    role: impl Fn(&str) -> Role,
    fit_year: impl Fn(i32) -> bool,
) -> Result<Table> {
    let year_col = raw.column_index(YEAR).ok_or_else(|| {
        Error::schema("cleaned table has no YEAR column; run preprocessing first")
    })?;
    let years = raw
        .column(year_col)
        .enumerate()
        .map(|(i, y)| {
            y.trim().parse::<i32>().map_err(|_| Error::FormatAt {
                line: i as u64 + 2,
                message: format!("unparseable year {y:?}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit_rows: Vec<usize> = (0..raw.n_rows()).filter(|&i| fit_year(years[i])).collect();
    if fit_rows.is_empty() {
        return Err(Error::data("no rows available to fit vocabularies"));
    }

    let columns: Vec<usize> = (0..raw.header.len()).filter(|&c| c != year_col).collect();
    let mut variables = Vec::with_capacity(columns.len());
    for &c in &columns {
        let mut seen = HashSet::new();
        let mut entries = Vec::new();
        for &r in &fit_rows {
            let v = raw.rows[r][c].as_str();
            if seen.insert(v) {
                entries.push(v.to_owned());
            }
        }
        let name = raw.header[c].clone();
        let role = if FREE_TEXT.contains(&name.as_str()) {
            Role::Ignored
        } else {
            role(&name)
        };
        variables.push(VariableSpec {
            name,
            role,
            vocabulary: Vocabulary::from_entries(entries)?,
        });
    }
    let schema = Schema::new(variables)?;

    let mut cells = Vec::with_capacity(raw.n_rows() * columns.len());
    for row in &raw.rows {
        for (var, &c) in schema.variables().iter().zip(&columns) {
            cells.push(var.vocabulary.lookup(&row[c]));
        }
    }
    Table::new(schema, cells, years, provenance)
}

/// Inverse of [`build_table`]: decodes a table back to strings (UNK cells as `<UNK>`).
pub fn table_to_raw(table: &Table) -> RawTable {
    let mut header: Vec<String> = table
        .schema()
        .variables()
        .iter()
        .map(|v| v.name.clone())
        .collect();
    header.push(YEAR.to_owned());
    let rows = (0..table.n_rows())
        .map(|i| {
            let mut row: Vec<String> = (0..table.width())
                .map(|c| table.value(i, c).unwrap_or("<UNK>").to_owned())
                .collect();
            row.push(table.years()[i].to_string());
            row
        })
        .collect();
    RawTable { header, rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::UNK;

    #[test]
    fn vocabulary_fitted_outside_test_year() {
        let raw = RawTable::new(
            vec!["COUNTRY_ORIGIN".into(), "SUBJECT".into(), "YEAR".into()],
            vec![
                vec!["china".into(), "s1".into(), "2018".into()],
                vec!["india".into(), "s2".into(), "2018".into()],
                vec!["peru".into(), "s3".into(), "2019".into()],
            ],
        )
        .unwrap();
        let t = build_table(&raw, Provenance::Real, default_role, |y| y != 2019).unwrap();
        let origin = t.schema().variable("COUNTRY_ORIGIN").unwrap();
        assert_eq!(origin.cardinality(), 2);
        assert_eq!(origin.role, Role::Input);
        assert_eq!(t.schema().variable("SUBJECT").unwrap().role, Role::Ignored);
        assert_eq!(t.get(2, 0), UNK);
        assert_eq!(t.years(), &[2018, 2018, 2019]);
    }

    #[test]
    fn missing_year_column_is_a_schema_error() {
        let raw = RawTable::new(vec!["TYPE".into()], vec![vec!["food".into()]]).unwrap();
        assert!(matches!(
            build_table(&raw, Provenance::Real, default_role, |_| true),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn synthetic_table_survives_csv_round_trip() {
        let spec = GeneratorSpec::random(Cardinalities::uniform(4), 0.1, 2);
        let t = synth_generate(&spec, 100).unwrap();
        let raw = table_to_raw(&t);
        let mut buf = Vec::new();
        write_csv(&raw, &mut buf).unwrap();
        let back = build_table(
            &parse_csv(buf.as_slice()).unwrap(),
            Provenance::Synthetic,
            default_role,
            |_| true,
        )
        .unwrap();
        for i in 0..t.n_rows() {
            for c in 0..t.width() {
                assert_eq!(t.value(i, c), back.value(i, c));
            }
        }
        assert_eq!(back.years(), t.years());
    }
}
