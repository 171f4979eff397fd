use std::collections::{HashMap, HashSet};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::csv::RawTable;
use crate::columns::{DATE_CASE, DATE_MONTH, IDENTIFIERS, YEAR};
use crate::error::{Error, Result};

/// Replacement for empty and NaN-like cells.
pub const BLANK: &str = "<BLANK>";

/// Old-to-new category renames, applied after normalisation.
///
/// Chains (`a -> b`, `b -> c`) are resolved at construction so that applying
/// the map twice is the same as applying it once.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RenameMap {
    map: HashMap<String, String>,
}

impl RenameMap {
    pub fn new<I, K, V>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut raw = HashMap::new();
        for (k, v) in pairs {
            let (k, v) = (normalize(k.as_ref()), normalize(v.as_ref()));
            if k != v {
                raw.insert(k, v);
            }
        }
        let mut map = HashMap::with_capacity(raw.len());
        for key in raw.keys() {
            let mut target = &raw[key];
            let mut hops = 0;
            while let Some(next) = raw.get(target) {
                target = next;
                hops += 1;
                if hops > raw.len() {
                    return Err(Error::config(format!(
                        "rename map has a cycle through {key:?}"
                    )));
                }
            }
            map.insert(key.clone(), target.clone());
        }
        Ok(RenameMap { map })
    }

    /// Reads a two-column CSV (`old,new`) with a header row.
    pub fn from_csv<R: std::io::Read>(stream: R) -> Result<Self> {
        let table = super::csv::parse_csv(stream)?;
        if table.header.len() != 2 {
            return Err(Error::format("rename table must have exactly two columns"));
        }
        RenameMap::new(table.rows.into_iter().map(|r| (r[0].clone(), r[1].clone())))
    }

    pub fn apply<'a>(&'a self, value: &'a str) -> &'a str {
        self.map.get(value).map(String::as_str).unwrap_or(value)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Counters reported alongside the cleaned table.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub input_rows: usize,
    pub blanks_replaced: usize,
    pub renamed: usize,
    pub bad_dates_dropped: usize,
    pub duplicates_removed: usize,
    pub output_rows: usize,
}

fn normalize(value: &str) -> String {
    value.trim().to_lowercase()
}

fn is_blank(value: &str) -> bool {
    let v = value.trim();
    v.is_empty() || v.eq_ignore_ascii_case("nan")
}

/// Cleans a single category value exactly as [`preprocess`] cleans a cell.
pub fn clean_value(value: &str, renames: &RenameMap) -> String {
    if value == BLANK || is_blank(value) {
        BLANK.to_owned()
    } else {
        renames.apply(&normalize(value)).to_owned()
    }
}

/// `dd/mm/yyyy` to (month, year).
pub fn parse_date(value: &str) -> Option<(u32, i32)> {
    NaiveDate::parse_from_str(value.trim(), "%d/%m/%Y")
        .ok()
        .map(|d| (d.month(), d.year()))
}

/// Cleans a raw dump.
///
/// Steps, in order: identifier columns dropped; blank and NaN cells replaced by
/// [`BLANK`]; categories trimmed and lower-cased; renames applied; `DATE_CASE`
/// parsed into the derived `DATE_MONTH` and `YEAR` columns (rows whose date does
/// not parse are dropped and counted); exact duplicate rows removed, first kept.
pub fn preprocess(raw: &RawTable, renames: &RenameMap) -> Result<(RawTable, PreprocessStats)> {
    let mut stats = PreprocessStats {
        input_rows: raw.n_rows(),
        ..Default::default()
    };

    let keep: Vec<usize> = (0..raw.header.len())
        .filter(|&i| !IDENTIFIERS.contains(&raw.header[i].as_str()))
        .filter(|&i| raw.header[i] != DATE_MONTH && raw.header[i] != YEAR)
        .collect();
    let mut header: Vec<String> = keep.iter().map(|&i| raw.header[i].clone()).collect();
    let date_col = header.iter().position(|h| h == DATE_CASE);
    // Without a date column, previously derived columns are carried verbatim.
    let carried: Vec<usize> = if date_col.is_none() {
        [DATE_MONTH, YEAR]
            .iter()
            .filter_map(|c| raw.column_index(c))
            .collect()
    } else {
        Vec::new()
    };
    header.extend(carried.iter().map(|&i| raw.header[i].clone()));
    if date_col.is_some() {
        header.push(DATE_MONTH.to_owned());
        header.push(YEAR.to_owned());
    }

    let mut rows = Vec::with_capacity(raw.n_rows());
    for raw_row in &raw.rows {
        let mut row = Vec::with_capacity(header.len());
        for (pos, &i) in keep.iter().enumerate() {
            let cell = &raw_row[i];
            let value = if cell == BLANK {
                BLANK.to_owned()
            } else if is_blank(cell) {
                stats.blanks_replaced += 1;
                BLANK.to_owned()
            } else {
                let normalized = normalize(cell);
                if Some(pos) == date_col {
                    normalized
                } else {
                    let renamed = renames.apply(&normalized);
                    if renamed != normalized {
                        stats.renamed += 1;
                    }
                    renamed.to_owned()
                }
            };
            row.push(value);
        }
        row.extend(carried.iter().map(|&i| raw_row[i].clone()));
        if let Some(dc) = date_col {
            match parse_date(&row[dc]) {
                Some((month, year)) => {
                    row.push(format!("{month:02}"));
                    row.push(year.to_string());
                }
                None => {
                    stats.bad_dates_dropped += 1;
                    continue;
                }
            }
        }
        rows.push(row);
    }

    let mut seen = HashSet::with_capacity(rows.len());
    let before = rows.len();
    rows.retain(|r| seen.insert(r.clone()));
    stats.duplicates_removed = before - rows.len();
    stats.output_rows = rows.len();

    Ok((RawTable { header, rows }, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(header: &[&str], rows: &[&[&str]]) -> RawTable {
        RawTable::new(
            header.iter().map(|s| s.to_string()).collect(),
            rows.iter()
                .map(|r| r.iter().map(|s| s.to_string()).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn capitalisation_and_whitespace_fold_together() {
        let raw = table(&["TYPE"], &[&[" Food"], &["food"], &["FEED "]]);
        let (clean, stats) = preprocess(&raw, &RenameMap::default()).unwrap();
        assert_eq!(
            clean.rows,
            vec![vec!["food".to_string()], vec!["feed".to_string()]]
        );
        assert_eq!(stats.duplicates_removed, 1);
    }

    #[test]
    fn identical_rows_collapse() {
        let raw = table(&["A", "B"], &[&["x", "y"], &["x", "y"]]);
        let (clean, _) = preprocess(&raw, &RenameMap::default()).unwrap();
        assert_eq!(clean.n_rows(), 1);
    }

    #[test]
    fn blanks_become_sentinel() {
        let raw = table(&["A"], &[&[""], &["NaN"], &["nan"], &["  "]]);
        let (clean, stats) = preprocess(&raw, &RenameMap::default()).unwrap();
        assert_eq!(clean.rows, vec![vec![BLANK.to_string()]]);
        assert_eq!(stats.blanks_replaced, 4);
    }

    #[test]
    fn date_splits_into_month_and_year() {
        assert_eq!(parse_date("13/11/2019"), Some((11, 2019)));
        assert_eq!(parse_date("31/02/2019"), None);
        assert_eq!(parse_date("2019-11-13"), None);

        let raw = table(
            &["NUMBER", "DATE_CASE", "REF", "TYPE"],
            &[
                &["1", "13/11/2019", "2019.1", "food"],
                &["2", "not a date", "2019.2", "food"],
            ],
        );
        let (clean, stats) = preprocess(&raw, &RenameMap::default()).unwrap();
        assert_eq!(
            clean.header,
            vec!["DATE_CASE", "TYPE", "DATE_MONTH", "YEAR"]
        );
        assert_eq!(clean.rows, vec![vec!["13/11/2019", "food", "11", "2019"]]);
        assert_eq!(stats.bad_dates_dropped, 1);
    }

    #[test]
    fn rows_differing_only_by_identifier_are_duplicates() {
        let raw = table(
            &["NUMBER", "REF", "TYPE"],
            &[&["1", "a", "food"], &["2", "b", "food"]],
        );
        let (clean, _) = preprocess(&raw, &RenameMap::default()).unwrap();
        assert_eq!(clean.n_rows(), 1);
    }

    #[test]
    fn renames_resolve_chains() {
        let map = RenameMap::new([("Old", "Mid"), ("mid", "new")]).unwrap();
        assert_eq!(map.apply("old"), "new");
        assert_eq!(map.apply("mid"), "new");
        assert!(RenameMap::new([("a", "b"), ("b", "a")]).is_err());

        let raw = table(&["PRODUCT_CATEGORY"], &[&["Old"], &["new"]]);
        let (clean, stats) = preprocess(&raw, &map).unwrap();
        assert_eq!(clean.rows, vec![vec!["new".to_string()]]);
        assert_eq!(stats.renamed, 1);
    }

    #[test]
    fn rename_table_from_csv() {
        let map = RenameMap::from_csv("old,new\nnuts,nuts and seeds\n".as_bytes()).unwrap();
        assert_eq!(map.apply("nuts"), "nuts and seeds");
    }

    #[test]
    fn idempotent_on_mixed_dump() {
        let raw = table(
            &["NUMBER", "DATE_CASE", "TYPE", "PRODUCT_CATEGORY"],
            &[
                &["1", "13/11/2019", " Food", "Nuts"],
                &["2", "14/11/2019", "food", "nuts"],
                &["3", "14/11/2019", "FOOD", "NUTS "],
                &["4", "", "feed", "NaN"],
                &["5", "01/01/2004", "fcm", ""],
            ],
        );
        let renames = RenameMap::new([("nuts", "nuts and seeds")]).unwrap();
        let (once, _) = preprocess(&raw, &renames).unwrap();
        let (twice, _) = preprocess(&once, &renames).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once.n_rows(), 3);
    }
}
