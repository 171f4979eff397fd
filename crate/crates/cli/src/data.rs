//! Dataset files: cleaned CSV tables, their metadata sidecars and ingest directories.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use catcast_core::columns::YEAR;
use catcast_core::ingest::{
    build_table, default_role, filter_years, make_split, parse_csv, preprocess, write_csv,
    GeneratorSpec, RawTable, RenameMap, SplitPlan,
};
use catcast_core::schema::{Provenance, Table};
use serde::{Deserialize, Serialize};

use crate::config::SplitSettings;

/// File name of the cleaned table inside an ingest directory.
pub const TABLE_FILE: &str = "data.csv";
/// File name of the stored split inside an ingest directory.
pub const SPLIT_FILE: &str = "split.json";

/// Sidecar written next to a CSV as `<file>.meta.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub provenance: Provenance,
    /// Present for generated data; lets oracles be rebuilt from the file alone.
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
}

/// Split stored by `ingest`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredSplit {
    pub settings: SplitSettings,
    pub plan: SplitPlan,
}

pub struct Dataset {
    pub table: Table,
    pub split: SplitPlan,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn rows(&self, set: RowSet) -> &[usize] {
        match set {
            RowSet::Train => &self.split.train,
            RowSet::Validation => &self.split.validation,
            RowSet::Test => &self.split.test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RowSet {
    Train,
    Validation,
    Test,
}

pub fn meta_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn read_raw(path: &Path) -> Result<RawTable> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse_csv(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

pub fn write_raw(table: &RawTable, path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_csv(table, BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_meta(csv: &Path) -> Result<DatasetMeta> {
    let path = meta_path(csv);
    if path.exists() {
        read_json(&path)
    } else {
        Ok(DatasetMeta {
            provenance: Provenance::Real,
            generator: None,
        })
    }
}

/// Cleans a dump when it lacks the derived `YEAR` column; cleaned tables pass through.
pub fn ensure_clean(raw: RawTable) -> Result<RawTable> {
    if raw.column_index(YEAR).is_some() {
        Ok(raw)
    } else {
        Ok(preprocess(&raw, &RenameMap::default())?.0)
    }
}

/// Indexes a cleaned table: vocabularies come from the in-range, non-test years.
pub fn index_table(raw: &RawTable, provenance: Provenance, split: &SplitSettings) -> Result<Table> {
    let in_fit = |y: i32| (split.min_year..=split.max_year).contains(&y) && y != split.test_year;
    let table = build_table(raw, provenance, default_role, in_fit)?;
    Ok(filter_years(&table, split.min_year, split.max_year)?)
}

/// Loads `path`: an ingest directory (stored split) or a CSV (split drawn from `seed`).
pub fn load_dataset(path: &Path, split: &SplitSettings, seed: u64) -> Result<Dataset> {
    if path.is_dir() {
        let csv = path.join(TABLE_FILE);
        let stored: StoredSplit = read_json(&path.join(SPLIT_FILE))?;
        let meta = read_meta(&csv)?;
        let table = index_table(&read_raw(&csv)?, meta.provenance, &stored.settings)?;
        return Ok(Dataset {
            table,
            split: stored.plan,
            meta,
        });
    }
    let meta = read_meta(path)?;
    let raw = ensure_clean(read_raw(path)?)?;
    let table = index_table(&raw, meta.provenance, split)?;
    let plan = make_split(&table, split.test_year, seed)?;
    Ok(Dataset {
        table,
        split: plan,
        meta,
    })
}
