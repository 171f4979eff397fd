use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, permutation, seeded};
use crate::schema::Table;

pub const DEFAULT_MIN_YEAR: i32 = 2004;
pub const DEFAULT_MAX_YEAR: i32 = 2019;
pub const DEFAULT_TEST_YEAR: i32 = 2019;
pub const DEFAULT_FOLDS: usize = 5;

/// Fraction of the non-test rows assigned to training.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub test_year: i32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// (training rows, held-out rows) for fold `f`.
    pub fn fold(&self, f: usize) -> (Vec<usize>, &[usize]) {
        let mut train: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != f)
            .flat_map(|(_, rows)| rows.iter().copied())
            .collect();
        train.sort_unstable();
        (train, &self.folds[f])
    }
}

/// Keeps rows whose year lies in `[min_year, max_year]`.
pub fn filter_years(table: &Table, min_year: i32, max_year: i32) -> Result<Table> {
    if min_year > max_year {
        return Err(Error::data(format!(
            "inverted year range {min_year}..{max_year}"
        )));
    }
    let rows: Vec<usize> = (0..table.n_rows())
        .filter(|&i| (min_year..=max_year).contains(&table.years()[i]))
        .collect();
    if rows.is_empty() {
        return Err(Error::data(format!(
            "no rows between {min_year} and {max_year}"
        )));
    }
    Ok(table.select(&rows))
}

/// Holds out `test_year` and splits the remaining rows 80/20 at random.
pub fn make_split(table: &Table, test_year: i32, seed: u64) -> Result<SplitPlan> {
    let (test, rest): (Vec<usize>, Vec<usize>) =
        (0..table.n_rows()).partition(|&i| table.years()[i] == test_year);
    if test.is_empty() {
        return Err(Error::data(format!("no rows in test year {test_year}")));
    }
    if rest.is_empty() {
        return Err(Error::data(format!(
            "every row belongs to test year {test_year}"
        )));
    }
    let order = permutation(rest.len(), &mut seeded(seed));
    let n_train = (rest.len() as f64 * TRAIN_FRACTION).round() as usize;
    let mut train: Vec<usize> = order[..n_train].iter().map(|&i| rest[i]).collect();
    let mut validation: Vec<usize> = order[n_train..].iter().map(|&i| rest[i]).collect();
    train.sort_unstable();
    validation.sort_unstable();
    Ok(SplitPlan {
        train,
        validation,
        test,
        seed,
        test_year,
    })
}

/// Seeded shuffle of `rows` followed by round-robin assignment to `k` folds.
pub fn make_folds(rows: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::config(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > rows.len() {
        return Err(Error::data(format!(
            "k = {k} exceeds the {} training rows",
            rows.len()
        )));
    }
    let order = permutation(rows.len(), &mut seeded(derive_seed(seed, 0xF01D)));
    let mut folds = vec![Vec::with_capacity(rows.len() / k + 1); k];
    for (pos, &i) in order.iter().enumerate() {
        folds[pos % k].push(rows[i]);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan { k, folds })
}
