//! Classical categorical encodings: integer, binary, feature hashing and one-hot.
//!
//! Every scheme reserves room for the UNK index 0. Integer codes it as 0.0,
//! binary as the all-zero word, one-hot as its own leading slot, and hashing
//! as the all-zero vector (an unseen value has no string to hash).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Schema, Table, Vocabulary};
use crate::tensor::Matrix;

pub const DEFAULT_HASH_BUCKETS: usize = 256;

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncodingScheme {
    Integer,
    Binary,
    Hashing { buckets: usize },
    OneHot,
}

impl EncodingScheme {
    pub fn validate(&self) -> Result<()> {
        match self {
            EncodingScheme::Hashing { buckets } if *buckets < 2 => Err(Error::encode(format!(
                "hashing needs at least 2 buckets, got {buckets}"
            ))),
            _ => Ok(()),
        }
    }

    /// Number of columns one variable of `cardinality` categories occupies.
    pub fn width(&self, cardinality: usize) -> Result<usize> {
        Ok(match self {
            EncodingScheme::Integer => 1,
            EncodingScheme::Binary => binary_width(cardinality)?,
            EncodingScheme::Hashing { buckets } => *buckets,
            EncodingScheme::OneHot => cardinality + 1,
        })
    }
}

impl fmt::Display for EncodingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncodingScheme::Integer => write!(f, "integer"),
            EncodingScheme::Binary => write!(f, "binary"),
            EncodingScheme::Hashing { buckets } => write!(f, "hashing({buckets})"),
            EncodingScheme::OneHot => write!(f, "one-hot"),
        }
    }
}

impl FromStr for EncodingScheme {
    type Err = Error;

    /// Parses `integer`, `binary`, `one-hot` or `hashing` (default bucket count).
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "integer" => Ok(EncodingScheme::Integer),
            "binary" => Ok(EncodingScheme::Binary),
            "one-hot" | "onehot" | "one_hot" => Ok(EncodingScheme::OneHot),
            "hashing" => Ok(EncodingScheme::Hashing {
                buckets: DEFAULT_HASH_BUCKETS,
            }),
            other => Err(Error::config(format!("unknown encoding {other:?}"))),
        }
    }
}

fn check_index(index: u32, cardinality: usize) -> Result<()> {
    if index as usize > cardinality {
        return Err(Error::encode(format!(
            "index {index} exceeds cardinality {cardinality}"
        )));
    }
    Ok(())
}

pub fn integer_encode(index: u32, cardinality: usize) -> Result<f64> {
    check_index(index, cardinality)?;
    Ok(index as f64)
}

/// `ceil(log2(n + 1))`: the bits needed for codes `0..=n`.
pub fn binary_width(n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::encode("binary width of an empty vocabulary"));
    }
    Ok((usize::BITS - n.leading_zeros()) as usize)
}

/// Big-endian base-2 digits of `index`.
pub fn binary_encode(index: u32, width: usize) -> Result<Vec<u8>> {
    if width < 32 && index >> width != 0 {
        return Err(Error::encode(format!(
            "index {index} does not fit in {width} bits"
        )));
    }
    Ok((0..width)
        .rev()
        .map(|bit| {
            if bit < 32 {
                ((index >> bit) & 1) as u8
            } else {
                0
            }
        })
        .collect())
}

/// 64-bit FNV-1a over the given bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |h, &b| {
        (h ^ b as u64).wrapping_mul(FNV_PRIME)
    })
}

/// Bucket of a raw category string: FNV-1a of its UTF-8 bytes modulo `buckets`.
pub fn hash_encode(value: &str, buckets: usize) -> Result<usize> {
    if buckets < 2 {
        return Err(Error::encode(format!(
            "hashing needs at least 2 buckets, got {buckets}"
        )));
    }
    Ok((fnv1a64(value.as_bytes()) % buckets as u64) as usize)
}

/// Indicator vector of length `cardinality + 1`; slot 0 is UNK.
pub fn one_hot(index: u32, cardinality: usize) -> Result<Vec<f64>> {
    check_index(index, cardinality)?;
    let mut v = vec![0.0; cardinality + 1];
    v[index as usize] = 1.0;
    Ok(v)
}

/// Writes the encoding of one value into `out` (already zeroed, `width` long).
fn encode_into(
    scheme: &EncodingScheme,
    vocab: &Vocabulary,
    index: u32,
    out: &mut [f64],
) -> Result<()> {
    let n = vocab.cardinality();
    check_index(index, n)?;
    match scheme {
        EncodingScheme::Integer => out[0] = index as f64,
        EncodingScheme::Binary => {
            let bits = binary_encode(index, out.len())?;
            for (o, bit) in out.iter_mut().zip(bits) {
                *o = bit as f64;
            }
        }
        EncodingScheme::Hashing { buckets } => {
            if let Some(value) = vocab.decode(index) {
                out[hash_encode(value, *buckets)?] = 1.0;
            }
        }
        EncodingScheme::OneHot => out[index as usize] = 1.0,
    }
    Ok(())
}

/// Encodes rows of vocabulary indices (`vocabs.len()` per row) into a dense matrix.
pub fn encode_rows(
    vocabs: &[&Vocabulary],
    scheme: &EncodingScheme,
    rows: &[u32],
) -> Result<Matrix> {
    scheme.validate()?;
    let widths = vocabs
        .iter()
        .map(|v| scheme.width(v.cardinality()))
        .collect::<Result<Vec<_>>>()?;
    let total: usize = widths.iter().sum();
    let per_row = vocabs.len();
    if per_row == 0 {
        return Err(Error::encode("no variables to encode"));
    }
    let n = rows.len() / per_row;
    let mut out = Matrix::zeros(n, total);
    for (i, row) in rows.chunks(per_row).enumerate() {
        let dst = out.row_mut(i);
        let mut offset = 0;
        for ((vocab, &w), &index) in vocabs.iter().zip(&widths).zip(row) {
            encode_into(scheme, vocab, index, &mut dst[offset..offset + w])?;
            offset += w;
        }
    }
    Ok(out)
}

/// Column labels: `VAR` for integer, `VAR-<i>` for binary and hashing, and
/// `VAR-<category>` for one-hot (slot 0 is `VAR-<UNK>`).
pub fn column_names(
    name: &str,
    vocab: &Vocabulary,
    scheme: &EncodingScheme,
) -> Result<Vec<String>> {
    Ok(match scheme {
        EncodingScheme::Integer => vec![name.to_owned()],
        EncodingScheme::Binary => (0..binary_width(vocab.cardinality())?)
            .map(|i| format!("{name}-{i}"))
            .collect(),
        EncodingScheme::Hashing { buckets } => {
            (0..*buckets).map(|i| format!("{name}-{i}")).collect()
        }
        EncodingScheme::OneHot => std::iter::once(format!("{name}-<UNK>"))
            .chain(vocab.entries().iter().map(|e| format!("{name}-{e}")))
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedMatrix {
    pub values: Matrix,
    pub column_names: Vec<String>,
    pub source_schema: Schema,
}

/// Encodes `input_variables` of every row, concatenated in the given order.
pub fn encode_table(
    table: &Table,
    scheme: &EncodingScheme,
    input_variables: &[String],
) -> Result<EncodedMatrix> {
    let schema = table.schema();
    let columns = input_variables
        .iter()
        .map(|n| schema.position(n))
        .collect::<Result<Vec<_>>>()?;
    let vocabs: Vec<&Vocabulary> = columns
        .iter()
        .map(|&c| &schema.variables()[c].vocabulary)
        .collect();
    let rows: Vec<usize> = (0..table.n_rows()).collect();
    let values = encode_rows(&vocabs, scheme, &table.gather(&rows, &columns))?;
    let mut names = Vec::with_capacity(values.cols());
    for (name, vocab) in input_variables.iter().zip(&vocabs) {
        names.extend(column_names(name, vocab, scheme)?);
    }
    Ok(EncodedMatrix {
        values,
        column_names: names,
        source_schema: schema.project(input_variables)?,
    })
}
