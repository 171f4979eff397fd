use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Rectangular string table exactly as read from a dump.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != header.len() {
                return Err(Error::FormatAt {
                    line: i as u64 + 2,
                    message: format!("expected {} cells, found {}", header.len(), row.len()),
                });
            }
        }
        Ok(RawTable { header, rows })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column(&self, index: usize) -> impl Iterator<Item = &str> {
        self.rows.iter().map(move |r| r[index].as_str())
    }
}

/// Parses a comma-separated, double-quoted UTF-8 dump with a header row.
pub fn parse_csv<R: Read>(stream: R) -> Result<RawTable> {
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(stream);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::format(format!("unreadable header: {e}")))?
        .iter()
        .map(|h| h.trim().to_owned())
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::format("missing header row"));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::FormatAt {
                line,
                message: e.to_string(),
            }
        })?;
        if record.len() != header.len() {
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            return Err(Error::FormatAt {
                line,
                message: format!("expected {} cells, found {}", header.len(), record.len()),
            });
        }
        rows.push(record.iter().map(str::to_owned).collect());
    }
    Ok(RawTable { header, rows })
}

pub fn write_csv<W: Write>(table: &RawTable, sink: W) -> Result<()> {
    let mut writer = ::csv::Writer::from_writer(sink);
    let csv_err = |e: ::csv::Error| Error::format(e.to_string());
    writer.write_record(&table.header).map_err(csv_err)?;
    for row in &table.rows {
        writer.write_record(row).map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}
