//! Dataset reference tables (RFC 4180 CSV, UTF-8, header row required).

use std::collections::BTreeMap;
use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("empty file")]
    Empty,
    #[error("schema: reference column required")]
    MissingReference,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetTableRow {
    pub reference: String,
    pub title: Option<String>,
    pub date: Option<NaiveDate>,
    pub notes: Option<String>,
    /// Columns outside the known schema, plus unparseable dates.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TableLoad {
    pub rows: Vec<DatasetTableRow>,
    pub row_errors: Vec<RowError>,
}

/// Absolute http(s) URL with a host.
pub fn is_valid_reference(reference: &str) -> bool {
    Url::parse(reference)
        .map(|u| matches!(u.scheme(), "http" | "https") && u.host_str().is_some_and(|h| !h.is_empty()))
        .unwrap_or(false)
}

fn non_empty(s: &str) -> Option<String> {
    let s = s.trim();
    (!s.is_empty()).then(|| s.to_string())
}

pub fn load_dataset_table<R: Read>(reader: R) -> Result<TableLoad, TableError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().trim_start_matches('\u{feff}').to_ascii_lowercase())
        .collect();
    if headers.iter().all(|h| h.is_empty()) {
        return Err(TableError::Empty);
    }
    let col = |name: &str| headers.iter().position(|h| h == name);
    let reference_col = col("reference").ok_or(TableError::MissingReference)?;
    let (title_col, date_col, notes_col) = (col("title"), col("date"), col("notes"));

    let mut load = TableLoad::default();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                load.row_errors.push(RowError { row, message: e.to_string() });
                continue;
            }
        };
        let field = |c: Option<usize>| c.and_then(|c| record.get(c)).and_then(non_empty);
        let Some(reference) = field(Some(reference_col)) else {
            load.row_errors.push(RowError { row, message: "empty reference".into() });
            continue;
        };
        if !is_valid_reference(&reference) {
            load.row_errors.push(RowError {
                row,
                message: format!("invalid reference `{reference}`"),
            });
            continue;
        }
        let mut extra = BTreeMap::new();
        for (c, value) in record.iter().enumerate() {
            let known = [Some(reference_col), title_col, date_col, notes_col].contains(&Some(c));
            if let (false, Some(name), Some(v)) = (known, headers.get(c), non_empty(value)) {
                extra.insert(name.clone(), v);
            }
        }
        let date = field(date_col).and_then(|d| match NaiveDate::parse_from_str(&d, "%Y-%m-%d") {
            Ok(date) => Some(date),
            Err(_) => {
                extra.insert("date".into(), d);
                None
            }
        });
        load.rows.push(DatasetTableRow {
            reference,
            title: field(title_col),
            date,
            notes: field(notes_col),
            extra,
        });
    }
    Ok(load)
}
