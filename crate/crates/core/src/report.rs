//! CSV tables and JSON summaries.

use std::fmt::Display;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// A header plus string cells; floats are written in shortest round-trip form.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<D: Display>(&mut self, row: impl IntoIterator<Item = D>) {
        let row: Vec<String> = row.into_iter().map(|c| c.to_string()).collect();
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_cells(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(ser)?;
        for r in &self.rows {
            w.write_record(r).map_err(ser)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let text = self.to_csv_string()?;
        fs::write(path, text).map_err(|source| io_error(path, source))
    }
}

fn ser(e: csv::Error) -> Error {
    Error::Serialization(e.to_string())
}

pub(crate) fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialization(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|source| io_error(path, source))
}

/// Format a float the way the tables do; non-finite values become `nan`, `inf`, `-inf`.
pub fn cell(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        x.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Table::new(["t", "c0"]);
        t.push([0.0, 0.25]);
        t.push([0.1, 1e-20]);
        assert_eq!(t.to_csv_string().unwrap(), "t,c0\n0,0.25\n0.1,0.00000000000000000001\n");
        let empty = Table::new(["a", "b"]);
        assert_eq!(empty.to_csv_string().unwrap(), "a,b\n");
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            assert_eq!(cell(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(cell(f64::NAN), "nan");
    }

    #[test]
    fn io_errors_carry_path() {
        let t = Table::new(["a"]);
        match t.write_csv(Path::new("/nonexistent-dir/x.csv")) {
            Err(Error::Io { path, .. }) => assert!(path.contains("nonexistent-dir")),
            other => panic!("{other:?}"),
        }
    }
}
