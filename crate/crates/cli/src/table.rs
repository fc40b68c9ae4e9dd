//! Numeric result tables and their CSV form.

use std::io::Write;

use serde::Serialize;

use crate::AppResult;

/// Named table with a fixed column schema; every row has one value per
/// column.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ResultTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_columns(name: &str, columns: Vec<String>) -> Self {
        Self {
            name: name.to_string(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width differs from schema of table {}",
            self.name
        );
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// Header plus one line per row, LF terminated, shortest round-trip
    /// decimal formatting.
    pub fn write_csv<W: Write>(&self, out: W) -> AppResult<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(&self.columns).map_err(csv_err)?;
        let mut cells = Vec::with_capacity(self.columns.len());
        for row in &self.rows {
            cells.clear();
            cells.extend(row.iter().map(|v| format_value(*v)));
            w.write_record(&cells).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii output")
    }
}

fn csv_err(e: csv::Error) -> crate::AppError {
    crate::AppError::Io(std::io::Error::other(e))
}

fn format_value(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = ResultTable::new("demo", &["t", "x"]);
        t.push(vec![0.0, 0.5]);
        t.push(vec![0.25, -1e-7]);
        t.push(vec![3.0, f64::NAN]);
        assert_eq!(t.to_csv_string(), "t,x\n0,0.5\n0.25,-0.0000001\n3,NaN\n");
        assert_eq!(t.column("x").unwrap()[0], 0.5);
    }

    #[test]
    #[should_panic]
    fn ragged_rows_are_refused() {
        let mut t = ResultTable::new("demo", &["a", "b"]);
        t.push(vec![1.0]);
    }
}
