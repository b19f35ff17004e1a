//! CSV output with a `#` metadata block.

use std::fmt::Write as _;
use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    meta: Vec<(String, String)>,
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

/// Seventeen significant digits, enough to reread every `f64` exactly.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

impl ResultTable {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        ResultTable { meta: Vec::new(), columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn meta_num(&mut self, key: &str, value: f64) -> Result<&mut Self, CliError> {
        if !value.is_finite() {
            return Err(CliError::Numeric(format!("metadata {key} is not finite ({value})")));
        }
        Ok(self.meta(key, fmt_num(value)))
    }

    pub fn meta_nums(&mut self, key: &str, values: &[f64]) -> Result<&mut Self, CliError> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(CliError::Numeric(format!("metadata {key} has a non-finite entry ({v})")));
        }
        let joined = values.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join(" ");
        Ok(self.meta(key, joined))
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<(), CliError> {
        if row.len() != self.columns.len() {
            return Err(CliError::Numeric(format!("row has {} cells for {} columns", row.len(), self.columns.len())));
        }
        if let Some(i) = row.iter().position(|v| !v.is_finite()) {
            return Err(CliError::Numeric(format!("column {} is not finite ({})", self.columns[i], row[i])));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn meta_entries(&self) -> &[(String, String)] {
        &self.meta
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}: {v}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_num(*v)).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    /// Writes to `path`, or to stdout if there is none.
    pub fn write(&self, path: Option<&Path>) -> Result<(), CliError> {
        let text = self.render();
        match path {
            Some(p) => std::fs::write(p, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_reread_exactly() {
        for v in [0.1, 1.0 / 3.0, 2f64.sqrt(), 1e-300, 123456.789, -0.0] {
            assert_eq!(fmt_num(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut t = ResultTable::new(["a", "b"]);
        assert!(t.push(vec![1.0, f64::NAN]).is_err());
        assert!(t.push(vec![1.0]).is_err());
        assert!(t.meta_num("m", f64::INFINITY).is_err());
        t.push(vec![1.0, 2.0]).unwrap();
        t.meta("seed", 42);
        let s = t.render();
        assert_eq!(s, "# seed: 42\na,b\n1.0000000000000000e0,2.0000000000000000e0\n");
    }
}
