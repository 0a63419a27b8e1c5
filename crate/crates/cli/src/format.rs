//! Human-readable numbers and CSV output.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::CliError;

/// Six significant digits; scientific notation outside `[1e-4, 1e6)`.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    // magnitude after rounding, so 0.9999999 prints as 1.00000
    let rounded: f64 = format!("{x:.5e}").parse().unwrap_or(x);
    let mag = rounded.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        return format!("{x:.5e}");
    }
    format!("{x:.*}", (5 - mag).max(0) as usize)
}

pub fn sig6_list(xs: &[f64]) -> String {
    xs.iter().map(|&x| sig6(x)).collect::<Vec<_>>().join(", ")
}

/// CSV text with an optional `# generated ...` first line; the rest is
/// byte-identical across invocations with the same inputs.
pub struct CsvTable {
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: Vec<String>) -> Self {
        Self { rows: vec![header] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn from_records<R: Serialize>(records: &[R]) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in records {
            w.serialize(r).map_err(|e| CliError::Config(format!("csv: {e}")))?;
        }
        w.flush().map_err(|e| CliError::io("csv buffer", e))?;
        Ok(String::from_utf8(w.into_inner().map_err(|e| CliError::Config(format!("csv: {e}")))?).expect("csv is utf-8"))
    }

    pub fn render(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.write_record(r).expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
    }
}

pub fn timestamp_line() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    format!("# generated unix-time {secs}\n")
}

pub fn write_csv(dir: &Path, name: &str, body: &str, timestamp: bool) -> Result<(), CliError> {
    let path = dir.join(name);
    let text = if timestamp { format!("{}{body}", timestamp_line()) } else { body.to_string() };
    fs::write(&path, text).map_err(|e| CliError::io(path.display(), e))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(&path, text + "\n").map_err(|e| CliError::io(path.display(), e))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.97208311), "0.972083");
        assert_eq!(sig6(2.7357588823), "2.73576");
        assert_eq!(sig6(1142.0), "1142.00");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.5e-9), "1.50000e-9");
        assert_eq!(sig6(-0.4026), "-0.402600");
        assert_eq!(sig6(0.99999999), "1.00000");
    }

    #[test]
    fn table_quotes_fields() {
        let mut t = CsvTable::new(vec!["a".into(), "b".into()]);
        t.push(vec!["x,y".into(), "1".into()]);
        assert_eq!(t.render(), "a,b\n\"x,y\",1\n");
    }
}
