//! CSV and JSON writers. Numbers use `.` as decimal separator and the
//! shortest representation that round-trips (exponent form outside
//! `[1e-5, 1e16)`); `+∞` is written `inf`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use recdev_core::RateValue;
use serde_json::Value;

/// Formats a float for CSV.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else if x == 0.0 || (1e-5..1e16).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn rate(r: RateValue) -> String {
    num(r.value())
}

/// JSON has no infinity; rates use the string `"inf"` instead.
pub fn json_num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or_else(|| Value::String(num(x)))
}

/// A CSV table built in memory and written in one go.
#[derive(Debug, Clone)]
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: format!("{}\n", header.join(",")),
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, text)?;
    Ok(path)
}

pub fn write_json(dir: &Path, name: &str, value: &Value) -> std::io::Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    write_text(dir, name, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats() {
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(num(-2.0), "-2");
        assert_eq!(rate(RateValue::Infinite), "inf");
        assert_eq!(json_num(f64::INFINITY), Value::String("inf".into()));
        let mut csv = Csv::new(&["a", "b"]);
        csv.row(&[num(1.0), num(1e-20)]);
        assert_eq!(csv.as_str(), "a,b\n1,1e-20\n");
    }
}
