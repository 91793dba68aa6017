//! Observation files for `estimate`: one observation per line, coordinates
//! separated by commas or whitespace. Blank lines and lines starting with `#`
//! are skipped; a first line that does not parse as numbers is taken as a
//! header.

use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ObservationError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Parses observations of dimension `d`.
pub fn parse(text: &str, d: usize) -> Result<Vec<Vec<f64>>, ObservationError> {
    let mut out = Vec::new();
    let mut first = true;
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|s| s.parse::<f64>()).collect();
        let was_first = std::mem::replace(&mut first, false);
        let values = match parsed {
            Ok(v) => v,
            Err(_) if was_first => continue,
            Err(e) => {
                return Err(ObservationError::Parse {
                    line: k + 1,
                    message: format!("{e} in {line:?}"),
                })
            }
        };
        if values.len() != d {
            return Err(ObservationError::Parse {
                line: k + 1,
                message: format!("expected {d} coordinates, got {}", values.len()),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(ObservationError::Parse {
                line: k + 1,
                message: format!("non-finite coordinate {bad}"),
            });
        }
        out.push(values);
    }
    Ok(out)
}

pub fn load(path: &Path, d: usize) -> Result<Vec<Vec<f64>>, ObservationError> {
    let text = std::fs::read_to_string(path).map_err(|source| ObservationError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text, d)
}
