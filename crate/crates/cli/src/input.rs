use std::fs;
use std::path::Path;

use crate::config::ConfigError;

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|e| ConfigError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// One point per row, decimal notation; `#` starts a comment line.
pub fn parse_points(text: &str) -> Result<Vec<Vec<f64>>, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| format!("row {}: {e}", line + 1))?;
        if !row.is_empty() {
            out.push(row);
        }
    }
    Ok(out)
}

pub fn read_points(path: &Path) -> Result<Vec<Vec<f64>>, ConfigError> {
    parse_points(&read(path)?).map_err(|message| ConfigError::Input {
        path: path.to_path_buf(),
        message,
    })
}

pub fn read_text(path: &Path) -> Result<String, ConfigError> {
    read(path)
}

/// Comma-separated numbers, as given to `--from 0.2,0.8`.
pub fn parse_vector(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect()
}
