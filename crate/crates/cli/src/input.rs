//! CSV ingestion.

use std::path::Path;

use clusterwise::model::Dataset;

use crate::error::CliError;

/// Columns of a loaded table, with the response split off.
#[derive(Debug)]
pub struct Table {
    pub data: Dataset,
    pub response: String,
    pub regressors: Vec<String>,
}

/// Reads a headed CSV file. The response defaults to the first column; every
/// other column is a regressor. An intercept column is prepended unless
/// `intercept` is false.
pub fn load_csv(path: &Path, response: Option<&str>, intercept: bool) -> Result<Table, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.is_empty() {
        return Err(CliError::Input(format!("{}: no columns", path.display())));
    }
    let response_idx = match response {
        Some(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Input(format!("response column {name:?} not found")))?,
        None => 0,
    };
    let regressors: Vec<String> =
        headers.iter().enumerate().filter(|&(j, _)| j != response_idx).map(|(_, h)| h.clone()).collect();
    if regressors.is_empty() && !intercept {
        return Err(CliError::Input("no regressors and no intercept".into()));
    }

    let mut y = Vec::new();
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let mut values = Vec::with_capacity(headers.len());
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::Input(format!("row {}, column {:?}: {field:?} is not a number", line + 1, headers[j]))
            })?;
            values.push(v);
        }
        if values.len() != headers.len() {
            return Err(CliError::Input(format!("row {} has {} fields, expected {}", line + 1, values.len(), headers.len())));
        }
        y.push(values[response_idx]);
        let row: Vec<f64> = std::iter::once(1.0)
            .take(intercept as usize)
            .chain(values.iter().enumerate().filter(|&(j, _)| j != response_idx).map(|(_, &v)| v))
            .collect();
        rows.push(row);
    }
    if y.is_empty() {
        return Err(CliError::Input(format!("{}: no data rows", path.display())));
    }
    let data = Dataset::from_rows(y, &rows, intercept)?;
    Ok(Table { data, response: headers[response_idx].clone(), regressors })
}
