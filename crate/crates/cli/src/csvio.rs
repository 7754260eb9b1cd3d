//! CSV input and report output.
//!
//! Input format: comma-separated numeric columns, decimal point, no missing
//! values. A header line is auto-detected: if any field of the first row
//! fails to parse as a number, the row is treated as a header.

use std::path::Path;

use rtmcd::DataMatrix;

use crate::CliError;

/// Reads a numeric matrix from a CSV file. Parse failures carry 1-based
/// line numbers.
pub fn read_matrix(path: &Path) -> Result<DataMatrix, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;

    let mut data: Vec<f64> = Vec::new();
    let mut cols: Option<usize> = None;
    let mut rows = 0usize;

    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record =
            record.map_err(|e| CliError::Input(format!("{}: line {line}: {e}", path.display())))?;
        let mut values = Vec::with_capacity(record.len());
        let mut non_numeric = None;
        for (col, field) in record.iter().enumerate() {
            if field.is_empty() {
                return Err(CliError::Input(format!(
                    "{}: line {line}: missing value in column {}",
                    path.display(),
                    col + 1
                )));
            }
            match field.parse::<f64>() {
                Ok(v) => values.push(v),
                Err(_) => {
                    non_numeric = Some(col + 1);
                    break;
                }
            }
        }
        if let Some(col) = non_numeric {
            if line == 1 {
                // Header row: fixes the expected width, contributes no data.
                cols = Some(record.len());
                continue;
            }
            return Err(CliError::Input(format!(
                "{}: line {line}: non-numeric value in column {col}",
                path.display()
            )));
        }
        match cols {
            None => cols = Some(values.len()),
            Some(c) if c != values.len() => {
                return Err(CliError::Input(format!(
                    "{}: line {line}: expected {c} columns, found {}",
                    path.display(),
                    values.len()
                )));
            }
            Some(_) => {}
        }
        data.extend_from_slice(&values);
        rows += 1;
    }

    let cols = cols.filter(|&c| c > 0).ok_or_else(|| {
        CliError::Input(format!("{}: no data rows", path.display()))
    })?;
    if rows == 0 {
        return Err(CliError::Input(format!("{}: no data rows", path.display())));
    }
    Ok(DataMatrix::new(rows, cols, data))
}

/// Writes the per-row outlier report: index, robust distance, flag.
pub fn write_report(path: &Path, report: &rtmcd::OutlierReport) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    writer
        .write_record(["index", "robust_distance", "outlier"])
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    for (i, (&d, &f)) in report.distances.iter().zip(&report.flags).enumerate() {
        writer
            .write_record([i.to_string(), format!("{d:.17e}"), u8::from(f).to_string()])
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    }
    writer
        .flush()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(())
}
