//! Delimited-values ingestion: mandatory header row, UTF-8, configurable
//! delimiter. Column pairs named `name_re`/`name_im` are joined into one
//! complex column `name`.

use crate::CliError;
use cumulants::estimators::{Column, SampleBatch};
use num::complex::Complex64;
use std::collections::BTreeMap;

pub fn ingest(path: &str, delimiter: char) -> Result<SampleBatch, CliError> {
    if !delimiter.is_ascii() {
        return Err(CliError::Usage("delimiter must be an ASCII character".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {path:?}: {e}")))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("bad header row: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() {
        return Err(CliError::Data("empty header row".into()));
    }
    let mut raw: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("row {}: {e}", row_idx + 2)))?;
        if record.len() != headers.len() {
            return Err(CliError::Data(format!(
                "row {} has {} fields, expected {}",
                row_idx + 2,
                record.len(),
                headers.len()
            )));
        }
        for (col_idx, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                CliError::Data(format!(
                    "row {}, column {:?}: not a number: {field:?}",
                    row_idx + 2,
                    headers[col_idx]
                ))
            })?;
            if !value.is_finite() {
                return Err(CliError::Data(format!(
                    "row {}, column {:?}: non-finite value {field:?}",
                    row_idx + 2,
                    headers[col_idx]
                )));
            }
            raw[col_idx].push(value);
        }
    }
    if raw[0].is_empty() {
        return Err(CliError::Data("no data rows".into()));
    }

    // Pair complex halves; everything else stays a real column.
    let mut complex_parts: BTreeMap<String, (Option<usize>, Option<usize>)> = BTreeMap::new();
    for (idx, name) in headers.iter().enumerate() {
        if let Some(base) = name.strip_suffix("_re") {
            complex_parts.entry(base.to_string()).or_default().0 = Some(idx);
        } else if let Some(base) = name.strip_suffix("_im") {
            complex_parts.entry(base.to_string()).or_default().1 = Some(idx);
        }
    }
    for (base, (re, im)) in &complex_parts {
        match (re, im) {
            (Some(_), Some(_)) => {}
            (Some(_), None) => {
                return Err(CliError::Data(format!(
                    "complex column {base:?} is missing its {base}_im half"
                )))
            }
            (None, Some(_)) => {
                return Err(CliError::Data(format!(
                    "complex column {base:?} is missing its {base}_re half"
                )))
            }
            (None, None) => unreachable!(),
        }
    }
    let mut labels = Vec::new();
    let mut columns = Vec::new();
    let mut consumed = vec![false; headers.len()];
    for (idx, name) in headers.iter().enumerate() {
        if consumed[idx] {
            continue;
        }
        if let Some(base) = name.strip_suffix("_re").or_else(|| name.strip_suffix("_im")) {
            let (re_idx, im_idx) = complex_parts[base];
            let (re_idx, im_idx) = (re_idx.unwrap(), im_idx.unwrap());
            consumed[re_idx] = true;
            consumed[im_idx] = true;
            let data: Vec<Complex64> = raw[re_idx]
                .iter()
                .zip(&raw[im_idx])
                .map(|(&re, &im)| Complex64::new(re, im))
                .collect();
            labels.push(base.to_string());
            columns.push(Column::Complex(data));
        } else {
            consumed[idx] = true;
            labels.push(name.clone());
            columns.push(Column::Real(std::mem::take(&mut raw[idx])));
        }
    }
    SampleBatch::new(labels, columns).map_err(|e| CliError::Data(e.to_string()))
}
