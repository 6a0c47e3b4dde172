use std::fs::File;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::{Array1, Array2};

/// Reads a comma-separated numeric file into rows. `header` skips the first
/// line. Parse errors name the 1-based line and column of the file.
fn read_rows(path: &Path, header: bool) -> Result<Vec<Vec<f64>>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = Vec::new();
    let mut width = None;
    for (k, record) in reader.records().enumerate() {
        let line = k + 1 + usize::from(header);
        let record = record.with_context(|| format!("{}: line {line}: malformed CSV", path.display()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                let v: f64 = field.parse().with_context(|| {
                    format!("{}: line {line}, column {}: cannot parse {field:?} as a number", path.display(), c + 1)
                })?;
                if !v.is_finite() {
                    bail!("{}: line {line}, column {}: value is not finite", path.display(), c + 1);
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => bail!(
                "{}: line {line}: expected {w} columns, found {}",
                path.display(),
                row.len()
            ),
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(rows)
}

pub fn read_matrix(path: &Path, header: bool) -> Result<Array2<f64>> {
    let rows = read_rows(path, header)?;
    let (n, p) = (rows.len(), rows[0].len());
    Ok(Array2::from_shape_vec((n, p), rows.concat())?)
}

/// A single-column file.
pub fn read_vector(path: &Path, header: bool) -> Result<Array1<f64>> {
    let rows = read_rows(path, header)?;
    if rows[0].len() != 1 {
        bail!("{}: expected one column, found {}", path.display(), rows[0].len());
    }
    Ok(rows.into_iter().map(|r| r[0]).collect())
}
