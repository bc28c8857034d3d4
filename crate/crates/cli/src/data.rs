//! CSV ingestion with complete-case filtering.

use crate::error::{CliError, CliResult};
use mfpkit::{Dataset, Family};
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, Serialize)]
pub struct LoadSummary {
    pub path: String,
    pub rows_read: usize,
    pub rows_used: usize,
    pub rows_dropped: usize,
    pub columns: Vec<String>,
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "NA"
}

/// Load `outcome` and `candidates` (every other column when `None`) from a
/// CSV file with a header row. Rows missing any used value are dropped.
pub fn load_csv(
    path: &Path,
    outcome: &str,
    candidates: Option<&[String]>,
    family: Family,
) -> CliResult<(Dataset, LoadSummary)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("{}: column `{name}` not found", path.display())))
    };
    find(outcome)?;
    let wanted: Vec<String> = match candidates {
        Some(c) => c.to_vec(),
        None => header.iter().filter(|h| *h != outcome).cloned().collect(),
    };
    for c in &wanted {
        find(c)?;
    }
    // keep file order so ties resolve by column position
    let used: Vec<usize> = (0..header.len())
        .filter(|&i| header[i] == outcome || wanted.contains(&header[i]))
        .collect();

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); used.len()];
    let mut rows_read = 0;
    let mut dropped = 0;
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        rows_read += 1;
        let line = record.position().map_or(rows_read + 1, |p| p.line() as usize);
        let mut row = Vec::with_capacity(used.len());
        let mut missing = false;
        for &i in &used {
            let cell = record.get(i).unwrap_or("");
            if is_missing(cell) {
                missing = true;
                break;
            }
            let v: f64 = cell.trim().parse().map_err(|_| {
                CliError::Data(format!(
                    "{}:{line}: column `{}` has non-numeric value `{cell}`",
                    path.display(),
                    header[i]
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!(
                    "{}:{line}: column `{}` has non-finite value",
                    path.display(),
                    header[i]
                )));
            }
            row.push(v);
        }
        if missing {
            dropped += 1;
            continue;
        }
        for (col, v) in columns.iter_mut().zip(row) {
            col.push(v);
        }
    }
    let names: Vec<String> = used.iter().map(|&i| header[i].clone()).collect();
    if columns[0].is_empty() {
        return Err(CliError::Data(format!("{}: no complete rows", path.display())));
    }
    let data = Dataset::new(names.clone(), columns, outcome, family)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let summary = LoadSummary {
        path: path.display().to_string(),
        rows_read,
        rows_used: rows_read - dropped,
        rows_dropped: dropped,
        columns: names,
    };
    Ok((data, summary))
}

impl LoadSummary {
    pub fn warning(&self) -> Option<String> {
        (self.rows_dropped > 0).then(|| {
            format!(
                "dropped {} of {} rows with missing values in used columns",
                self.rows_dropped, self.rows_read
            )
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn complete_cases_only() {
        let f = write("y,a,b\n1,2,3\nNA,1,1\n2,,4\n3,4,5\n4,5,7\n");
        let (d, s) = load_csv(f.path(), "y", None, Family::Gaussian).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(s.rows_dropped, 2);
        assert_eq!(d.column("a").unwrap(), &[2.0, 4.0, 5.0]);
        assert!(s.warning().unwrap().contains("dropped 2 of 5"));
    }

    #[test]
    fn unused_columns_are_ignored() {
        let f = write("y,a,note\n1,2,x\n2,3,\n3,5,z\n");
        let cands = vec!["a".to_string()];
        let (d, s) = load_csv(f.path(), "y", Some(&cands), Family::Gaussian).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(s.columns, vec!["y", "a"]);
    }

    #[test]
    fn missing_outcome_is_a_data_error() {
        let f = write("a,b\n1,2\n");
        let err = load_csv(f.path(), "y", None, Family::Gaussian).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("`y`"));
    }

    #[test]
    fn bad_cell_reports_line_and_column() {
        let f = write("y,a\n1,2\n2,abc\n");
        let err = load_csv(f.path(), "y", None, Family::Gaussian).unwrap_err().to_string();
        assert!(err.contains(":3:") && err.contains("`a`"), "{err}");
    }
}
