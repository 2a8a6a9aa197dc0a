//! CSV ingestion for the two supported layouts.
//!
//! Supervised layout: header row; a column named `y` is the optional
//! response; every other column is a covariate, in file order. Many-means
//! matrix layout: header row; every column is numeric; rows are raw
//! vectors. UTF-8, '.' decimal separator.

use cvstab_core::data::{Dataset, Sample};
use cvstab_core::maxmean::MeansMatrix;

use crate::CliError;

pub fn parse_supervised(text: &str, path: &str) -> Result<Dataset, CliError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::data(format!("{path}: empty file")))?;
    let columns: Vec<&str> = header.split(',').map(|c| c.trim()).collect();
    let y_col = columns.iter().position(|&c| c == "y");
    let mut samples = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(CliError::data(format!(
                "{path}: row {} has {} cells, header has {}",
                idx + 1,
                cells.len(),
                columns.len()
            )));
        }
        let mut z = Vec::with_capacity(columns.len());
        let mut y = None;
        for (c, cell) in cells.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| {
                CliError::data(format!(
                    "{path}: row {}, column '{}': non-numeric cell '{}'",
                    idx + 1,
                    columns[c],
                    cell.trim()
                ))
            })?;
            if Some(c) == y_col {
                y = Some(value);
            } else {
                z.push(value);
            }
        }
        samples.push(Sample { z, y });
    }
    if samples.is_empty() {
        return Err(CliError::data(format!("{path}: no data rows")));
    }
    Dataset::new(samples).map_err(CliError::from)
}

pub fn parse_matrix(text: &str, path: &str) -> Result<MeansMatrix, CliError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::data(format!("{path}: empty file")))?;
    let m = header.split(',').count();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != m {
            return Err(CliError::data(format!(
                "{path}: row {} has {} cells, header has {}",
                idx + 1,
                cells.len(),
                m
            )));
        }
        let row = cells
            .iter()
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    CliError::data(format!(
                        "{path}: row {}: non-numeric cell '{}'",
                        idx + 1,
                        cell.trim()
                    ))
                })
            })
            .collect::<Result<Vec<f64>, CliError>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::data(format!("{path}: no data rows")));
    }
    MeansMatrix::from_rows(&rows).map_err(CliError::from)
}

pub fn load_supervised(path: &str) -> Result<Dataset, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("{path}: {e}")))?;
    parse_supervised(&text, path)
}

pub fn load_matrix(path: &str) -> Result<MeansMatrix, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("{path}: {e}")))?;
    parse_matrix(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn supervised_with_response() {
        let d = parse_supervised("y,z1,z2\n1.0,0.5,0.25\n2.0,1.5,0.75\n", "t").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.sample(0).y, Some(1.0));
        assert_eq!(d.sample(1).z, vec![1.5, 0.75]);
    }

    #[test]
    fn supervised_without_response() {
        let d = parse_supervised("z1,z2\n0.5,0.25\n", "t").unwrap();
        assert_eq!(d.sample(0).y, None);
    }

    #[test]
    fn ragged_row_reports_number() {
        let err = parse_supervised("y,z1\n1.0,2.0\n3.0\n", "t").unwrap_err();
        assert!(err.message.contains("row 3"));
    }

    #[test]
    fn non_numeric_cell_reports_number() {
        let err = parse_supervised("y,z1\n1.0,oops\n", "t").unwrap_err();
        assert!(err.message.contains("row 2"));
    }

    #[test]
    fn empty_file_is_data_error() {
        assert!(parse_supervised("", "t").is_err());
        assert!(parse_supervised("y,z1\n", "t").is_err());
    }

    #[test]
    fn matrix_layout() {
        let m = parse_matrix("a,b\n1,2\n3,4\n5,6\n7,8\n", "t").unwrap();
        assert_eq!((m.n(), m.m()), (4, 2));
        assert_eq!(m.entry(2, 1), 6.0);
    }
}
