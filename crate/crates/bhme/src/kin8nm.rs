//! Loader for the kin-8nm robot-arm regression data (8 inputs, 1 target).
//!
//! The data is not bundled. A directory is accepted in either layout:
//! `train.csv`/`test.csv` with a header and the target in column `y`, or the
//! raw whitespace-separated `train.data`/`test.data` with nine unnamed
//! columns (inputs first). The usual split is 1024 training and 1024 test
//! rows.

use std::path::Path;

use bhme_core::Dataset;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::table::{load_delimited, Schema};

pub const INPUTS: usize = 8;
pub const TARGET: &str = "y";

fn input_names() -> Vec<String> {
    (1..=INPUTS).map(|k| format!("theta{k}")).collect()
}

/// Whitespace-separated rows of `INPUTS + 1` numbers, no header.
pub fn load_whitespace(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Error::data(format!("{}: line {}: cannot parse {f:?} as a number", path.display(), idx + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != INPUTS + 1 {
            return Err(Error::data(format!(
                "{}: line {}: expected {} fields, found {}",
                path.display(),
                idx + 1,
                INPUTS + 1,
                row.len()
            )));
        }
        rows.push(row);
    }
    let x = DMatrix::from_fn(rows.len(), INPUTS, |r, c| rows[r][c]);
    let t = DMatrix::from_fn(rows.len(), 1, |r, _| rows[r][INPUTS]);
    Ok(Dataset::new(x, t, true, input_names(), vec![TARGET.into()])?)
}

/// `(train, test)` from `dir`, or `None` when neither layout is present.
pub fn load_kin8nm(dir: &Path) -> Result<Option<(Dataset, Dataset)>> {
    let csv = (dir.join("train.csv"), dir.join("test.csv"));
    if csv.0.is_file() && csv.1.is_file() {
        let schema = Schema::Targets(vec![TARGET.into()]);
        let train = load_delimited(&csv.0, &schema, true)?;
        let test = load_delimited(&csv.1, &schema, true)?;
        for d in [&train, &test] {
            if d.raw_input_dim() != INPUTS {
                return Err(Error::data(format!("kin-8nm files need {INPUTS} input columns besides {TARGET:?}")));
            }
        }
        return Ok(Some((train, test)));
    }
    let raw = (dir.join("train.data"), dir.join("test.data"));
    if raw.0.is_file() && raw.1.is_file() {
        return Ok(Some((load_whitespace(&raw.0)?, load_whitespace(&raw.1)?)));
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_layouts_load_the_same_values() {
        let dir = tempfile::tempdir().unwrap();
        let row = "0.1 -0.2 0.3 0.4 0.5 0.6 0.7 0.8 1.25";
        std::fs::write(dir.path().join("train.data"), format!("{row}\n{row}\n")).unwrap();
        std::fs::write(dir.path().join("test.data"), format!("{row}\n")).unwrap();
        let (train, test) = load_kin8nm(dir.path()).unwrap().unwrap();
        assert_eq!((train.len(), test.len(), train.input_dim()), (2, 1, 9));

        let other = tempfile::tempdir().unwrap();
        let header = "theta1,theta2,theta3,theta4,theta5,theta6,theta7,theta8,y";
        let body = row.replace(' ', ",");
        std::fs::write(other.path().join("train.csv"), format!("{header}\n{body}\n{body}\n")).unwrap();
        std::fs::write(other.path().join("test.csv"), format!("{header}\n{body}\n")).unwrap();
        let (train_csv, _) = load_kin8nm(other.path()).unwrap().unwrap();
        assert_eq!(train_csv, train);
    }

    #[test]
    fn absent_data_is_none_and_bad_rows_fail() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_kin8nm(dir.path()).unwrap().is_none());
        std::fs::write(dir.path().join("train.data"), "1 2 3\n").unwrap();
        std::fs::write(dir.path().join("test.data"), "").unwrap();
        let e = load_kin8nm(dir.path()).unwrap_err();
        assert!(e.message.contains("line 1") && e.message.contains("expected 9"), "{e}");
    }
}
