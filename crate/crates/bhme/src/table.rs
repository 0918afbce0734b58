//! Comma-delimited tables with a header row.
//!
//! Numbers are written in the shortest form that parses back to the same
//! `f64`, so a save/load cycle is bit-exact. Lines starting with `#` are
//! comments; derived outputs carry one naming their schema version.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use bhme_core::Dataset;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Which columns of a file are inputs and which are targets.
#[derive(Clone, Debug, PartialEq)]
pub enum Schema {
    /// Named target columns; every other column is an input.
    Targets(Vec<String>),
    /// The last `k` columns are targets.
    LastColumns(usize),
    /// Exactly these columns; anything else in the file is ignored.
    /// `targets` may be empty for prediction inputs.
    Columns { inputs: Vec<String>, targets: Vec<String> },
}

/// A parsed numeric table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column_index(&self, name: &str, path: &Path) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::data(format!("{}: no column named {name:?} (have {})", path.display(), self.headers.join(",")))
        })
    }

    fn matrix(&self, columns: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), columns.len(), |r, c| self.rows[r][columns[c]])
    }
}

/// `f64` formatting used by every writer in this crate.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let located = |line: Option<u64>, msg: String| match line {
        Some(l) => Error::data(format!("{}: line {l}: {msg}", path.display())),
        None => Error::data(format!("{}: {msg}", path.display())),
    };
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| located(e.position().map(|p| p.line()), e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::data(format!("{}: missing header row", path.display())));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line());
            let msg = match e.kind() {
                csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                    format!("expected {expected_len} fields, found {len}")
                }
                _ => e.to_string(),
            };
            located(line, msg)
        })?;
        let line = record.position().map(|p| p.line());
        let row = record
            .iter()
            .zip(&headers)
            .map(|(field, name)| {
                field
                    .parse::<f64>()
                    .map_err(|_| located(line, format!("column {name:?}: cannot parse {field:?} as a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { headers, rows })
}

/// Reads a dataset, appending the constant bias input when `append_bias`.
pub fn load_delimited(path: &Path, schema: &Schema, append_bias: bool) -> Result<Dataset> {
    let table = read_table(path)?;
    let ncols = table.headers.len();
    let (inputs, targets): (Vec<usize>, Vec<usize>) = match schema {
        Schema::Targets(names) => {
            let t = names.iter().map(|n| table.column_index(n, path)).collect::<Result<Vec<_>>>()?;
            ((0..ncols).filter(|c| !t.contains(c)).collect(), t)
        }
        Schema::LastColumns(k) => {
            if *k == 0 || *k >= ncols {
                return Err(Error::data(format!(
                    "{}: cannot take {k} target columns from {ncols} columns",
                    path.display()
                )));
            }
            ((0..ncols - k).collect(), (ncols - k..ncols).collect())
        }
        Schema::Columns { inputs, targets } => (
            inputs.iter().map(|n| table.column_index(n, path)).collect::<Result<Vec<_>>>()?,
            targets.iter().map(|n| table.column_index(n, path)).collect::<Result<Vec<_>>>()?,
        ),
    };
    if inputs.is_empty() {
        return Err(Error::data(format!("{}: no input columns", path.display())));
    }
    let names = |cols: &[usize]| cols.iter().map(|&c| table.headers[c].clone()).collect::<Vec<_>>();
    Dataset::new(table.matrix(&inputs), table.matrix(&targets), append_bias, names(&inputs), names(&targets))
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

/// Writes raw inputs (no bias column) followed by targets.
pub fn save_delimited(data: &Dataset, path: &Path) -> Result<()> {
    let raw = data.raw_inputs();
    let headers: Vec<String> = data.raw_input_names().iter().chain(data.target_names()).cloned().collect();
    let rows = (0..data.len()).map(|n| {
        raw.row(n).iter().chain(data.targets().row(n).iter()).map(|&v| fmt_f64(v)).collect::<Vec<_>>()
    });
    write_csv(path, None, &headers, rows)
}

/// Writes a table, preceded by `# <version>` when given.
pub fn write_csv<I, R>(path: &Path, version: Option<&str>, headers: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    if let Some(v) = version {
        writeln!(out, "# {v}").map_err(|e| Error::io(path, e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::data(format!("{}: {e}", path.display()));
    w.write_record(headers).map_err(wrap)?;
    for row in rows {
        w.write_record(row).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn awkward_values_round_trip_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let vals = vec![0.1, -1e-300, 1.0 / 3.0, 5e-324, 1.7976931348623157e308, -0.0, 123456789.125];
        let t: Vec<f64> = vals.iter().map(|v| v * 2.0).collect();
        let data = Dataset::from_columns(&[vals.clone()], &[t.clone()], true).unwrap();
        let p = dir.path().join("d.csv");
        save_delimited(&data, &p).unwrap();
        let back = load_delimited(&p, &Schema::LastColumns(1), true).unwrap();
        for (a, b) in data.inputs().iter().zip(back.inputs().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in data.targets().iter().zip(back.targets().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.input_names(), data.input_names());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "bad.csv", "x,t\n1,2\n3,oops\n");
        let e = load_delimited(&p, &Schema::LastColumns(1), true).unwrap_err();
        assert!(e.message.contains("line 3"), "{e}");
        assert!(e.message.contains("\"t\""), "{e}");
        let p = write(&dir, "ragged.csv", "x,t\n1,2\n3\n");
        let e = load_delimited(&p, &Schema::LastColumns(1), true).unwrap_err();
        assert!(e.message.contains("line 3") && e.message.contains("expected 2 fields"), "{e}");
    }

    #[test]
    fn schemas_pick_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "arm.csv", "# comment\nx1,x2,theta1,theta2\n1,2,3,4\n5,6,7,8\n");
        let by_name = load_delimited(&p, &Schema::Targets(vec!["theta1".into(), "theta2".into()]), true).unwrap();
        let last = load_delimited(&p, &Schema::LastColumns(2), true).unwrap();
        assert_eq!(by_name, last);
        assert_eq!(by_name.input_row(1), vec![5.0, 6.0, 1.0]);
        let cols = Schema::Columns { inputs: vec!["x2".into()], targets: vec![] };
        let only = load_delimited(&p, &cols, false).unwrap();
        assert_eq!(only.input_row(0), vec![2.0]);
        assert_eq!(only.target_dim(), 0);
        let missing = Schema::Targets(vec!["y".into()]);
        assert!(load_delimited(&p, &missing, true).unwrap_err().message.contains("\"y\""));
        assert!(load_delimited(&p, &Schema::LastColumns(4), true).is_err());
    }

    #[test]
    fn missing_file_is_a_data_error() {
        let e = read_table(Path::new("/nonexistent/file.csv")).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }
}
