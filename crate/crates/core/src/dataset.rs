//! Paired input/target matrices.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{HmeError, Result};

/// Name given to the appended constant-1 input column.
pub const BIAS_COLUMN: &str = "bias";

/// `N` rows of inputs and targets. When `has_bias` is set the last input
/// column is the constant 1 appended by [`Dataset::new`].
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: DMatrix<f64>,
    targets: DMatrix<f64>,
    has_bias: bool,
    input_names: Vec<String>,
    target_names: Vec<String>,
    standardization: Option<Standardization>,
}

/// Per-column affine statistics of the raw (non-bias) inputs and the targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_scale: Vec<f64>,
}

impl Standardization {
    pub fn standardize_input(&self, raw: &mut [f64]) {
        for (v, (m, s)) in raw.iter_mut().zip(self.input_mean.iter().zip(&self.input_scale)) {
            *v = (*v - m) / s;
        }
    }

    pub fn unstandardize_target(&self, t: &mut [f64]) {
        for (v, (m, s)) in t.iter_mut().zip(self.target_mean.iter().zip(&self.target_scale)) {
            *v = *v * s + m;
        }
    }
}

fn default_names(prefix: &str, count: usize) -> Vec<String> {
    if count == 1 {
        return alloc::vec![String::from(prefix)];
    }
    (1..=count).map(|k| format!("{prefix}{k}")).collect()
}

impl Dataset {
    /// `raw_inputs` is `N × p_raw`; a bias column is appended when `append_bias`.
    pub fn new(
        raw_inputs: DMatrix<f64>,
        targets: DMatrix<f64>,
        append_bias: bool,
        input_names: Vec<String>,
        target_names: Vec<String>,
    ) -> Result<Dataset> {
        if raw_inputs.nrows() != targets.nrows() {
            return Err(HmeError::Dimension(format!(
                "{} input rows but {} target rows",
                raw_inputs.nrows(),
                targets.nrows()
            )));
        }
        if input_names.len() != raw_inputs.ncols() || target_names.len() != targets.ncols() {
            return Err(HmeError::Dimension("column names do not match column counts".into()));
        }
        let n = raw_inputs.nrows();
        let p_raw = raw_inputs.ncols();
        let inputs = if append_bias {
            DMatrix::from_fn(n, p_raw + 1, |r, c| if c == p_raw { 1.0 } else { raw_inputs[(r, c)] })
        } else {
            raw_inputs
        };
        let mut input_names = input_names;
        if append_bias {
            input_names.push(String::from(BIAS_COLUMN));
        }
        Ok(Dataset {
            inputs,
            targets,
            has_bias: append_bias,
            input_names,
            target_names,
            standardization: None,
        })
    }

    /// Builds a dataset from column vectors with default names
    /// (`x`/`t`, or `x1, x2, …`/`t1, t2, …`).
    pub fn from_columns(
        input_columns: &[Vec<f64>],
        target_columns: &[Vec<f64>],
        append_bias: bool,
    ) -> Result<Dataset> {
        let n = input_columns.first().map_or(0, Vec::len);
        if input_columns.iter().chain(target_columns).any(|c| c.len() != n) {
            return Err(HmeError::Dimension("columns have different lengths".into()));
        }
        let x = DMatrix::from_fn(n, input_columns.len(), |r, c| input_columns[c][r]);
        let t = DMatrix::from_fn(n, target_columns.len(), |r, c| target_columns[c][r]);
        Dataset::new(
            x,
            t,
            append_bias,
            default_names("x", input_columns.len()),
            default_names("t", target_columns.len()),
        )
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Augmented input dimension `p`.
    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn raw_input_dim(&self) -> usize {
        self.inputs.ncols() - usize::from(self.has_bias)
    }

    pub fn target_dim(&self) -> usize {
        self.targets.ncols()
    }

    pub fn has_bias(&self) -> bool {
        self.has_bias
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    /// Inputs without the bias column.
    pub fn raw_inputs(&self) -> DMatrix<f64> {
        self.inputs.columns(0, self.raw_input_dim()).into_owned()
    }

    /// Names of all input columns, including the bias column when present.
    pub fn input_names(&self) -> &[String] {
        &self.input_names
    }

    pub fn raw_input_names(&self) -> &[String] {
        &self.input_names[..self.raw_input_dim()]
    }

    pub fn target_names(&self) -> &[String] {
        &self.target_names
    }

    pub fn input_row(&self, n: usize) -> Vec<f64> {
        self.inputs.row(n).iter().copied().collect()
    }

    pub fn target_row(&self, n: usize) -> Vec<f64> {
        self.targets.row(n).iter().copied().collect()
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    /// Population variance of every target column.
    pub fn target_variances(&self) -> Vec<f64> {
        (0..self.target_dim())
            .map(|c| column_stats(self.targets.column(c).iter().copied()).1)
            .collect()
    }

    /// Computes per-column mean/standard deviation and returns the
    /// standardized copy together with the statistics.
    pub fn standardize(&self) -> Result<(Dataset, Standardization)> {
        let mut stats = Standardization {
            input_mean: Vec::new(),
            input_scale: Vec::new(),
            target_mean: Vec::new(),
            target_scale: Vec::new(),
        };
        for c in 0..self.raw_input_dim() {
            let (m, var) = column_stats(self.inputs.column(c).iter().copied());
            check_scale(var, &self.input_names[c])?;
            stats.input_mean.push(m);
            stats.input_scale.push(libm::sqrt(var));
        }
        for c in 0..self.target_dim() {
            let (m, var) = column_stats(self.targets.column(c).iter().copied());
            check_scale(var, &self.target_names[c])?;
            stats.target_mean.push(m);
            stats.target_scale.push(libm::sqrt(var));
        }
        let out = self.apply_standardization(&stats)?;
        Ok((out, stats))
    }

    /// Applies statistics computed elsewhere (typically on a training split).
    pub fn apply_standardization(&self, stats: &Standardization) -> Result<Dataset> {
        self.check_stats(stats)?;
        let mut out = self.clone();
        for c in 0..self.raw_input_dim() {
            let (m, s) = (stats.input_mean[c], stats.input_scale[c]);
            out.inputs.column_mut(c).apply(|v| *v = (*v - m) / s);
        }
        for c in 0..self.target_dim() {
            let (m, s) = (stats.target_mean[c], stats.target_scale[c]);
            out.targets.column_mut(c).apply(|v| *v = (*v - m) / s);
        }
        out.standardization = Some(stats.clone());
        Ok(out)
    }

    /// Inverse of [`Dataset::apply_standardization`].
    pub fn unstandardize(&self) -> Result<Dataset> {
        let Some(stats) = &self.standardization else {
            return Ok(self.clone());
        };
        let mut out = self.clone();
        for c in 0..self.raw_input_dim() {
            let (m, s) = (stats.input_mean[c], stats.input_scale[c]);
            out.inputs.column_mut(c).apply(|v| *v = *v * s + m);
        }
        for c in 0..self.target_dim() {
            let (m, s) = (stats.target_mean[c], stats.target_scale[c]);
            out.targets.column_mut(c).apply(|v| *v = *v * s + m);
        }
        out.standardization = None;
        Ok(out)
    }

    fn check_stats(&self, stats: &Standardization) -> Result<()> {
        if stats.input_mean.len() != self.raw_input_dim()
            || stats.input_scale.len() != self.raw_input_dim()
            || stats.target_mean.len() != self.target_dim()
            || stats.target_scale.len() != self.target_dim()
        {
            return Err(HmeError::Dimension(
                "standardization statistics do not match the dataset columns".into(),
            ));
        }
        Ok(())
    }

    /// Rows selected by `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        let mut out = self.clone();
        out.inputs = self.inputs.select_rows(indices);
        out.targets = self.targets.select_rows(indices);
        out
    }
}

fn check_scale(var: f64, name: &str) -> Result<()> {
    if var > 0.0 && var.is_finite() {
        Ok(())
    } else {
        Err(HmeError::Domain(format!("column {name:?} has zero variance")))
    }
}

/// Mean and population variance.
fn column_stats(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    fn sample() -> Dataset {
        Dataset::from_columns(
            &[vec![1.0, 2.0, 4.0, 7.0], vec![0.5, -0.5, 0.25, 3.0]],
            &[vec![3.0, 1.0, 2.0, -1.0]],
            true,
        )
        .unwrap()
    }

    #[test]
    fn bias_column_is_appended() {
        let d = sample();
        assert_eq!(d.input_dim(), 3);
        assert_eq!(d.raw_input_dim(), 2);
        assert!(d.inputs().column(2).iter().all(|&v| v == 1.0));
        assert_eq!(d.input_names(), &["x1", "x2", "bias"]);
        assert_eq!(d.target_names(), &["t"]);
        assert_eq!(d.input_row(1), vec![2.0, -0.5, 1.0]);
    }

    #[test]
    fn standardized_columns_have_unit_scale() {
        let (s, stats) = sample().standardize().unwrap();
        for c in 0..2 {
            let col: Vec<f64> = s.inputs().column(c).iter().copied().collect();
            let (m, v) = column_stats(col.iter().copied());
            assert_abs_diff_eq!(m, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        }
        assert!(s.inputs().column(2).iter().all(|&v| v == 1.0));
        assert_eq!(stats.input_mean.len(), 2);
        let back = s.unstandardize().unwrap();
        let orig = sample();
        assert!((back.inputs() - orig.inputs()).abs().max() < 1e-12);
        assert!((back.targets() - orig.targets()).abs().max() < 1e-12);
    }

    #[test]
    fn constant_column_is_rejected() {
        let d = Dataset::from_columns(&[vec![2.0, 2.0, 2.0]], &[vec![1.0, 2.0, 3.0]], true).unwrap();
        match d.standardize() {
            Err(HmeError::Domain(msg)) => assert!(msg.contains("\"x\"")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mismatched_rows_are_rejected() {
        assert!(Dataset::from_columns(&[vec![1.0, 2.0]], &[vec![1.0]], true).is_err());
    }
}
