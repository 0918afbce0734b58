//! Ridge least-squares regression on fixed feature expansions. Fits the
//! conditional mean, so on a multi-valued inverse problem it averages the
//! branches.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{HmeError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureConfig {
    /// All monomials of total degree ≤ `degree`, constant included.
    Polynomial { degree: usize },
    /// Gaussian bumps on a regular grid spanning the training inputs, with
    /// `centers_per_dim` points per input dimension and width equal to
    /// `width_scale` grid spacings, plus a constant.
    Rbf { centers_per_dim: usize, width_scale: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineModel {
    pub features: FeatureConfig,
    pub input_dim: usize,
    /// Monomial exponents or RBF centres, one entry per non-constant feature.
    basis: Vec<Vec<f64>>,
    width: f64,
    /// `F × D`, constant feature first.
    pub coefficients: DMatrix<f64>,
}

fn monomials(p: usize, degree: usize) -> Vec<Vec<f64>> {
    fn rec(p: usize, left: usize, prefix: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if prefix.len() == p {
            if prefix.iter().any(|&e| e > 0.0) {
                out.push(prefix.clone());
            }
            return;
        }
        for e in 0..=left {
            prefix.push(e as f64);
            rec(p, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(p, degree, &mut Vec::new(), &mut out);
    out
}

fn grid(raw: &DMatrix<f64>, per_dim: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let p = raw.ncols();
    let axes: Vec<Vec<f64>> = (0..p)
        .map(|c| {
            let col = raw.column(c);
            let (lo, hi) = (col.min(), col.max());
            if per_dim == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..per_dim).map(|k| lo + (hi - lo) * k as f64 / (per_dim - 1) as f64).collect()
            }
        })
        .collect();
    let spacing: Vec<f64> = axes
        .iter()
        .map(|a| if a.len() > 1 { a[1] - a[0] } else { 1.0 })
        .collect();
    let mut centres = vec![Vec::new()];
    for axis in &axes {
        centres = centres
            .into_iter()
            .flat_map(|c| {
                axis.iter().map(move |&v| {
                    let mut next = c.clone();
                    next.push(v);
                    next
                })
            })
            .collect();
    }
    (centres, spacing)
}

impl BaselineModel {
    fn feature_row(&self, x: &[f64]) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.basis.len() + 1);
        row.push(1.0);
        match self.features {
            FeatureConfig::Polynomial { .. } => {
                for exps in &self.basis {
                    row.push(x.iter().zip(exps).map(|(v, &e)| libm::pow(*v, e)).product());
                }
            }
            FeatureConfig::Rbf { .. } => {
                let denom = 2.0 * self.width * self.width;
                for c in &self.basis {
                    let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                    row.push(libm::exp(-d2 / denom));
                }
            }
        }
        row
    }

    pub fn num_features(&self) -> usize {
        self.basis.len() + 1
    }
}

/// Solves `(ΦᵀΦ + ridge·I) w = ΦᵀT` on the raw (non-bias) input columns.
pub fn fit_baseline(data: &Dataset, features: FeatureConfig, ridge: f64) -> Result<BaselineModel> {
    if data.is_empty() {
        return Err(HmeError::InvalidArgument("baseline needs at least one training row".into()));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(HmeError::InvalidArgument(format!("ridge must be a finite nonnegative value, got {ridge}")));
    }
    let raw = data.raw_inputs();
    let p = raw.ncols();
    let (basis, width) = match features {
        FeatureConfig::Polynomial { degree } => (monomials(p, degree), 1.0),
        FeatureConfig::Rbf { centers_per_dim, width_scale } => {
            if centers_per_dim == 0 || !(width_scale > 0.0) {
                return Err(HmeError::InvalidArgument(
                    "rbf features need centers_per_dim ≥ 1 and width_scale > 0".into(),
                ));
            }
            let (centres, spacing) = grid(&raw, centers_per_dim);
            let mean_spacing = spacing.iter().sum::<f64>() / spacing.len().max(1) as f64;
            let base = if mean_spacing > 0.0 { mean_spacing } else { 1.0 };
            (centres, width_scale * base)
        }
    };
    let mut model = BaselineModel {
        features,
        input_dim: p,
        basis,
        width,
        coefficients: DMatrix::zeros(0, 0),
    };
    let f = model.num_features();
    let mut gram = DMatrix::<f64>::identity(f, f) * ridge;
    let mut cross = DMatrix::<f64>::zeros(f, data.target_dim());
    for n in 0..data.len() {
        let x: Vec<f64> = raw.row(n).iter().copied().collect();
        let phi = model.feature_row(&x);
        for r in 0..f {
            for c in 0..f {
                gram[(r, c)] += phi[r] * phi[c];
            }
            for k in 0..data.target_dim() {
                cross[(r, k)] += phi[r] * data.targets()[(n, k)];
            }
        }
    }
    let singular = || HmeError::Numerical {
        iteration: 0,
        term: format!("baseline normal equations are singular with ridge {ridge}; use ridge > 0"),
    };
    let scale = gram.diagonal().max();
    let chol = gram.cholesky().ok_or_else(singular)?;
    // rounding can let a rank-deficient Gram matrix through
    let min_pivot = chol.l_dirty().diagonal().min();
    if !(min_pivot * min_pivot > 1e-13 * scale) {
        return Err(singular());
    }
    model.coefficients = chol.solve(&cross);
    if model.coefficients.iter().any(|v| !v.is_finite()) {
        return Err(HmeError::Numerical {
            iteration: 0,
            term: format!("baseline coefficients are not finite with ridge {ridge}; use ridge > 0"),
        });
    }
    Ok(model)
}

/// Prediction for one raw input vector (no bias column).
pub fn predict_baseline(model: &BaselineModel, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.input_dim {
        return Err(HmeError::Dimension(format!(
            "baseline expects {} inputs, got {}",
            model.input_dim,
            x.len()
        )));
    }
    let phi = model.feature_row(x);
    Ok((0..model.coefficients.ncols())
        .map(|k| phi.iter().enumerate().map(|(r, v)| v * model.coefficients[(r, k)]).sum())
        .collect())
}

/// Predictions for every row of `data`, `N × D`.
pub fn predict_baseline_dataset(model: &BaselineModel, data: &Dataset) -> Result<DMatrix<f64>> {
    let raw = data.raw_inputs();
    let rows = (0..data.len())
        .map(|n| predict_baseline(model, &raw.row(n).iter().copied().collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let d = model.coefficients.ncols();
    Ok(DMatrix::from_fn(rows.len(), d, |n, k| rows[n][k]))
}
