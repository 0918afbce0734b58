use alloc::format;
use alloc::string::String;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{HmeError, Result};
use crate::math::{digamma, ln_gamma, LN_2PI};
use crate::model::PriorConfig;

/// Gaussian factor over one gate's weight vector.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFactor {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianFactor {
    /// `⟨v vᵀ⟩ = Σ + m mᵀ`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        &self.covariance + &self.mean * self.mean.transpose()
    }

    /// `⟨‖v‖²⟩`.
    pub fn expected_sq_norm(&self) -> f64 {
        self.mean.norm_squared() + self.covariance.trace()
    }

    pub fn entropy(&self) -> Result<f64> {
        let p = self.mean.len() as f64;
        Ok(0.5 * p * (1.0 + LN_2PI) + 0.5 * log_det_spd(&self.covariance, "gate covariance")?)
    }
}

/// Gaussian factor over an expert's weight matrix: every row has its own
/// mean and all rows share one covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpertFactor {
    /// `target_dim × input_dim`.
    pub mean: DMatrix<f64>,
    /// `input_dim × input_dim`.
    pub covariance: DMatrix<f64>,
}

impl ExpertFactor {
    /// `Σ_k ⟨‖w_k‖²⟩`.
    pub fn expected_sq_norm(&self) -> f64 {
        self.mean.norm_squared() + self.mean.nrows() as f64 * self.covariance.trace()
    }

    /// `⟨‖t − W x‖²⟩ = ‖t − M x‖² + D xᵀ Σ x`.
    pub fn expected_sq_residual(&self, t: &[f64], x: &[f64]) -> f64 {
        let (d, p) = self.mean.shape();
        let mut fit = 0.0;
        for k in 0..d {
            let mut pred = 0.0;
            for c in 0..p {
                pred += self.mean[(k, c)] * x[c];
            }
            let r = t[k] - pred;
            fit += r * r;
        }
        fit + d as f64 * quad_form(&self.covariance, x)
    }

    pub fn entropy(&self) -> Result<f64> {
        let (d, p) = self.mean.shape();
        let per_row = 0.5 * p as f64 * (1.0 + LN_2PI)
            + 0.5 * log_det_spd(&self.covariance, "expert covariance")?;
        Ok(d as f64 * per_row)
    }
}

/// Posterior over a precision: either a Gamma factor or a point value held
/// fixed (used for fixed-hyperparameter model variants).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionFactor {
    Gamma { shape: f64, rate: f64 },
    Fixed(f64),
}

impl PrecisionFactor {
    pub fn prior(priors: &PriorConfig) -> Self {
        PrecisionFactor::Gamma { shape: priors.gamma_shape, rate: priors.gamma_rate }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            PrecisionFactor::Gamma { shape, rate } => shape / rate,
            PrecisionFactor::Fixed(v) => v,
        }
    }

    /// `⟨ln x⟩ = ψ(shape) − ln rate`.
    pub fn ln_mean(&self) -> f64 {
        match *self {
            PrecisionFactor::Gamma { shape, rate } => digamma(shape) - libm::log(rate),
            PrecisionFactor::Fixed(v) => libm::log(v),
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, PrecisionFactor::Fixed(_))
    }

    /// `E_q[ln Gam(x | a, b)] + H[q]`; zero for fixed values, which are not
    /// random variables of the model.
    pub fn prior_plus_entropy(&self, priors: &PriorConfig) -> f64 {
        match *self {
            PrecisionFactor::Fixed(_) => 0.0,
            PrecisionFactor::Gamma { shape, rate } => {
                let (a, b) = (priors.gamma_shape, priors.gamma_rate);
                let ln_x = digamma(shape) - libm::log(rate);
                let x = shape / rate;
                let expected_log_prior = a * libm::log(b) - ln_gamma(a) + (a - 1.0) * ln_x - b * x;
                let entropy = shape - libm::log(rate) + ln_gamma(shape) + (1.0 - shape) * digamma(shape);
                expected_log_prior + entropy
            }
        }
    }

    pub(crate) fn validate(&self, what: &str) -> Result<()> {
        let ok = match *self {
            PrecisionFactor::Gamma { shape, rate } => shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite(),
            PrecisionFactor::Fixed(v) => v > 0.0 && v.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(HmeError::Domain(format!("{what} factor is not a valid precision: {self:?}")))
        }
    }
}

pub(crate) fn quad_form(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let p = x.len();
    let mut q = 0.0;
    for r in 0..p {
        let mut row = 0.0;
        for c in 0..p {
            row += m[(r, c)] * x[c];
        }
        q += x[r] * row;
    }
    q
}

pub(crate) fn cholesky(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| HmeError::Numerical {
        iteration: 0,
        term: format!("{what} is not positive definite"),
    })
}

/// Inverse of a symmetric positive-definite matrix, symmetrized.
pub(crate) fn spd_inverse(m: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let inv = cholesky(m, what)?.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

pub(crate) fn log_det_spd(m: &DMatrix<f64>, what: &str) -> Result<f64> {
    let chol = cholesky(m.clone(), what)?;
    Ok(2.0 * chol.l().diagonal().iter().map(|v| libm::log(*v)).sum::<f64>())
}

pub(crate) fn describe(term: &str, value: f64) -> String {
    format!("{term} evaluated to {value}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Trapezoid integration of ln(x) Gam(x | shape, rate) on a log grid.
    fn quadrature_ln_mean(shape: f64, rate: f64) -> f64 {
        let log_norm = shape * libm::log(rate) - ln_gamma(shape);
        let (lo, hi, steps) = (-40.0f64, 12.0f64, 400_000);
        let h = (hi - lo) / steps as f64;
        let mut acc = 0.0;
        for k in 0..=steps {
            // substitute x = e^u: ∫ ln x p(x) dx = ∫ u p(e^u) e^u du
            let u = lo + k as f64 * h;
            let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
            let log_density = log_norm + shape * u - rate * libm::exp(u);
            acc += w * u * libm::exp(log_density);
        }
        acc * h
    }

    #[test]
    fn gamma_log_mean_matches_quadrature() {
        for &(shape, rate) in &[(2.5, 1.3), (10.01, 3.0), (0.8, 0.2)] {
            let f = PrecisionFactor::Gamma { shape, rate };
            assert_abs_diff_eq!(f.ln_mean(), quadrature_ln_mean(shape, rate), epsilon = 1e-7);
        }
    }

    #[test]
    fn prior_factor_has_zero_kl() {
        let priors = PriorConfig { gamma_shape: 3.0, gamma_rate: 2.0 };
        assert_abs_diff_eq!(PrecisionFactor::prior(&priors).prior_plus_entropy(&priors), 0.0, epsilon = 1e-12);
        let other = PrecisionFactor::Gamma { shape: 5.0, rate: 1.0 };
        assert!(other.prior_plus_entropy(&priors) < 0.0);
        assert_eq!(PrecisionFactor::Fixed(4.0).prior_plus_entropy(&priors), 0.0);
    }

    #[test]
    fn expected_residual_includes_covariance() {
        let f = ExpertFactor {
            mean: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            covariance: DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.2]),
        };
        let x = [1.0, 2.0];
        let t = [2.0, 2.0];
        // ‖t − Mx‖² = 1, xᵀΣx = 0.5 + 0.4 + 0.8 = 1.7
        assert_abs_diff_eq!(f.expected_sq_residual(&t, &x), 1.0 + 2.0 * 1.7, epsilon = 1e-14);
    }
}
