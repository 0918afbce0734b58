//! Predictions from a trained posterior.
//!
//! Gating uses the posterior means of the gate weights by default. The
//! predictive density is the plug-in mixture
//! `Σ_j π_j(x) N(t | ⟨W_j⟩x, ⟨τ_j⟩⁻¹ I)`, not the Student-t posterior
//! predictive.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::engine::{quad_form, HmePosterior};
use crate::error::{HmeError, Result};
use crate::math::{log_sum_exp, LN_2PI};
use crate::model::{dot, log_mixing_from_activations};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GatingMode {
    /// Gate probabilities at `⟨v_i⟩`.
    #[default]
    PlugIn,
    /// `E[σ(v_iᵀx)]` under q_v via the probit approximation.
    Probit,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointMode {
    /// Mean of the expert with the largest mixing coefficient.
    #[default]
    MostProbableExpert,
    /// `Σ_j π_j ⟨W_j⟩x`.
    MixtureMean,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictOptions {
    pub gating: GatingMode,
    pub point: PointMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub point: Vec<f64>,
    /// Largest mixing coefficient, lowest index on ties.
    pub expert_chosen: usize,
    pub mixing: Vec<f64>,
    /// `M × D`.
    pub per_expert_means: DMatrix<f64>,
}

fn check_input(x: &[f64], post: &HmePosterior) -> Result<()> {
    if x.len() != post.input_dim() {
        return Err(HmeError::Dimension(format!(
            "model expects {} inputs (including any bias), got {}",
            post.input_dim(),
            x.len()
        )));
    }
    Ok(())
}

fn log_mixing(x: &[f64], post: &HmePosterior, gating: GatingMode) -> Result<Vec<f64>> {
    check_input(x, post)?;
    let activations: Vec<f64> = post
        .gates
        .iter()
        .map(|g| {
            let mean = dot(g.mean.as_slice(), x);
            match gating {
                GatingMode::PlugIn => mean,
                GatingMode::Probit => {
                    let var = quad_form(&g.covariance, x).max(0.0);
                    mean / libm::sqrt(1.0 + PI * var / 8.0)
                }
            }
        })
        .collect();
    Ok(log_mixing_from_activations(&post.tree, &activations))
}

/// Mixing coefficients at the gate posterior means.
pub fn predictive_mixing(x: &[f64], post: &HmePosterior) -> Result<Vec<f64>> {
    predictive_mixing_with(x, post, GatingMode::PlugIn)
}

pub fn predictive_mixing_with(x: &[f64], post: &HmePosterior, gating: GatingMode) -> Result<Vec<f64>> {
    Ok(log_mixing(x, post, gating)?.into_iter().map(libm::exp).collect())
}

fn expert_means(x: &[f64], post: &HmePosterior) -> DMatrix<f64> {
    let d = post.target_dim();
    DMatrix::from_fn(post.experts.len(), d, |j, k| dot(post.experts[j].mean.row(k).transpose().as_slice(), x))
}

/// Most-probable-expert prediction with plug-in gating.
pub fn predict_point(x: &[f64], post: &HmePosterior) -> Result<Prediction> {
    predict(x, post, PredictOptions::default())
}

pub fn predict(x: &[f64], post: &HmePosterior, opts: PredictOptions) -> Result<Prediction> {
    let mixing = predictive_mixing_with(x, post, opts.gating)?;
    let per_expert_means = expert_means(x, post);
    let mut chosen = 0;
    for (j, &p) in mixing.iter().enumerate() {
        if p > mixing[chosen] {
            chosen = j;
        }
    }
    let point = match opts.point {
        PointMode::MostProbableExpert => per_expert_means.row(chosen).iter().copied().collect(),
        PointMode::MixtureMean => (0..per_expert_means.ncols())
            .map(|k| mixing.iter().enumerate().map(|(j, p)| p * per_expert_means[(j, k)]).sum())
            .collect(),
    };
    Ok(Prediction { point, expert_chosen: chosen, mixing, per_expert_means })
}

/// Predictions for every row of `data`.
pub fn predict_dataset(data: &Dataset, post: &HmePosterior, opts: PredictOptions) -> Result<Vec<Prediction>> {
    (0..data.len()).map(|n| predict(&data.input_row(n), post, opts)).collect()
}

/// `ln Σ_j π_j(x) N(t | ⟨W_j⟩x, ⟨τ_j⟩⁻¹ I)`.
pub fn predictive_log_density(t: &[f64], x: &[f64], post: &HmePosterior) -> Result<f64> {
    if t.len() != post.target_dim() {
        return Err(HmeError::Dimension(format!(
            "model has {} targets, got {}",
            post.target_dim(),
            t.len()
        )));
    }
    let log_pi = log_mixing(x, post, GatingMode::PlugIn)?;
    let means = expert_means(x, post);
    let d = t.len() as f64;
    let terms: Vec<f64> = log_pi
        .iter()
        .enumerate()
        .map(|(j, lp)| {
            let tau = post.tau[j].mean();
            let sq: f64 = (0..t.len()).map(|k| (t[k] - means[(j, k)]).powi(2)).sum();
            lp + 0.5 * d * (libm::log(tau) - LN_2PI) - 0.5 * tau * sq
        })
        .collect();
    Ok(log_sum_exp(&terms))
}

/// Mean over points and target dimensions of squared error divided by the
/// per-dimension variance (taken from the training set).
pub fn standardized_mse(predictions: &DMatrix<f64>, targets: &DMatrix<f64>, variances: &[f64]) -> Result<f64> {
    if predictions.shape() != targets.shape() {
        return Err(HmeError::Dimension(format!(
            "predictions are {:?}, targets are {:?}",
            predictions.shape(),
            targets.shape()
        )));
    }
    if variances.len() != targets.ncols() {
        return Err(HmeError::Dimension(format!(
            "{} variances for {} target columns",
            variances.len(),
            targets.ncols()
        )));
    }
    if let Some(k) = variances.iter().position(|v| !(*v > 0.0)) {
        return Err(HmeError::Domain(format!("target column {k} has variance {}", variances[k])));
    }
    if targets.nrows() == 0 {
        return Err(HmeError::InvalidArgument("no points to score".into()));
    }
    let mut acc = 0.0;
    for n in 0..targets.nrows() {
        for k in 0..targets.ncols() {
            let e = predictions[(n, k)] - targets[(n, k)];
            acc += e * e / variances[k];
        }
    }
    Ok(acc / (targets.nrows() * targets.ncols()) as f64)
}

/// Stacks the point predictions into an `N × D` matrix.
pub fn point_matrix(predictions: &[Prediction]) -> DMatrix<f64> {
    let d = predictions.first().map_or(0, |p| p.point.len());
    DMatrix::from_fn(predictions.len(), d, |n, k| predictions[n].point[k])
}
