//! Finite-difference stationarity check of the bound with respect to one
//! factor's parameters.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::elbo::bound;
use super::factors::PrecisionFactor;
use super::posterior::{HmePosterior, Observations};
use crate::dataset::Dataset;
use crate::error::Result;

/// Largest scaled gradient accepted as stationary.
pub const FD_TOLERANCE: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    /// Gate posterior logits `h_in`.
    GateAssignments,
    Xi,
    /// Means of the gate weight factors.
    GateWeights,
    /// Means of the expert weight factors.
    ExpertWeights,
    /// Log shape and log rate of the τ factors.
    NoisePrecision,
    ExpertHyper,
    GateHyper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteDifferenceReport {
    pub factor: FactorKind,
    pub parameters: usize,
    pub max_scaled_gradient: f64,
    pub worst_parameter: Option<usize>,
    pub passed: bool,
}

#[derive(Clone, Copy)]
enum Param {
    Additive(f64),
    Log(f64),
}

fn gamma_params(factors: &[PrecisionFactor]) -> Vec<Param> {
    factors
        .iter()
        .flat_map(|f| match *f {
            PrecisionFactor::Gamma { shape, rate } => {
                alloc::vec![Param::Log(libm::log(shape)), Param::Log(libm::log(rate))]
            }
            PrecisionFactor::Fixed(_) => Vec::new(),
        })
        .collect()
}

fn read(post: &HmePosterior, kind: FactorKind) -> Vec<Param> {
    match kind {
        FactorKind::GateAssignments => post.resp.gate_logit.iter().map(|&v| Param::Additive(v)).collect(),
        FactorKind::Xi => post.xi.values.iter().map(|&v| Param::Additive(v)).collect(),
        FactorKind::GateWeights => post
            .gates
            .iter()
            .flat_map(|g| g.mean.iter().map(|&v| Param::Additive(v)))
            .collect(),
        FactorKind::ExpertWeights => post
            .experts
            .iter()
            .flat_map(|e| e.mean.iter().map(|&v| Param::Additive(v)))
            .collect(),
        FactorKind::NoisePrecision => gamma_params(&post.tau),
        FactorKind::ExpertHyper => gamma_params(&post.alpha),
        FactorKind::GateHyper => gamma_params(&post.beta),
    }
}

fn write_gamma(factors: &mut [PrecisionFactor], mut index: usize, log_value: f64) {
    for f in factors.iter_mut() {
        if let PrecisionFactor::Gamma { shape, rate } = f {
            match index {
                0 => *shape = libm::exp(log_value),
                1 => *rate = libm::exp(log_value),
                _ => {
                    index -= 2;
                    continue;
                }
            }
            return;
        }
    }
}

fn write(post: &mut HmePosterior, kind: FactorKind, index: usize, value: f64) {
    match kind {
        FactorKind::GateAssignments => {
            post.resp.gate_logit.as_mut_slice()[index] = value;
            let n = index % post.resp.gate_logit.nrows();
            let tree = post.tree.clone();
            post.resp.refresh_expert_row(&tree, n);
        }
        FactorKind::Xi => post.xi.values.as_mut_slice()[index] = value,
        FactorKind::GateWeights => {
            let p = post.gates[0].mean.len();
            post.gates[index / p].mean[index % p] = value;
        }
        FactorKind::ExpertWeights => {
            let per = post.experts[0].mean.len();
            post.experts[index / per].mean.as_mut_slice()[index % per] = value;
        }
        FactorKind::NoisePrecision => write_gamma(&mut post.tau, index, value),
        FactorKind::ExpertHyper => write_gamma(&mut post.alpha, index, value),
        FactorKind::GateHyper => write_gamma(&mut post.beta, index, value),
    }
}

/// Central differences of `L̃` with respect to every parameter of `which`.
/// Gradients of additive parameters are scaled by `max(1, |θ|)`; Gamma
/// parameters are differentiated in log space.
pub fn finite_difference_check(
    post: &HmePosterior,
    data: &Dataset,
    which: FactorKind,
    inverse_temperature: f64,
) -> Result<FiniteDifferenceReport> {
    let obs = Observations::new(data);
    let params = read(post, which);
    let mut work = post.clone();
    let mut worst = 0.0f64;
    let mut worst_parameter = None;
    for (k, param) in params.iter().enumerate() {
        let (theta, step, scale) = match *param {
            Param::Additive(v) => {
                let scale = libm::fabs(v).max(1.0);
                (v, FD_STEP * scale, scale)
            }
            Param::Log(v) => (v, FD_STEP, 1.0),
        };
        write(&mut work, which, k, theta + step);
        let up = bound(&work, &obs, inverse_temperature)?;
        write(&mut work, which, k, theta - step);
        let down = bound(&work, &obs, inverse_temperature)?;
        write(&mut work, which, k, theta);
        let scaled = libm::fabs((up - down) / (2.0 * step)) * scale;
        if scaled > worst || worst_parameter.is_none() {
            worst = worst.max(scaled);
            worst_parameter = Some(k);
        }
    }
    Ok(FiniteDifferenceReport {
        factor: which,
        parameters: params.len(),
        max_scaled_gradient: worst,
        worst_parameter,
        passed: worst < FD_TOLERANCE,
    })
}
