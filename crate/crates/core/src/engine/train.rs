use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::anneal::AnnealingSchedule;
use super::elbo::bound;
use super::posterior::{FixedPrecisions, HmePosterior, Observations};
use super::updates::{q_tau, q_v, q_w, q_z, update_alpha, update_beta, xi, QzOptions};
use crate::dataset::Dataset;
use crate::error::{HmeError, Result};
use crate::model::PriorConfig;
use crate::topology::TreeTopology;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_iterations: usize,
    /// Fewest sweeps before the convergence test may stop a run.
    pub min_iterations: usize,
    /// Relative change of the bound between consecutive terminal-temperature sweeps.
    pub tolerance: f64,
    pub annealing: AnnealingSchedule,
    pub priors: PriorConfig,
    pub qz: QzOptions,
    /// Hold α, β and τ at these values instead of learning them.
    pub fixed_precisions: Option<FixedPrecisions>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iterations: 800,
            min_iterations: 50,
            tolerance: 1e-6,
            annealing: AnnealingSchedule::default(),
            priors: PriorConfig::default(),
            qz: QzOptions::default(),
            fixed_precisions: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.annealing.validate()?;
        self.priors.validate()?;
        if self.max_iterations == 0 {
            return Err(HmeError::InvalidArgument("max_iterations must be positive".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(HmeError::InvalidArgument("tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-sweep record of a training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub bound_history: Vec<f64>,
    pub temperature_history: Vec<f64>,
    pub converged: bool,
    pub iterations_run: usize,
    pub failure: Option<String>,
}

impl TrainingTrace {
    pub fn final_bound(&self) -> Option<f64> {
        self.bound_history.last().copied().filter(|b| b.is_finite())
    }

    /// Largest drop of the bound between consecutive sweeps that both ran at
    /// `terminal` inverse temperature.
    pub fn worst_terminal_decrease(&self, terminal: f64) -> f64 {
        let mut worst = 0.0f64;
        for k in 1..self.bound_history.len() {
            if self.temperature_history[k] == terminal && self.temperature_history[k - 1] == terminal {
                worst = worst.max(self.bound_history[k - 1] - self.bound_history[k]);
            }
        }
        worst
    }
}

/// A run that stopped on a numerical failure, with everything recorded so far.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{error}")]
pub struct TrainFailure {
    pub error: HmeError,
    pub trace: TrainingTrace,
}

/// One full pass of coordinate ascent in the fixed order q_Z, ξ, q_v, q_W, q_τ, q_α, q_β.
pub fn sweep(
    post: &mut HmePosterior,
    data: &Dataset,
    inverse_temperature: f64,
    qz: QzOptions,
) -> Result<()> {
    sweep_obs(post, &Observations::new(data), inverse_temperature, qz)
}

fn sweep_obs(post: &mut HmePosterior, obs: &Observations, s: f64, qz: QzOptions) -> Result<()> {
    q_z(post, obs, s, qz)?;
    xi(post, obs)?;
    q_v(post, obs)?;
    q_w(post, obs, s)?;
    q_tau(post, obs, s)?;
    update_alpha(post);
    update_beta(post);
    Ok(())
}

fn at_iteration(err: HmeError, iteration: usize) -> HmeError {
    match err {
        HmeError::Numerical { term, .. } => HmeError::Numerical { iteration, term },
        other => other,
    }
}

/// Trains a posterior for `tree` on `data` from a seeded random start.
pub fn train(
    tree: &TreeTopology,
    data: &Dataset,
    config: &TrainConfig,
    seed: u64,
) -> core::result::Result<(HmePosterior, TrainingTrace), TrainFailure> {
    let mut trace = TrainingTrace::default();
    let fail = |error: HmeError, trace: &mut TrainingTrace| {
        trace.failure = Some(error.to_string());
        TrainFailure { error, trace: core::mem::take(trace) }
    };
    if let Err(e) = config.validate() {
        return Err(fail(e, &mut trace));
    }
    if data.is_empty() {
        return Err(fail(HmeError::InvalidArgument("cannot train on an empty dataset".into()), &mut trace));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut post = match HmePosterior::initialize(tree, data, config.priors, config.fixed_precisions, &mut rng) {
        Ok(p) => p,
        Err(e) => return Err(fail(e, &mut trace)),
    };
    let obs = Observations::new(data);
    let schedule = &config.annealing;
    for k in 0..config.max_iterations {
        let s = schedule.inverse_temperature(k);
        let value = sweep_obs(&mut post, &obs, s, config.qz).and_then(|_| bound(&post, &obs, s));
        let value = match value {
            Ok(v) => v,
            Err(e) => return Err(fail(at_iteration(e, k), &mut trace)),
        };
        trace.bound_history.push(value);
        trace.temperature_history.push(s);
        trace.iterations_run = k + 1;
        if k + 1 >= config.min_iterations && k > 0 && schedule.is_terminal(k) && schedule.is_terminal(k - 1) {
            let prev = trace.bound_history[k - 1];
            if libm::fabs(value - prev) < config.tolerance * libm::fabs(value) {
                trace.converged = true;
                break;
            }
        }
    }
    Ok((post, trace))
}
