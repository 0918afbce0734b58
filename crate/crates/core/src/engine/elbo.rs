//! Closed-form evaluation of the bound `L̃`.

use alloc::format;

use super::factors::{describe, PrecisionFactor};
use super::posterior::{HmePosterior, Observations};
use super::updates::{expected_expert_log_density, expected_sq_activation};
use crate::bound::lambda;
use crate::dataset::Dataset;
use crate::error::{HmeError, Result};
use crate::math::{bernoulli_entropy_from_logit, log_sigmoid, LN_2PI};
use crate::model::dot;

/// The bound split into its additive pieces.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BoundTerms {
    /// `s · Σ_n Σ_j E[ζ_jn] ⟨ln N(t_n | W_j x_n, τ_j⁻¹ I)⟩`.
    pub expert_likelihood: f64,
    /// Gate terms with each `p(z | v, x)` replaced by its sigmoid bound.
    pub gate_likelihood: f64,
    /// `⟨ln p(W | α)⟩ + H[q_W]`.
    pub expert_weights: f64,
    /// `⟨ln p(v | β)⟩ + H[q_v]`.
    pub gate_weights: f64,
    /// Gamma prior terms plus Gamma entropies for α, β and τ.
    pub precisions: f64,
    /// `H[q_Z]`.
    pub gate_entropy: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.expert_likelihood
            + self.gate_likelihood
            + self.expert_weights
            + self.gate_weights
            + self.precisions
            + self.gate_entropy
    }

    fn check(&self) -> Result<f64> {
        let named = [
            ("expert likelihood term", self.expert_likelihood),
            ("gate likelihood term", self.gate_likelihood),
            ("expert weight prior/entropy term", self.expert_weights),
            ("gate weight prior/entropy term", self.gate_weights),
            ("precision prior/entropy term", self.precisions),
            ("gate entropy term", self.gate_entropy),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                return Err(HmeError::Numerical { iteration: 0, term: describe(name, v) });
            }
        }
        Ok(self.total())
    }
}

pub(crate) fn bound_terms(post: &HmePosterior, obs: &Observations, inverse_temperature: f64) -> Result<BoundTerms> {
    post.check_data(obs)?;
    let tree = &post.tree;
    let (m, g) = (tree.num_experts(), tree.num_gates());
    let p = obs.input_dim() as f64;
    let d = obs.target_dim() as f64;
    let mut terms = BoundTerms::default();

    let g_all = expected_expert_log_density(post, obs);
    let mut expert = 0.0;
    for n in 0..obs.len() {
        for j in 0..m {
            expert += post.resp.expert_resp[(n, j)] * g_all[(n, j)];
        }
    }
    terms.expert_likelihood = inverse_temperature * expert;

    let mut gate = 0.0;
    let mut entropy = 0.0;
    for i in 0..g {
        for n in 0..obs.len() {
            let x = obs.x(n);
            let h = post.resp.gate_logit[(n, i)];
            let xi = post.xi.values[(n, i)];
            let lam = lambda(xi);
            let activation = dot(post.gates[i].mean.as_slice(), x);
            gate += (post.resp.gate_prob(n, i) - 0.5) * activation
                - lam * expected_sq_activation(post, i, x)
                + log_sigmoid(xi)
                - 0.5 * xi
                + lam * xi * xi;
            entropy += bernoulli_entropy_from_logit(h);
        }
    }
    terms.gate_likelihood = gate;
    terms.gate_entropy = entropy;

    for j in 0..m {
        let alpha = post.alpha[j];
        let e = &post.experts[j];
        terms.expert_weights += 0.5 * d * p * (alpha.ln_mean() - LN_2PI)
            - 0.5 * alpha.mean() * e.expected_sq_norm()
            + e.entropy().map_err(|err| context(err, j, "expert"))?;
    }
    for i in 0..g {
        let beta = post.beta[i];
        let v = &post.gates[i];
        terms.gate_weights += 0.5 * p * (beta.ln_mean() - LN_2PI)
            - 0.5 * beta.mean() * v.expected_sq_norm()
            + v.entropy().map_err(|err| context(err, i, "gate"))?;
    }
    terms.precisions = post
        .alpha
        .iter()
        .chain(&post.beta)
        .chain(&post.tau)
        .map(|f: &PrecisionFactor| f.prior_plus_entropy(&post.priors))
        .sum();
    Ok(terms)
}

fn context(err: HmeError, index: usize, what: &str) -> HmeError {
    match err {
        HmeError::Numerical { iteration, term } => HmeError::Numerical {
            iteration,
            term: format!("{what} {index}: {term}"),
        },
        other => other,
    }
}

pub(crate) fn bound(post: &HmePosterior, obs: &Observations, inverse_temperature: f64) -> Result<f64> {
    bound_terms(post, obs, inverse_temperature)?.check()
}

/// Evaluates `L̃` with the data term scaled by `inverse_temperature`.
pub fn lower_bound(post: &HmePosterior, data: &Dataset, inverse_temperature: f64) -> Result<f64> {
    bound(post, &Observations::new(data), inverse_temperature)
}

/// Same as [`lower_bound`] but returns the individual terms.
pub fn lower_bound_terms(post: &HmePosterior, data: &Dataset, inverse_temperature: f64) -> Result<BoundTerms> {
    let terms = bound_terms(post, &Observations::new(data), inverse_temperature)?;
    terms.check()?;
    Ok(terms)
}
