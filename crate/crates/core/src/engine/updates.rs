//! Coordinate-ascent updates. Each function replaces one factor group by its
//! optimum given all the others, so none of them can decrease the bound
//! evaluated at the same inverse temperature.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::factors::{quad_form, spd_inverse, PrecisionFactor};
use super::posterior::{HmePosterior, Observations};
use crate::bound::{lambda, optimal_xi_squared};
use crate::dataset::Dataset;
use crate::error::{HmeError, Result};
use crate::math::{sigmoid_pair, LN_2PI};
use crate::model::dot;
use crate::topology::{Branch, Child};

/// Controls the inner fixed-point iteration of the q_Z update.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QzOptions {
    /// Upper limit on Gauss–Seidel passes over the gates of one point.
    pub max_sweeps: usize,
    /// A point is done when no gate probability moved by more than this.
    pub tolerance: f64,
}

impl Default for QzOptions {
    fn default() -> Self {
        QzOptions { max_sweeps: 50, tolerance: 1e-10 }
    }
}

/// `g_jn = (D/2)(⟨ln τ_j⟩ − ln 2π) − (⟨τ_j⟩/2)⟨‖t_n − W_j x_n‖²⟩`, `N × M`.
pub(crate) fn expected_expert_log_density(post: &HmePosterior, obs: &Observations) -> DMatrix<f64> {
    let d = obs.target_dim() as f64;
    let m = post.tree.num_experts();
    let consts: Vec<(f64, f64)> = post
        .tau
        .iter()
        .map(|t| (0.5 * d * (t.ln_mean() - LN_2PI), 0.5 * t.mean()))
        .collect();
    DMatrix::from_fn(obs.len(), m, |n, j| {
        let resid = post.experts[j].expected_sq_residual(obs.t(n), obs.x(n));
        consts[j].0 - consts[j].1 * resid
    })
}

fn child_value(child: Child, g: &[f64], gate_values: &[f64]) -> f64 {
    match child {
        Child::Expert(j) => g[j],
        Child::Gate(k) => gate_values[k],
    }
}

pub(crate) fn q_z(
    post: &mut HmePosterior,
    obs: &Observations,
    inverse_temperature: f64,
    opts: QzOptions,
) -> Result<()> {
    post.check_data(obs)?;
    let tree = post.tree.clone();
    let gates = tree.num_gates();
    if gates == 0 {
        return Ok(());
    }
    let nodes = tree.gates();
    let g_all = expected_expert_log_density(post, obs);
    let mut logits = vec![0.0; gates];
    let mut pairs = vec![(0.5, 0.5); gates];
    let mut g_row = vec![0.0; tree.num_experts()];
    let mut activation = vec![0.0; gates];
    // expected g below each gate, and the probability of reaching it
    let mut below = vec![0.0; gates];
    let mut reach = vec![0.0; gates];
    for n in 0..obs.len() {
        let x = obs.x(n);
        for i in 0..gates {
            logits[i] = post.resp.gate_logit[(n, i)];
            pairs[i] = sigmoid_pair(logits[i]);
            activation[i] = dot(post.gates[i].mean.as_slice(), x);
        }
        for j in 0..tree.num_experts() {
            g_row[j] = g_all[(n, j)];
        }
        for _ in 0..opts.max_sweeps.max(1) {
            // Gates are numbered in preorder, so children come after their
            // parent. Values below a gate only involve its descendants, which
            // a preorder pass has not touched yet when the gate is visited.
            for i in (0..gates).rev() {
                let node = &nodes[i];
                below[i] = pairs[i].0 * child_value(node.left, &g_row, &below)
                    + pairs[i].1 * child_value(node.right, &g_row, &below);
            }
            let mut moved = 0.0f64;
            for i in 0..gates {
                let node = &nodes[i];
                reach[i] = match node.parent {
                    None => 1.0,
                    Some(step) => {
                        let (l, r) = pairs[step.gate];
                        reach[step.gate]
                            * match step.branch {
                                Branch::Left => l,
                                Branch::Right => r,
                            }
                    }
                };
                let diff = child_value(node.left, &g_row, &below) - child_value(node.right, &g_row, &below);
                let h = activation[i] + inverse_temperature * reach[i] * diff;
                if !h.is_finite() {
                    return Err(HmeError::Numerical {
                        iteration: 0,
                        term: format!("gate logit h[{n}][{i}] = {h}"),
                    });
                }
                let next = sigmoid_pair(h);
                moved = moved.max(libm::fabs(next.0 - pairs[i].0));
                logits[i] = h;
                pairs[i] = next;
            }
            if moved < opts.tolerance {
                break;
            }
        }
        for i in 0..gates {
            post.resp.gate_logit[(n, i)] = logits[i];
        }
        post.resp.set_expert_row(&tree, n, &pairs, &mut reach);
    }
    Ok(())
}

pub(crate) fn q_w(post: &mut HmePosterior, obs: &Observations, inverse_temperature: f64) -> Result<()> {
    post.check_data(obs)?;
    let (p, d) = (obs.input_dim(), obs.target_dim());
    for j in 0..post.tree.num_experts() {
        let scale = inverse_temperature * post.tau[j].mean();
        let mut precision = DMatrix::<f64>::identity(p, p) * post.alpha[j].mean();
        let mut cross = DMatrix::<f64>::zeros(d, p);
        for n in 0..obs.len() {
            let w = scale * post.resp.expert_resp[(n, j)];
            let (x, t) = (obs.x(n), obs.t(n));
            for r in 0..p {
                let wx = w * x[r];
                for c in 0..p {
                    precision[(r, c)] += wx * x[c];
                }
                for k in 0..d {
                    cross[(k, r)] += wx * t[k];
                }
            }
        }
        let covariance = spd_inverse(precision, &format!("expert {j} precision matrix"))?;
        let e = &mut post.experts[j];
        e.mean = &cross * &covariance;
        e.covariance = covariance;
    }
    Ok(())
}

pub(crate) fn q_tau(post: &mut HmePosterior, obs: &Observations, inverse_temperature: f64) -> Result<()> {
    post.check_data(obs)?;
    let d = obs.target_dim() as f64;
    let (a, b) = (post.priors.gamma_shape, post.priors.gamma_rate);
    for j in 0..post.tree.num_experts() {
        if post.tau[j].is_fixed() {
            continue;
        }
        let mut mass = 0.0;
        let mut resid = 0.0;
        for n in 0..obs.len() {
            let r = post.resp.expert_resp[(n, j)];
            mass += r;
            resid += r * post.experts[j].expected_sq_residual(obs.t(n), obs.x(n));
        }
        post.tau[j] = PrecisionFactor::Gamma {
            shape: a + 0.5 * inverse_temperature * d * mass,
            rate: b + 0.5 * inverse_temperature * resid,
        };
    }
    Ok(())
}

pub(crate) fn q_v(post: &mut HmePosterior, obs: &Observations) -> Result<()> {
    post.check_data(obs)?;
    let p = obs.input_dim();
    for i in 0..post.tree.num_gates() {
        let mut precision = DMatrix::<f64>::identity(p, p) * post.beta[i].mean();
        let mut linear = DVector::<f64>::zeros(p);
        for n in 0..obs.len() {
            let x = obs.x(n);
            let two_lambda = 2.0 * lambda(post.xi.values[(n, i)]);
            let centred = post.resp.gate_prob(n, i) - 0.5;
            for r in 0..p {
                linear[r] += centred * x[r];
                for c in 0..p {
                    precision[(r, c)] += two_lambda * x[r] * x[c];
                }
            }
        }
        let covariance = spd_inverse(precision, &format!("gate {i} precision matrix"))?;
        post.gates[i].mean = &covariance * linear;
        post.gates[i].covariance = covariance;
    }
    Ok(())
}

/// Updates q_α and q_β from the current weight factors.
pub fn update_hyper_factors(post: &mut HmePosterior) {
    update_alpha(post);
    update_beta(post);
}

pub fn update_alpha(post: &mut HmePosterior) {
    let (a, b) = (post.priors.gamma_shape, post.priors.gamma_rate);
    let p = post.input_dim() as f64;
    let d = post.target_dim() as f64;
    for (alpha, expert) in post.alpha.iter_mut().zip(&post.experts) {
        if alpha.is_fixed() {
            continue;
        }
        *alpha = PrecisionFactor::Gamma {
            shape: a + 0.5 * d * p,
            rate: b + 0.5 * expert.expected_sq_norm(),
        };
    }
}

pub fn update_beta(post: &mut HmePosterior) {
    let (a, b) = (post.priors.gamma_shape, post.priors.gamma_rate);
    for (beta, gate) in post.beta.iter_mut().zip(&post.gates) {
        if beta.is_fixed() {
            continue;
        }
        let p = gate.mean.len() as f64;
        *beta = PrecisionFactor::Gamma {
            shape: a + 0.5 * p,
            rate: b + 0.5 * gate.expected_sq_norm(),
        };
    }
}

/// Outcome of a ξ update: how many quadratic forms came out negative and
/// were clamped to zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct XiDiagnostics {
    pub clamped: usize,
}

pub(crate) fn xi(post: &mut HmePosterior, obs: &Observations) -> Result<XiDiagnostics> {
    post.check_data(obs)?;
    let mut diag = XiDiagnostics::default();
    for i in 0..post.tree.num_gates() {
        let second = post.gates[i].second_moment();
        for n in 0..obs.len() {
            let sq = optimal_xi_squared(obs.x(n), &second);
            diag.clamped += usize::from(sq.clamped);
            post.xi.values[(n, i)] = libm::sqrt(sq.value);
        }
    }
    Ok(diag)
}

/// `⟨(vᵀx)²⟩` under a gate factor.
pub(crate) fn expected_sq_activation(post: &HmePosterior, gate: usize, x: &[f64]) -> f64 {
    let g = &post.gates[gate];
    let m = dot(g.mean.as_slice(), x);
    m * m + quad_form(&g.covariance, x)
}

/// Re-estimates q_Z: every gate probability becomes `σ(h_in)`, iterated to a
/// joint fixed point per data point, and expert responsibilities are
/// recomputed as path products.
pub fn update_q_z(
    post: &mut HmePosterior,
    data: &Dataset,
    inverse_temperature: f64,
    opts: QzOptions,
) -> Result<()> {
    q_z(post, &Observations::new(data), inverse_temperature, opts)
}

/// Re-estimates the Gaussian expert weight factors, then the noise-precision
/// factors using the fresh weight moments.
pub fn update_q_w_and_tau(post: &mut HmePosterior, data: &Dataset, inverse_temperature: f64) -> Result<()> {
    let obs = Observations::new(data);
    q_w(post, &obs, inverse_temperature)?;
    q_tau(post, &obs, inverse_temperature)
}

pub fn update_q_w(post: &mut HmePosterior, data: &Dataset, inverse_temperature: f64) -> Result<()> {
    q_w(post, &Observations::new(data), inverse_temperature)
}

pub fn update_q_tau(post: &mut HmePosterior, data: &Dataset, inverse_temperature: f64) -> Result<()> {
    q_tau(post, &Observations::new(data), inverse_temperature)
}

/// Re-estimates the Gaussian gate weight factors under the sigmoid bound.
pub fn update_q_v(post: &mut HmePosterior, data: &Dataset) -> Result<()> {
    q_v(post, &Observations::new(data))
}

/// `ξ_in = sqrt(x_nᵀ ⟨v_i v_iᵀ⟩ x_n)`.
pub fn update_xi(post: &mut HmePosterior, data: &Dataset) -> Result<XiDiagnostics> {
    xi(post, &Observations::new(data))
}
