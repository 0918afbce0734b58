//! The HME conditional model: linear-Gaussian experts, logistic gates and
//! the input-dependent mixture they define.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{HmeError, Result};
use crate::math::{log_sigmoid, log_sum_exp, sigmoid, LN_2PI};
use crate::topology::{Branch, TreeTopology};

/// Linear-Gaussian expert `N(t | W x, τ⁻¹ I)`. The last input column is the bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpertParams {
    /// `target_dim × input_dim`.
    pub weights: DMatrix<f64>,
    pub precision: f64,
}

/// Logistic gate: `P(z = 1 | x) = σ(vᵀx)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GateParams {
    pub weights: DVector<f64>,
}

/// Shape `a` and rate `b` shared by the Gamma priors on α, β and τ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub gamma_shape: f64,
    pub gamma_rate: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig { gamma_shape: 1e-2, gamma_rate: 1e-4 }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma_shape > 0.0 && self.gamma_rate > 0.0 {
            Ok(())
        } else {
            Err(HmeError::InvalidArgument(format!(
                "gamma prior needs positive shape and rate, got ({}, {})",
                self.gamma_shape, self.gamma_rate
            )))
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn expert_residual_sq(t: &[f64], x: &[f64], weights: &DMatrix<f64>) -> f64 {
    (0..weights.nrows())
        .map(|k| {
            let pred: f64 = (0..weights.ncols()).map(|c| weights[(k, c)] * x[c]).sum();
            let r = t[k] - pred;
            r * r
        })
        .sum()
}

fn check_expert(t: &[f64], x: &[f64], expert: &ExpertParams) -> Result<()> {
    if expert.weights.nrows() != t.len() || expert.weights.ncols() != x.len() {
        return Err(HmeError::Dimension(format!(
            "expert weights are {}×{}, target has {} entries and input {}",
            expert.weights.nrows(),
            expert.weights.ncols(),
            t.len(),
            x.len()
        )));
    }
    Ok(())
}

/// `ln N(t | W x, τ⁻¹ I)`.
pub fn expert_log_density(t: &[f64], x: &[f64], expert: &ExpertParams) -> Result<f64> {
    if !(expert.precision > 0.0) {
        return Err(HmeError::Domain(format!(
            "expert precision must be positive, got {}",
            expert.precision
        )));
    }
    check_expert(t, x, expert)?;
    let d = t.len() as f64;
    let tau = expert.precision;
    Ok(0.5 * d * (libm::log(tau) - LN_2PI) - 0.5 * tau * expert_residual_sq(t, x, &expert.weights))
}

/// `z ln σ(vᵀx) + (1 − z) ln(1 − σ(vᵀx))`.
pub fn gate_log_probability(z: bool, x: &[f64], gate: &GateParams) -> Result<f64> {
    if gate.weights.len() != x.len() {
        return Err(HmeError::Dimension(format!(
            "gate has {} weights, input has {} entries",
            gate.weights.len(),
            x.len()
        )));
    }
    let a = dot(gate.weights.as_slice(), x);
    Ok(if z { log_sigmoid(a) } else { log_sigmoid(-a) })
}

fn check_gates(tree: &TreeTopology, gates: &[GateParams]) -> Result<()> {
    if gates.len() != tree.num_gates() {
        return Err(HmeError::Dimension(format!(
            "tree has {} gates but {} gate parameter sets were given",
            tree.num_gates(),
            gates.len()
        )));
    }
    Ok(())
}

/// `ln π_j(x)` for every expert, from gate activations `a_i = vᵢᵀx`.
pub(crate) fn log_mixing_from_activations(tree: &TreeTopology, activations: &[f64]) -> Vec<f64> {
    (0..tree.num_experts())
        .map(|j| {
            tree.path(j)
                .iter()
                .map(|step| match step.branch {
                    Branch::Left => log_sigmoid(activations[step.gate]),
                    Branch::Right => log_sigmoid(-activations[step.gate]),
                })
                .sum()
        })
        .collect()
}

fn gate_activations(x: &[f64], gates: &[GateParams]) -> Result<Vec<f64>> {
    gates
        .iter()
        .map(|g| {
            if g.weights.len() != x.len() {
                Err(HmeError::Dimension(format!(
                    "gate has {} weights, input has {} entries",
                    g.weights.len(),
                    x.len()
                )))
            } else {
                Ok(dot(g.weights.as_slice(), x))
            }
        })
        .collect()
}

/// Input-dependent mixing coefficients π_j(x).
pub fn mixing_coefficients(
    x: &[f64],
    tree: &TreeTopology,
    gates: &[GateParams],
) -> Result<Vec<f64>> {
    check_gates(tree, gates)?;
    let activations = gate_activations(x, gates)?;
    Ok(log_mixing_from_activations(tree, &activations)
        .into_iter()
        .map(libm::exp)
        .collect())
}

/// `ln Σ_j π_j(x) N(t | W_j x, τ_j⁻¹ I)`.
pub fn conditional_mixture_log_density(
    t: &[f64],
    x: &[f64],
    tree: &TreeTopology,
    experts: &[ExpertParams],
    gates: &[GateParams],
) -> Result<f64> {
    check_gates(tree, gates)?;
    if experts.len() != tree.num_experts() {
        return Err(HmeError::Dimension(format!(
            "tree has {} experts but {} expert parameter sets were given",
            tree.num_experts(),
            experts.len()
        )));
    }
    let activations = gate_activations(x, gates)?;
    let log_pi = log_mixing_from_activations(tree, &activations);
    let terms = experts
        .iter()
        .zip(&log_pi)
        .map(|(e, lp)| Ok(lp + expert_log_density(t, x, e)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(log_sum_exp(&terms))
}

/// One draw from the generative model: every gate is switched, the path is
/// followed down to an expert, and the target is drawn from that expert.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub target: Vec<f64>,
    pub expert: usize,
    pub gates: Vec<bool>,
}

pub fn sample_target<R: Rng + ?Sized>(
    x: &[f64],
    tree: &TreeTopology,
    experts: &[ExpertParams],
    gates: &[GateParams],
    rng: &mut R,
) -> Result<Sample> {
    check_gates(tree, gates)?;
    let activations = gate_activations(x, gates)?;
    let z: Vec<bool> = activations
        .iter()
        .map(|&a| rng.random::<f64>() < sigmoid(a))
        .collect();
    let expert = (0..tree.num_experts())
        .find(|&j| tree.zeta_indicator(&z, j).unwrap_or(false))
        .ok_or_else(|| HmeError::Structural("no expert selected by gate assignment".into()))?;
    let params = &experts[expert];
    if !(params.precision > 0.0) {
        return Err(HmeError::Domain("expert precision must be positive".into()));
    }
    let sd = 1.0 / libm::sqrt(params.precision);
    let w = &params.weights;
    let target = (0..w.nrows())
        .map(|k| {
            let mean: f64 = (0..w.ncols()).map(|c| w[(k, c)] * x[c]).sum();
            let eps: f64 = StandardNormal.sample(rng);
            mean + sd * eps
        })
        .collect();
    Ok(Sample { target, expert, gates: z })
}

/// `Σ_n ln p(t_n | x_n)` under fixed parameters.
pub fn log_likelihood(
    data: &Dataset,
    tree: &TreeTopology,
    experts: &[ExpertParams],
    gates: &[GateParams],
) -> Result<f64> {
    if data.len() == 0 {
        return Err(HmeError::InvalidArgument("log-likelihood of an empty dataset".into()));
    }
    let mut total = 0.0;
    for n in 0..data.len() {
        total += conditional_mixture_log_density(
            &data.target_row(n),
            &data.input_row(n),
            tree,
            experts,
            gates,
        )?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::enumerate_topologies;
    use alloc::vec;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn expert(rows: usize, cols: usize, vals: &[f64], tau: f64) -> ExpertParams {
        ExpertParams { weights: DMatrix::from_row_slice(rows, cols, vals), precision: tau }
    }

    fn gate(v: &[f64]) -> GateParams {
        GateParams { weights: DVector::from_column_slice(v) }
    }

    fn random_params(
        rng: &mut ChaCha8Rng,
        tree: &TreeTopology,
        p: usize,
        d: usize,
    ) -> (Vec<ExpertParams>, Vec<GateParams>) {
        let experts = (0..tree.num_experts())
            .map(|_| ExpertParams {
                weights: DMatrix::from_fn(d, p, |_, _| rng.random_range(-2.0..2.0)),
                precision: rng.random_range(0.5..4.0),
            })
            .collect();
        let gates = (0..tree.num_gates())
            .map(|_| GateParams { weights: DVector::from_fn(p, |_, _| rng.random_range(-3.0..3.0)) })
            .collect();
        (experts, gates)
    }

    // Σ over every gate assignment of ∏ p(z_i) · N(t | expert selected by z).
    fn enumerated_density(
        t: &[f64],
        x: &[f64],
        tree: &TreeTopology,
        experts: &[ExpertParams],
        gates: &[GateParams],
    ) -> (f64, Vec<f64>) {
        let g = tree.num_gates();
        let mut total = 0.0;
        let mut mix = vec![0.0; tree.num_experts()];
        for bits in 0u32..(1 << g) {
            let z: Vec<bool> = (0..g).map(|i| bits >> i & 1 == 1).collect();
            let mut pz = 1.0;
            for i in 0..g {
                let s = 1.0 / (1.0 + libm::exp(-dot(gates[i].weights.as_slice(), x)));
                pz *= if z[i] { s } else { 1.0 - s };
            }
            for j in 0..tree.num_experts() {
                if tree.zeta_indicator(&z, j).unwrap() {
                    mix[j] += pz;
                    total += pz * libm::exp(expert_log_density(t, x, &experts[j]).unwrap());
                }
            }
        }
        (libm::log(total), mix)
    }

    #[test]
    fn expert_density_examples() {
        let e = expert(1, 2, &[2.0, 1.0], 1.0);
        let x = [1.0, 1.0];
        assert_abs_diff_eq!(expert_log_density(&[3.0], &x, &e).unwrap(), -0.918_938_533_204_672_8, epsilon = 1e-12);
        assert_abs_diff_eq!(
            expert_log_density(&[4.0], &x, &e).unwrap(),
            -0.918_938_533_204_672_8 - 0.5,
            epsilon = 1e-12
        );
        // D = 2, τ = 4, squared residual 0.25
        let e2 = expert(2, 1, &[0.0, 0.0], 4.0);
        let t = [0.3, 0.4];
        let expected = (libm::log(4.0) - LN_2PI) - 0.5;
        assert_abs_diff_eq!(expert_log_density(&t, &[1.0], &e2).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, -0.951_582_705_289_454_8, epsilon = 1e-12);
        let bad = expert(1, 1, &[0.0], 0.0);
        assert!(matches!(expert_log_density(&[0.0], &[1.0], &bad), Err(HmeError::Domain(_))));
        assert!(matches!(expert_log_density(&[0.0, 1.0], &[1.0], &e), Err(HmeError::Dimension(_))));
    }

    #[test]
    fn gate_probability_examples() {
        let x = [0.7, 1.0];
        let zero = gate(&[0.0, 0.0]);
        assert_abs_diff_eq!(gate_log_probability(true, &x, &zero).unwrap(), libm::log(0.5), epsilon = 1e-15);
        assert_abs_diff_eq!(gate_log_probability(false, &x, &zero).unwrap(), libm::log(0.5), epsilon = 1e-15);
        let up = gate(&[1.0, 0.3]);
        let down = gate(&[-1.0, -0.3]);
        assert_abs_diff_eq!(
            gate_log_probability(true, &x, &up).unwrap(),
            gate_log_probability(false, &x, &down).unwrap(),
            epsilon = 1e-15
        );
        let two = gate(&[2.0]);
        assert_abs_diff_eq!(gate_log_probability(true, &[1.0], &two).unwrap(), -0.126_928_011_042_972_1, epsilon = 1e-12);
    }

    #[test]
    fn gate_probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let g = gate(&[rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0)]);
            let x = [rng.random_range(-2.0..2.0), 1.0];
            let s = libm::exp(gate_log_probability(true, &x, &g).unwrap())
                + libm::exp(gate_log_probability(false, &x, &g).unwrap());
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mixing_examples() {
        let t = TreeTopology::parse("(e,(e,e))").unwrap();
        let gates = vec![gate(&[0.0, 0.0]), gate(&[0.0, 0.0])];
        let pi = mixing_coefficients(&[0.3, 1.0], &t, &gates).unwrap();
        assert_abs_diff_eq!(pi[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(pi[1], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(pi[2], 0.25, epsilon = 1e-15);
        let single = mixing_coefficients(&[1.0], &TreeTopology::single_expert(), &[]).unwrap();
        assert_eq!(single, vec![1.0]);
        assert!(mixing_coefficients(&[1.0], &t, &gates[..1]).is_err());
    }

    #[test]
    fn mixing_and_density_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in 1..=5 {
            for tree in enumerate_topologies(m).unwrap() {
                for _ in 0..20 {
                    let (experts, gates) = random_params(&mut rng, &tree, 3, 2);
                    let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0];
                    let t = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                    let (log_dens, mix) = enumerated_density(&t, &x, &tree, &experts, &gates);
                    let pi = mixing_coefficients(&x, &tree, &gates).unwrap();
                    for j in 0..m {
                        assert_abs_diff_eq!(pi[j], mix[j], epsilon = 1e-12);
                    }
                    let got = conditional_mixture_log_density(&t, &x, &tree, &experts, &gates).unwrap();
                    assert_abs_diff_eq!(got, log_dens, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn mixing_sums_to_one_on_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trees: Vec<TreeTopology> = (1..=8).flat_map(|m| enumerate_topologies(m).unwrap()).collect();
        for k in 0..10_000 {
            let tree = &trees[k % trees.len()];
            let (_, gates) = random_params(&mut rng, tree, 2, 1);
            let x = [rng.random_range(-3.0..3.0), 1.0];
            let s: f64 = mixing_coefficients(&x, tree, &gates).unwrap().iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mixture_special_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let single = TreeTopology::single_expert();
        let (experts, _) = random_params(&mut rng, &single, 2, 1);
        let x = [0.4, 1.0];
        assert_abs_diff_eq!(
            conditional_mixture_log_density(&[0.2], &x, &single, &experts, &[]).unwrap(),
            expert_log_density(&[0.2], &x, &experts[0]).unwrap(),
            epsilon = 1e-14
        );
        let tree = TreeTopology::parse("((e,e),(e,e))").unwrap();
        let (_, gates) = random_params(&mut rng, &tree, 2, 1);
        let same = vec![experts[0].clone(); 4];
        assert_abs_diff_eq!(
            conditional_mixture_log_density(&[0.2], &x, &tree, &same, &gates).unwrap(),
            expert_log_density(&[0.2], &x, &experts[0]).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn sampler_frequencies_match_mixing() {
        let tree = TreeTopology::parse("(e,(e,e))").unwrap();
        let experts = vec![expert(1, 1, &[0.0], 1.0); 3];
        let gates = vec![gate(&[0.0]), gate(&[0.0])];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut counts = [0usize; 3];
        let draws = 100_000;
        for _ in 0..draws {
            let s = sample_target(&[1.0], &tree, &experts, &gates, &mut rng).unwrap();
            assert!(tree.zeta_indicator(&s.gates, s.expert).unwrap());
            counts[s.expert] += 1;
        }
        let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / draws as f64).collect();
        for (f, want) in freq.iter().zip([0.5, 0.25, 0.25]) {
            assert!((f - want).abs() < 0.01, "{freq:?}");
        }
    }

    #[test]
    fn saturated_gates_and_sharp_experts() {
        let tree = TreeTopology::parse("((e,e),(e,e))").unwrap();
        let experts: Vec<ExpertParams> =
            (0..4).map(|j| expert(1, 1, &[j as f64], 1e12)).collect();
        let gates = vec![gate(&[1e3]); 3];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let s = sample_target(&[1.0], &tree, &experts, &gates, &mut rng).unwrap();
            assert_eq!(s.expert, 0);
            assert!(s.target[0].abs() < 1e-4);
        }
    }

    #[test]
    fn likelihood_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let tree = TreeTopology::parse("(e,(e,e))").unwrap();
        let (experts, gates) = random_params(&mut rng, &tree, 2, 1);
        let xs: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ts: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data = Dataset::from_columns(&[xs.clone()], &[ts.clone()], true).unwrap();
        let ll = log_likelihood(&data, &tree, &experts, &gates).unwrap();
        let naive: f64 = (0..10)
            .map(|n| enumerated_density(&[ts[n]], &[xs[n], 1.0], &tree, &experts, &gates).0)
            .sum();
        assert_abs_diff_eq!(ll, naive, epsilon = 1e-10);

        let doubled_x: Vec<f64> = xs.iter().chain(&xs).copied().collect();
        let doubled_t: Vec<f64> = ts.iter().chain(&ts).copied().collect();
        let doubled = Dataset::from_columns(&[doubled_x], &[doubled_t], true).unwrap();
        assert_abs_diff_eq!(
            log_likelihood(&doubled, &tree, &experts, &gates).unwrap(),
            2.0 * ll,
            epsilon = 1e-10
        );

        let one = Dataset::from_columns(&[vec![xs[0]]], &[vec![ts[0]]], true).unwrap();
        assert_abs_diff_eq!(
            log_likelihood(&one, &tree, &experts, &gates).unwrap(),
            conditional_mixture_log_density(&[ts[0]], &[xs[0], 1.0], &tree, &experts, &gates).unwrap(),
            epsilon = 1e-14
        );
        let empty = Dataset::from_columns(&[vec![]], &[vec![]], true).unwrap();
        assert!(matches!(
            log_likelihood(&empty, &tree, &experts, &gates),
            Err(HmeError::InvalidArgument(_))
        ));
    }
}
