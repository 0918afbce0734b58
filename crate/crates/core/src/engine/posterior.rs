use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::factors::{spd_inverse, ExpertFactor, GaussianFactor, PrecisionFactor};
use crate::dataset::Dataset;
use crate::error::{HmeError, Result};
use crate::math::{sigmoid, sigmoid_pair};
use crate::model::PriorConfig;
use crate::topology::{Child, TreeTopology};

/// Column-per-point copies of the dataset used by the update loops.
#[derive(Clone, Debug)]
pub(crate) struct Observations {
    x: Vec<f64>,
    t: Vec<f64>,
    p: usize,
    d: usize,
    n: usize,
}

impl Observations {
    pub(crate) fn new(data: &Dataset) -> Self {
        let p = data.input_dim();
        let d = data.target_dim();
        let n = data.len();
        let x = data.inputs().transpose().as_slice().to_vec();
        let t = data.targets().transpose().as_slice().to_vec();
        Observations { x, t, p, d, n }
    }

    #[inline]
    pub(crate) fn x(&self, n: usize) -> &[f64] {
        &self.x[n * self.p..(n + 1) * self.p]
    }

    #[inline]
    pub(crate) fn t(&self, n: usize) -> &[f64] {
        &self.t[n * self.d..(n + 1) * self.d]
    }

    pub(crate) fn len(&self) -> usize {
        self.n
    }

    pub(crate) fn input_dim(&self) -> usize {
        self.p
    }

    pub(crate) fn target_dim(&self) -> usize {
        self.d
    }
}

/// Posterior switch probabilities of every gate for every point, stored as
/// logits `h_in`, and the implied expert responsibilities `E[ζ_jn]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Responsibilities {
    /// `N × (M−1)`.
    pub gate_logit: DMatrix<f64>,
    /// `N × M`.
    pub expert_resp: DMatrix<f64>,
}

impl Responsibilities {
    pub fn gate_prob(&self, n: usize, gate: usize) -> f64 {
        sigmoid(self.gate_logit[(n, gate)])
    }

    /// Rebuilds the responsibilities from stored gate logits, `N × (M−1)`.
    pub fn from_logits(tree: &TreeTopology, gate_logit: DMatrix<f64>) -> Result<Self> {
        if gate_logit.ncols() != tree.num_gates() {
            return Err(HmeError::Dimension(format!(
                "{} logit columns for a tree with {} gates",
                gate_logit.ncols(),
                tree.num_gates()
            )));
        }
        let n = gate_logit.nrows();
        let mut r = Responsibilities { gate_logit, expert_resp: DMatrix::zeros(n, tree.num_experts()) };
        for row in 0..n {
            r.refresh_expert_row(tree, row);
        }
        Ok(r)
    }

    pub(crate) fn uniform(tree: &TreeTopology, n: usize) -> Self {
        let mut r = Responsibilities {
            gate_logit: DMatrix::zeros(n, tree.num_gates()),
            expert_resp: DMatrix::zeros(n, tree.num_experts()),
        };
        for row in 0..n {
            r.refresh_expert_row(tree, row);
        }
        r
    }

    /// Recomputes `E[ζ_jn]` for one point as path products.
    pub(crate) fn refresh_expert_row(&mut self, tree: &TreeTopology, n: usize) {
        let pairs: Vec<(f64, f64)> = (0..tree.num_gates()).map(|i| sigmoid_pair(self.gate_logit[(n, i)])).collect();
        let mut reach = alloc::vec![0.0; tree.num_gates()];
        self.set_expert_row(tree, n, &pairs, &mut reach);
    }

    /// Same as [`Self::refresh_expert_row`] from precomputed `(σ(h), σ(−h))`
    /// pairs; `reach` is scratch space of length `M − 1`.
    pub(crate) fn set_expert_row(&mut self, tree: &TreeTopology, n: usize, pairs: &[(f64, f64)], reach: &mut [f64]) {
        if tree.num_gates() == 0 {
            self.expert_resp[(n, 0)] = 1.0;
            return;
        }
        // preorder: a parent is always visited before its children
        for (i, node) in tree.gates().iter().enumerate() {
            let here = if i == 0 { 1.0 } else { reach[i] };
            for (child, p) in [(node.left, pairs[i].0), (node.right, pairs[i].1)] {
                match child {
                    Child::Gate(k) => reach[k] = here * p,
                    Child::Expert(j) => self.expert_resp[(n, j)] = (here * p).clamp(1e-300, 1.0),
                }
            }
        }
    }
}

/// Variational parameters `ξ_in ≥ 0`, `N × (M−1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct XiParams {
    pub values: DMatrix<f64>,
}

/// Point values for α, β and τ when they are held fixed instead of learned.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPrecisions {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
}

/// The factorized posterior `q_W q_τ q_Z q_v q_α q_β` plus the ξ parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct HmePosterior {
    pub tree: TreeTopology,
    pub priors: PriorConfig,
    pub gates: Vec<GaussianFactor>,
    pub experts: Vec<ExpertFactor>,
    pub tau: Vec<PrecisionFactor>,
    pub alpha: Vec<PrecisionFactor>,
    pub beta: Vec<PrecisionFactor>,
    pub resp: Responsibilities,
    pub xi: XiParams,
}

impl HmePosterior {
    /// Every factor at its prior, ξ = 1 and uniform gate posteriors.
    pub fn from_prior(
        tree: &TreeTopology,
        input_dim: usize,
        target_dim: usize,
        num_points: usize,
        priors: PriorConfig,
        fixed: Option<FixedPrecisions>,
    ) -> Result<HmePosterior> {
        priors.validate()?;
        if input_dim == 0 || target_dim == 0 {
            return Err(HmeError::InvalidArgument("input and target dimensions must be positive".into()));
        }
        let m = tree.num_experts();
        let g = tree.num_gates();
        let (alpha, beta, tau) = match fixed {
            Some(f) => (
                PrecisionFactor::Fixed(f.alpha),
                PrecisionFactor::Fixed(f.beta),
                PrecisionFactor::Fixed(f.tau),
            ),
            None => {
                let p = PrecisionFactor::prior(&priors);
                (p, p, p)
            }
        };
        for (f, name) in [(alpha, "alpha"), (beta, "beta"), (tau, "tau")] {
            f.validate(name)?;
        }
        let eye = DMatrix::<f64>::identity(input_dim, input_dim);
        Ok(HmePosterior {
            tree: tree.clone(),
            priors,
            gates: (0..g)
                .map(|_| GaussianFactor {
                    mean: DVector::zeros(input_dim),
                    covariance: &eye / beta.mean(),
                })
                .collect(),
            experts: (0..m)
                .map(|_| ExpertFactor {
                    mean: DMatrix::zeros(target_dim, input_dim),
                    covariance: &eye / alpha.mean(),
                })
                .collect(),
            tau: alloc::vec![tau; m],
            alpha: alloc::vec![alpha; m],
            beta: alloc::vec![beta; g],
            resp: Responsibilities::uniform(tree, num_points),
            xi: XiParams { values: DMatrix::from_element(num_points, g, 1.0) },
        })
    }

    /// Random starting point: gate means drawn from `N(0, 0.1²)`, expert
    /// means from ridge least-squares fits to randomly anchored local
    /// neighbourhoods of the data (in joint input/target space). Learned
    /// τ and α factors then take one update from that fit, so the first
    /// sweep does not shrink the experts toward the prior mean.
    pub fn initialize<R: Rng + ?Sized>(
        tree: &TreeTopology,
        data: &Dataset,
        priors: PriorConfig,
        fixed: Option<FixedPrecisions>,
        rng: &mut R,
    ) -> Result<HmePosterior> {
        let mut post = HmePosterior::from_prior(
            tree,
            data.input_dim(),
            data.target_dim(),
            data.len(),
            priors,
            fixed,
        )?;
        let normal = Normal::new(0.0, 0.1).expect("valid normal");
        for gate in &mut post.gates {
            for v in gate.mean.iter_mut() {
                *v = normal.sample(rng);
            }
        }
        if data.is_empty() {
            return Ok(post);
        }
        let obs = Observations::new(data);
        let neighbours = (data.len() / tree.num_experts()).max(2 * data.input_dim()).min(data.len());
        for expert in &mut post.experts {
            let anchor = rng.random_range(0..data.len());
            let subset = nearest_rows(&obs, anchor, neighbours);
            expert.mean = local_least_squares(&obs, &subset)?;
        }
        super::updates::q_tau(&mut post, &obs, 1.0)?;
        super::updates::update_alpha(&mut post);
        Ok(post)
    }

    pub fn num_points(&self) -> usize {
        self.resp.expert_resp.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.experts.first().map_or_else(
            || self.gates.first().map_or(0, |g| g.mean.len()),
            |e| e.mean.ncols(),
        )
    }

    pub fn target_dim(&self) -> usize {
        self.experts.first().map_or(0, |e| e.mean.nrows())
    }

    /// Checks the structural invariants of all factors.
    pub fn validate(&self) -> Result<()> {
        let (m, g) = (self.tree.num_experts(), self.tree.num_gates());
        if self.experts.len() != m || self.tau.len() != m || self.alpha.len() != m {
            return Err(HmeError::Dimension("expert factor count does not match the tree".into()));
        }
        if self.gates.len() != g || self.beta.len() != g {
            return Err(HmeError::Dimension("gate factor count does not match the tree".into()));
        }
        if self.resp.gate_logit.ncols() != g
            || self.resp.expert_resp.ncols() != m
            || self.xi.values.ncols() != g
            || self.xi.values.nrows() != self.num_points()
            || self.resp.gate_logit.nrows() != self.num_points()
        {
            return Err(HmeError::Dimension("responsibility or ξ shape does not match".into()));
        }
        for f in self.tau.iter().chain(&self.alpha).chain(&self.beta) {
            f.validate("precision")?;
        }
        for e in &self.experts {
            super::factors::cholesky(e.covariance.clone(), "expert covariance")?;
        }
        for gf in &self.gates {
            super::factors::cholesky(gf.covariance.clone(), "gate covariance")?;
        }
        Ok(())
    }

    pub(crate) fn check_data(&self, obs: &Observations) -> Result<()> {
        if obs.len() != self.num_points() {
            return Err(HmeError::Dimension(format!(
                "posterior holds {} points, dataset has {}",
                self.num_points(),
                obs.len()
            )));
        }
        if obs.input_dim() != self.input_dim() || obs.target_dim() != self.target_dim() {
            return Err(HmeError::Dimension(format!(
                "posterior is {}→{}, dataset is {}→{}",
                self.input_dim(),
                self.target_dim(),
                obs.input_dim(),
                obs.target_dim()
            )));
        }
        Ok(())
    }
}

fn nearest_rows(obs: &Observations, anchor: usize, count: usize) -> Vec<usize> {
    let (xa, ta) = (obs.x(anchor), obs.t(anchor));
    let mut dist: Vec<(f64, usize)> = (0..obs.len())
        .map(|n| {
            let dx: f64 = obs.x(n).iter().zip(xa).map(|(a, b)| (a - b) * (a - b)).sum();
            let dt: f64 = obs.t(n).iter().zip(ta).map(|(a, b)| (a - b) * (a - b)).sum();
            (dx + dt, n)
        })
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    dist.into_iter().take(count).map(|(_, n)| n).collect()
}

fn local_least_squares(obs: &Observations, rows: &[usize]) -> Result<DMatrix<f64>> {
    let (p, d) = (obs.input_dim(), obs.target_dim());
    let mut gram = DMatrix::<f64>::identity(p, p) * 1e-6;
    let mut cross = DMatrix::<f64>::zeros(d, p);
    for &n in rows {
        let (x, t) = (obs.x(n), obs.t(n));
        for r in 0..p {
            for c in 0..p {
                gram[(r, c)] += x[r] * x[c];
            }
            for k in 0..d {
                cross[(k, r)] += t[k] * x[r];
            }
        }
    }
    Ok(cross * spd_inverse(gram, "initial least-squares Gram matrix")?)
}
