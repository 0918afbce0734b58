//! Versioned JSON document for a trained posterior.

use std::path::Path;

use bhme_core::engine::{
    ExpertFactor, GaussianFactor, HmePosterior, PrecisionFactor, Responsibilities, TrainConfig, TrainingTrace,
    XiParams,
};
use bhme_core::predict::{predict, predictive_log_density, PredictOptions, Prediction};
use bhme_core::{Dataset, Standardization, TreeTopology};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateDoc {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub beta: PrecisionFactor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertDoc {
    /// One row per target dimension.
    pub mean: Vec<Vec<f64>>,
    /// Shared by every row of `mean`.
    pub covariance: Vec<Vec<f64>>,
    pub tau: PrecisionFactor,
    pub alpha: PrecisionFactor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub topology: TreeTopology,
    /// Raw input columns, without the bias.
    pub input_names: Vec<String>,
    pub target_names: Vec<String>,
    pub has_bias: bool,
    pub standardization: Option<Standardization>,
    /// Per-target variance of the training targets in file units.
    pub training_target_variance: Vec<f64>,
    pub seed: u64,
    pub config: TrainConfig,
    pub gates: Vec<GateDoc>,
    pub experts: Vec<ExpertDoc>,
    /// `N × (M−1)` gate logits of the training points.
    pub gate_logits: Vec<Vec<f64>>,
    /// `N × (M−1)`.
    pub xi: Vec<Vec<f64>>,
    pub trace: TrainingTrace,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::data(format!("model file: {what} rows must have {ncols} entries")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

impl ModelDocument {
    /// `data` is the dataset the posterior was trained on, possibly
    /// standardized; variances are reported in file units either way.
    pub fn new(post: &HmePosterior, trace: &TrainingTrace, data: &Dataset, config: &TrainConfig, seed: u64) -> Self {
        let variance = match data.standardization() {
            Some(s) => data
                .target_variances()
                .iter()
                .zip(&s.target_scale)
                .map(|(v, sc)| v * sc * sc)
                .collect(),
            None => data.target_variances(),
        };
        ModelDocument {
            schema_version: MODEL_SCHEMA_VERSION,
            topology: post.tree.clone(),
            input_names: data.raw_input_names().to_vec(),
            target_names: data.target_names().to_vec(),
            has_bias: data.has_bias(),
            standardization: data.standardization().cloned(),
            training_target_variance: variance,
            seed,
            config: config.clone(),
            gates: post
                .gates
                .iter()
                .zip(&post.beta)
                .map(|(g, b)| GateDoc { mean: g.mean.iter().copied().collect(), covariance: rows_of(&g.covariance), beta: *b })
                .collect(),
            experts: post
                .experts
                .iter()
                .zip(post.tau.iter().zip(&post.alpha))
                .map(|(e, (t, a))| ExpertDoc {
                    mean: rows_of(&e.mean),
                    covariance: rows_of(&e.covariance),
                    tau: *t,
                    alpha: *a,
                })
                .collect(),
            gate_logits: rows_of(&post.resp.gate_logit),
            xi: rows_of(&post.xi.values),
            trace: trace.clone(),
        }
    }

    /// Length of an augmented input vector.
    pub fn input_dim(&self) -> usize {
        self.input_names.len() + usize::from(self.has_bias)
    }

    pub fn posterior(&self) -> Result<HmePosterior> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::data(format!(
                "model file has schema version {}, this build reads {MODEL_SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        let p = self.input_dim();
        let d = self.target_names.len();
        let g = self.topology.num_gates();
        let gates = self
            .gates
            .iter()
            .map(|gd| {
                if gd.mean.len() != p {
                    return Err(Error::data(format!("model file: gate mean must have {p} entries")));
                }
                Ok(GaussianFactor {
                    mean: DVector::from_vec(gd.mean.clone()),
                    covariance: matrix_of(&gd.covariance, p, "gate covariance")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let experts = self
            .experts
            .iter()
            .map(|ed| {
                let mean = matrix_of(&ed.mean, p, "expert mean")?;
                if mean.nrows() != d {
                    return Err(Error::data(format!("model file: expert mean must have {d} rows")));
                }
                Ok(ExpertFactor { mean, covariance: matrix_of(&ed.covariance, p, "expert covariance")? })
            })
            .collect::<Result<Vec<_>>>()?;
        let logits = matrix_of(&self.gate_logits, g, "gate logit")?;
        let post = HmePosterior {
            tree: self.topology.clone(),
            priors: self.config.priors,
            gates,
            experts,
            tau: self.experts.iter().map(|e| e.tau).collect(),
            alpha: self.experts.iter().map(|e| e.alpha).collect(),
            beta: self.gates.iter().map(|g| g.beta).collect(),
            resp: Responsibilities::from_logits(&self.topology, logits)?,
            xi: XiParams { values: matrix_of(&self.xi, g, "xi")? },
        };
        post.validate()?;
        Ok(post)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::numerical(format!("cannot serialize model: {e}")))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ModelDocument> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }
}

/// A model document together with its rebuilt posterior, predicting in
/// file units.
#[derive(Clone, Debug)]
pub struct LoadedModel {
    pub doc: ModelDocument,
    pub post: HmePosterior,
}

impl LoadedModel {
    pub fn open(path: &Path) -> Result<LoadedModel> {
        let doc = ModelDocument::load(path)?;
        let post = doc.posterior().map_err(|e| Error { message: format!("{}: {}", path.display(), e.message), ..e })?;
        Ok(LoadedModel { doc, post })
    }

    /// Standardizes a raw input row and appends the bias.
    pub fn augment(&self, raw: &[f64]) -> Vec<f64> {
        let mut x = raw.to_vec();
        if let Some(s) = &self.doc.standardization {
            s.standardize_input(&mut x);
        }
        if self.doc.has_bias {
            x.push(1.0);
        }
        x
    }

    /// Prediction with the point and the per-expert means in file units.
    pub fn predict_raw(&self, raw: &[f64], opts: PredictOptions) -> Result<Prediction> {
        let mut pred = predict(&self.augment(raw), &self.post, opts)?;
        if let Some(s) = &self.doc.standardization {
            s.unstandardize_target(&mut pred.point);
            for mut row in pred.per_expert_means.row_iter_mut() {
                let mut v: Vec<f64> = row.iter().copied().collect();
                s.unstandardize_target(&mut v);
                row.iter_mut().zip(v).for_each(|(dst, src)| *dst = src);
            }
        }
        Ok(pred)
    }

    /// Predictive log density of a target in file units.
    pub fn log_density_raw(&self, t_raw: &[f64], x_raw: &[f64]) -> Result<f64> {
        let x = self.augment(x_raw);
        match &self.doc.standardization {
            None => Ok(predictive_log_density(t_raw, &x, &self.post)?),
            Some(s) => {
                let t: Vec<f64> = t_raw
                    .iter()
                    .zip(s.target_mean.iter().zip(&s.target_scale))
                    .map(|(v, (m, sc))| (v - m) / sc)
                    .collect();
                let jacobian: f64 = s.target_scale.iter().map(|sc| sc.ln()).sum();
                Ok(predictive_log_density(&t, &x, &self.post)? - jacobian)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bhme_core::engine::{train, AnnealingSchedule};
    use bhme_core::synth::gen_toy;

    fn trained() -> (HmePosterior, TrainingTrace, Dataset, TrainConfig) {
        let data = gen_toy(60, 0.05, 3).unwrap();
        let config = TrainConfig {
            max_iterations: 40,
            annealing: AnnealingSchedule::constant(1.0),
            ..TrainConfig::default()
        };
        let tree = TreeTopology::parse("((e,e),e)").unwrap();
        let (post, trace) = train(&tree, &data, &config, 5).unwrap();
        (post, trace, data, config)
    }

    #[test]
    fn posterior_round_trips_through_json() {
        let (post, trace, data, config) = trained();
        let doc = ModelDocument::new(&post, &trace, &data, &config, 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        doc.save(&path).unwrap();
        let back = ModelDocument::load(&path).unwrap();
        assert_eq!(back, doc);
        let restored = back.posterior().unwrap();
        assert_eq!(restored.gates, post.gates);
        assert_eq!(restored.experts, post.experts);
        assert_eq!(restored.xi, post.xi);
        assert_eq!(restored.resp.gate_logit, post.resp.gate_logit);
        assert!((&restored.resp.expert_resp - &post.resp.expert_resp).amax() < 1e-15);
        assert_eq!(back.training_target_variance, data.target_variances());
    }

    #[test]
    fn standardized_variance_is_in_file_units() {
        let (post, trace, data, config) = trained();
        let (std_data, _) = data.standardize().unwrap();
        let doc = ModelDocument::new(&post, &trace, &std_data, &config, 5);
        let raw = data.target_variances()[0];
        assert!((doc.training_target_variance[0] - raw).abs() < 1e-12 * raw);
        assert!(doc.standardization.is_some());
    }

    #[test]
    fn standardized_model_predicts_in_file_units() {
        let data = gen_toy(80, 0.05, 4).unwrap();
        let (std_data, stats) = data.standardize().unwrap();
        let config = TrainConfig { max_iterations: 60, annealing: AnnealingSchedule::constant(1.0), ..TrainConfig::default() };
        let tree = TreeTopology::parse("(e,e)").unwrap();
        let (post, trace) = train(&tree, &std_data, &config, 2).unwrap();
        let model = LoadedModel { doc: ModelDocument::new(&post, &trace, &std_data, &config, 2), post };
        let raw_x = data.raw_inputs()[(5, 0)];
        let p = model.predict_raw(&[raw_x], PredictOptions::default()).unwrap();
        let direct = predict(&std_data.input_row(5), &model.post, PredictOptions::default()).unwrap();
        let expect = direct.point[0] * stats.target_scale[0] + stats.target_mean[0];
        assert!((p.point[0] - expect).abs() < 1e-12);
        assert!((p.per_expert_means[(p.expert_chosen, 0)] - expect).abs() < 1e-12);

        // density in file units integrates to one
        let (lo, hi, steps) = (-1.0, 2.0, 6000);
        let h = (hi - lo) / steps as f64;
        let mass: f64 = (0..=steps)
            .map(|k| {
                let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
                w * model.log_density_raw(&[lo + h * k as f64], &[raw_x]).unwrap().exp()
            })
            .sum::<f64>()
            * h;
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
    }

    #[test]
    fn wrong_version_and_shapes_are_rejected() {
        let (post, trace, data, config) = trained();
        let mut doc = ModelDocument::new(&post, &trace, &data, &config, 5);
        doc.schema_version = 99;
        assert!(doc.posterior().unwrap_err().message.contains("schema version"));
        doc.schema_version = MODEL_SCHEMA_VERSION;
        doc.gates[0].mean.pop();
        assert_eq!(doc.posterior().unwrap_err().exit_code(), 3);
    }
}
