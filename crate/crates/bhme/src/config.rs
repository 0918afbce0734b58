//! Flat `key = value` settings files.
//!
//! One assignment per line, `#` starts a comment. Every key is optional;
//! unknown or repeated keys are rejected. See [`KEYS`] for the full list.

use std::collections::BTreeSet;
use std::path::Path;

use bhme_core::engine::{AnnealingMode, FixedPrecisions, TrainConfig};
use bhme_core::predict::{GatingMode, PointMode, PredictOptions};
use bhme_core::synth::ArmGeometry;

use crate::error::{Error, Result};

pub const KEYS: &[&str] = &[
    "prior.a",
    "prior.b",
    "anneal.initial",
    "anneal.decay",
    "anneal.switch_iteration",
    "anneal.terminal",
    "anneal.mode",
    "train.max_iterations",
    "train.min_iterations",
    "train.tolerance",
    "train.restarts",
    "qz.max_sweeps",
    "qz.tolerance",
    "fixed.alpha",
    "fixed.beta",
    "fixed.tau",
    "select.restarts",
    "predict.gating",
    "predict.mode",
    "arm.link1",
    "arm.link2",
    "arm.theta1_min",
    "arm.theta1_max",
    "arm.theta2_min",
    "arm.theta2_max",
];

pub const DEFAULT_SELECT_RESTARTS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub train: TrainConfig,
    /// Restarts when training a single topology; the best bound wins.
    pub train_restarts: usize,
    pub select_restarts: usize,
    pub predict: PredictOptions,
    pub geometry: ArmGeometry,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            train: TrainConfig::default(),
            train_restarts: 1,
            select_restarts: DEFAULT_SELECT_RESTARTS,
            predict: PredictOptions::default(),
            geometry: ArmGeometry::default(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::usage(format!("config line {line}: cannot parse {value:?} for {key}")))
}

fn parse_anneal_mode(v: &str) -> Option<AnnealingMode> {
    match v {
        "literal" => Some(AnnealingMode::Literal),
        "clamped" => Some(AnnealingMode::Clamped),
        _ => None,
    }
}

pub fn parse_gating(v: &str) -> Option<GatingMode> {
    match v {
        "plug-in" => Some(GatingMode::PlugIn),
        "probit" => Some(GatingMode::Probit),
        _ => None,
    }
}

pub fn parse_point_mode(v: &str) -> Option<PointMode> {
    match v {
        "most-probable-expert" => Some(PointMode::MostProbableExpert),
        "mixture-mean" => Some(PointMode::MixtureMean),
        _ => None,
    }
}

impl Settings {
    pub fn parse(text: &str) -> Result<Settings> {
        let mut s = Settings::default();
        let mut seen = BTreeSet::new();
        let mut fixed: [Option<f64>; 3] = [None; 3];
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::usage(format!("config line {line}: expected key = value")));
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::usage(format!("config line {line}: unknown key {key:?}")));
            }
            if !seen.insert(key.to_string()) {
                return Err(Error::usage(format!("config line {line}: {key} given twice")));
            }
            let t = &mut s.train;
            let g = &mut s.geometry;
            match key {
                "prior.a" => t.priors.gamma_shape = parse_value(key, value, line)?,
                "prior.b" => t.priors.gamma_rate = parse_value(key, value, line)?,
                "anneal.initial" => t.annealing.initial = parse_value(key, value, line)?,
                "anneal.decay" => t.annealing.decay = parse_value(key, value, line)?,
                "anneal.switch_iteration" => t.annealing.switch_iteration = parse_value(key, value, line)?,
                "anneal.terminal" => t.annealing.terminal = parse_value(key, value, line)?,
                "anneal.mode" => {
                    t.annealing.mode = parse_anneal_mode(value).ok_or_else(|| {
                        Error::usage(format!("config line {line}: anneal.mode is literal or clamped, got {value:?}"))
                    })?
                }
                "train.max_iterations" => t.max_iterations = parse_value(key, value, line)?,
                "train.min_iterations" => t.min_iterations = parse_value(key, value, line)?,
                "train.tolerance" => t.tolerance = parse_value(key, value, line)?,
                "train.restarts" => s.train_restarts = parse_value(key, value, line)?,
                "qz.max_sweeps" => t.qz.max_sweeps = parse_value(key, value, line)?,
                "qz.tolerance" => t.qz.tolerance = parse_value(key, value, line)?,
                "fixed.alpha" => fixed[0] = Some(parse_value(key, value, line)?),
                "fixed.beta" => fixed[1] = Some(parse_value(key, value, line)?),
                "fixed.tau" => fixed[2] = Some(parse_value(key, value, line)?),
                "select.restarts" => s.select_restarts = parse_value(key, value, line)?,
                "predict.gating" => {
                    s.predict.gating = parse_gating(value).ok_or_else(|| {
                        Error::usage(format!("config line {line}: predict.gating is plug-in or probit, got {value:?}"))
                    })?
                }
                "predict.mode" => {
                    s.predict.point = parse_point_mode(value).ok_or_else(|| {
                        Error::usage(format!(
                            "config line {line}: predict.mode is most-probable-expert or mixture-mean, got {value:?}"
                        ))
                    })?
                }
                "arm.link1" => g.link1 = parse_value(key, value, line)?,
                "arm.link2" => g.link2 = parse_value(key, value, line)?,
                "arm.theta1_min" => g.theta1_range.0 = parse_value(key, value, line)?,
                "arm.theta1_max" => g.theta1_range.1 = parse_value(key, value, line)?,
                "arm.theta2_min" => g.theta2_range.0 = parse_value(key, value, line)?,
                "arm.theta2_max" => g.theta2_range.1 = parse_value(key, value, line)?,
                _ => unreachable!("key list and match arms agree"),
            }
        }
        s.train.fixed_precisions = match fixed {
            [None, None, None] => None,
            [Some(alpha), Some(beta), Some(tau)] => Some(FixedPrecisions { alpha, beta, tau }),
            _ => return Err(Error::usage("fixed.alpha, fixed.beta and fixed.tau must be given together")),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Settings::parse(&text).map_err(|e| Error { message: format!("{}: {}", path.display(), e.message), ..e })
    }

    /// Defaults when no path is given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Settings> {
        path.map_or_else(|| Ok(Settings::default()), Settings::load)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate().map_err(|e| Error::usage(e.to_string()))?;
        self.geometry.validate().map_err(|e| Error::usage(e.to_string()))?;
        if self.train_restarts == 0 || self.select_restarts == 0 {
            return Err(Error::usage("restart counts must be positive"));
        }
        if let Some(f) = self.train.fixed_precisions {
            if ![f.alpha, f.beta, f.tau].iter().all(|v| *v > 0.0 && v.is_finite()) {
                return Err(Error::usage("fixed precisions must be positive and finite"));
            }
        }
        Ok(())
    }
}
