//! Command-line front end. [`run`] returns the process exit code.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use bhme_core::baseline::{fit_baseline, predict_baseline, FeatureConfig};
use bhme_core::predict::{standardized_mse, GatingMode, PointMode, PredictOptions, Prediction};
use bhme_core::synth::{arm_region, end_effector_error, gen_arm_dataset, gen_toy, ArmGeometry, ArmRegion, TOY_NOISE_SD};
use bhme_core::{Dataset, TreeTopology};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use crate::config::Settings;
use crate::error::{Error, Result};
use crate::model_file::{LoadedModel, ModelDocument};
use crate::parallel::{restarts_parallel, sweep_parallel};
use crate::report::{write_report, write_trace};
use crate::table::{fmt_f64, load_delimited, read_table, save_delimited, write_csv, Schema};

pub const PREDICTIONS_SCHEMA: &str = "bhme-predictions v1";
pub const ERRORS_SCHEMA: &str = "bhme-end-effector v1";
pub const DENSITY_SCHEMA: &str = "bhme-density v1";

/// Slack on the joint-angle ranges when classifying arm positions.
const REGION_TOL: f64 = 1e-9;

#[derive(Parser, Debug)]
#[command(name = "bhme", version, about = "Variational Bayesian hierarchical mixtures of experts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic dataset or an input grid.
    Generate(GenerateArgs),
    /// Train one tree and write the model JSON and its trace CSV.
    Train(TrainArgs),
    /// Train every tree in an expert-count range and rank them by the bound.
    Select(SelectArgs),
    /// Point predictions, chosen expert and mixing coefficients per row.
    Predict(PredictArgs),
    /// Score a model or a predictions file on test data.
    Evaluate(EvaluateArgs),
    /// Fit the ridge least-squares baseline and predict the test file.
    Baseline(BaselineArgs),
    /// Predictive density on an (input, target) grid for one-dimensional models.
    Density(DensityArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DataKind {
    Toy,
    Arm,
    /// Evenly spaced values of one input column.
    Grid,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(value_enum)]
    pub kind: DataKind,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Toy observation noise standard deviation.
    #[arg(long, default_value_t = TOY_NOISE_SD)]
    pub noise_sd: f64,
    /// Settings file; only the `arm.*` keys matter here.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Grid column name.
    #[arg(long, default_value = "x")]
    pub column: String,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub min: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub max: f64,
}

#[derive(Args, Debug, Clone)]
pub struct ColumnArgs {
    /// Target column names; every other column is an input.
    #[arg(long, value_delimiter = ',', conflicts_with = "num_targets")]
    pub targets: Option<Vec<String>>,
    /// Take the last K columns as targets.
    #[arg(long, default_value_t = 1)]
    pub num_targets: usize,
}

impl ColumnArgs {
    fn schema(&self) -> Schema {
        match &self.targets {
            Some(names) => Schema::Targets(names.clone()),
            None => Schema::LastColumns(self.num_targets),
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub columns: ColumnArgs,
    /// Tree code such as `((e,e),e)`.
    #[arg(long, conflicts_with = "experts", required_unless_present = "experts")]
    pub topology: Option<String>,
    /// Number of experts of a balanced tree.
    #[arg(long)]
    pub experts: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `train.restarts`.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Scale inputs and targets to zero mean and unit variance.
    #[arg(long)]
    pub standardize: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to the model path with `.trace.csv` in place of its extension.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub columns: ColumnArgs,
    #[arg(long, default_value_t = 1)]
    pub expert_min: usize,
    #[arg(long)]
    pub expert_max: usize,
    /// Overrides `select.restarts`.
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub standardize: bool,
    /// Prefix of the `.runs.csv`, `.summary.json` and `.ockham.csv` files.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the selected model.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    MostProbableExpert,
    MixtureMean,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GatingArg {
    PlugIn,
    Probit,
}

#[derive(Args, Debug, Clone)]
pub struct PredictionFlags {
    /// Overrides `predict.mode`.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Overrides `predict.gating`.
    #[arg(long, value_enum)]
    pub gating: Option<GatingArg>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl PredictionFlags {
    fn settings(&self) -> Result<(Settings, PredictOptions)> {
        let settings = Settings::load_or_default(self.config.as_deref())?;
        let mut opts = settings.predict;
        if let Some(m) = self.mode {
            opts.point = match m {
                ModeArg::MostProbableExpert => PointMode::MostProbableExpert,
                ModeArg::MixtureMean => PointMode::MixtureMean,
            };
        }
        if let Some(g) = self.gating {
            opts.gating = match g {
                GatingArg::PlugIn => GatingMode::PlugIn,
                GatingArg::Probit => GatingMode::Probit,
            };
        }
        Ok((settings, opts))
    }
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: PredictionFlags,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Metric {
    Smse,
    EndEffector,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Model JSON; mutually exclusive with `--predictions`.
    #[arg(long, required_unless_present = "predictions", conflicts_with = "predictions")]
    pub model: Option<PathBuf>,
    /// A file written by `predict` or `baseline` (end-effector metric only).
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Test data with the model's input and target columns.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// Settings file holding the `arm.*` keys.
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    /// Per-point error CSV for the end-effector metric.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub flags: PredictionFlags,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[command(flatten)]
    pub columns: ColumnArgs,
    /// `rbf:<centres per dim>:<width in grid spacings>` or `poly:<degree>`.
    #[arg(long, default_value = "rbf:10:1.0")]
    pub features: String,
    #[arg(long, default_value_t = 1e-6)]
    pub ridge: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DensityArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x_range: Vec<f64>,
    #[arg(long, default_value_t = 101)]
    pub x_steps: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub t_range: Vec<f64>,
    #[arg(long, default_value_t = 101)]
    pub t_steps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Errors go to stderr as one `error[<kind>]: …` line.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return if e.kind() == K::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 };
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", Error::usage(first));
            return 2;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train_cmd(a),
        Command::Select(a) => select_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Baseline(a) => baseline_cmd(a),
        Command::Density(a) => density_cmd(a),
    }
}

fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}

fn warn(line: &str) {
    eprintln!("warning: {line}");
}

fn generate(a: GenerateArgs) -> Result<()> {
    if a.n == 0 {
        return Err(Error::usage("--n must be at least 1"));
    }
    let data = match a.kind {
        DataKind::Toy => gen_toy(a.n, a.noise_sd, a.seed)?,
        DataKind::Arm => {
            let settings = Settings::load_or_default(a.config.as_deref())?;
            gen_arm_dataset(a.n, &settings.geometry, a.seed)?
        }
        DataKind::Grid => {
            if !(a.min.is_finite() && a.max.is_finite() && a.min <= a.max) {
                return Err(Error::usage("grid needs finite --min ≤ --max"));
            }
            let step = if a.n > 1 { (a.max - a.min) / (a.n - 1) as f64 } else { 0.0 };
            let col: Vec<f64> = (0..a.n).map(|k| a.min + step * k as f64).collect();
            let x = DMatrix::from_column_slice(a.n, 1, &col);
            Dataset::new(x, DMatrix::zeros(a.n, 0), false, vec![a.column.clone()], vec![])?
        }
    };
    save_delimited(&data, &a.out)?;
    say(&format!("rows={} out={}", data.len(), a.out.display()));
    Ok(())
}

fn load_training(path: &Path, columns: &ColumnArgs, standardize: bool) -> Result<Dataset> {
    let data = load_delimited(path, &columns.schema(), true)?;
    if data.is_empty() {
        return Err(Error::data(format!("{}: no data rows", path.display())));
    }
    if data.target_dim() == 0 {
        return Err(Error::data(format!("{}: no target columns", path.display())));
    }
    if standardize {
        Ok(data.standardize().map_err(|e| Error::data(format!("{}: {e}", path.display())))?.0)
    } else {
        Ok(data)
    }
}

fn default_trace_path(model: &Path) -> PathBuf {
    model.with_extension("trace.csv")
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let settings = Settings::load_or_default(a.config.as_deref())?;
    let tree = match (&a.topology, a.experts) {
        (Some(code), _) => TreeTopology::parse(code).map_err(|e| Error::usage(e.to_string()))?,
        (None, Some(m)) => TreeTopology::balanced(m).map_err(|e| Error::usage(e.to_string()))?,
        (None, None) => return Err(Error::usage("give --topology or --experts")),
    };
    let restarts = a.restarts.unwrap_or(settings.train_restarts);
    if restarts == 0 {
        return Err(Error::usage("--restarts must be at least 1"));
    }
    let data = load_training(&a.data, &a.columns, a.standardize)?;
    let config = &settings.train;
    let (post, trace, seed) = if restarts == 1 {
        match bhme_core::train(&tree, &data, config, a.seed) {
            Ok((p, t)) => (p, t, a.seed),
            Err(f) => return Err(f.error.into()),
        }
    } else {
        let sel = restarts_parallel(&tree, &data, restarts, a.seed, config)?;
        let seed = sel.report.best_entry().seed;
        (sel.posterior, sel.trace, seed)
    };
    let doc = ModelDocument::new(&post, &trace, &data, config, seed);
    doc.save(&a.out)?;
    let trace_path = a.trace.clone().unwrap_or_else(|| default_trace_path(&a.out));
    write_trace(&trace, &trace_path)?;
    let bound = trace.final_bound().map_or_else(|| "nan".to_string(), fmt_f64);
    say(&format!(
        "topology={} bound={bound} iterations={} converged={} model={} trace={}",
        tree.code(),
        trace.iterations_run,
        trace.converged,
        a.out.display(),
        trace_path.display()
    ));
    if !trace.converged {
        warn(&format!(
            "training stopped after {} sweeps without meeting the tolerance; model written with converged=false",
            trace.iterations_run
        ));
    }
    Ok(())
}

fn select_cmd(a: SelectArgs) -> Result<()> {
    let settings = Settings::load_or_default(a.config.as_deref())?;
    let restarts = a.restarts.unwrap_or(settings.select_restarts);
    if restarts == 0 {
        return Err(Error::usage("--restarts must be at least 1"));
    }
    if a.expert_min == 0 || a.expert_min > a.expert_max {
        return Err(Error::usage(format!("empty expert range {}..={}", a.expert_min, a.expert_max)));
    }
    let data = load_training(&a.data, &a.columns, a.standardize)?;
    let sel = sweep_parallel(&data, a.expert_min, a.expert_max, restarts, a.seed, &settings.train)?;
    let paths = write_report(&sel.report, &a.out)?;
    let best = sel.report.best_entry();
    if !sel.report.failed_topologies.is_empty() {
        warn(&format!("every run failed for topology ids {:?}", sel.report.failed_topologies));
    }
    if let Some(model) = &a.model {
        ModelDocument::new(&sel.posterior, &sel.trace, &data, &settings.train, best.seed).save(model)?;
    }
    say(&format!(
        "best_topology={} num_experts={} bound={} runs={} report={},{},{}",
        best.topology,
        best.num_experts,
        best.final_bound.map_or_else(|| "nan".into(), fmt_f64),
        sel.report.entries.len(),
        paths[0].display(),
        paths[1].display(),
        paths[2].display()
    ));
    Ok(())
}

/// Raw input rows of `path` in the model's column order.
fn model_inputs(model: &LoadedModel, path: &Path) -> Result<Dataset> {
    let schema = Schema::Columns { inputs: model.doc.input_names.clone(), targets: vec![] };
    load_delimited(path, &schema, false)
}

fn predictions_table(
    inputs: &Dataset,
    target_names: &[String],
    preds: &[Prediction],
    path: &Path,
) -> Result<()> {
    let m = preds.first().map_or(0, |p| p.mixing.len());
    let mut headers: Vec<String> = inputs.raw_input_names().to_vec();
    headers.extend(target_names.iter().map(|t| format!("pred_{t}")));
    if m > 0 {
        headers.push("expert".into());
        headers.extend((1..=m).map(|j| format!("mix_{j}")));
    }
    let raw = inputs.raw_inputs();
    let rows = preds.iter().enumerate().map(|(n, p)| {
        let mut row: Vec<String> = raw.row(n).iter().map(|v| fmt_f64(*v)).collect();
        row.extend(p.point.iter().map(|v| fmt_f64(*v)));
        if m > 0 {
            row.push((p.expert_chosen + 1).to_string());
            row.extend(p.mixing.iter().map(|v| fmt_f64(*v)));
        }
        row
    });
    write_csv(path, Some(PREDICTIONS_SCHEMA), &headers, rows)
}

fn predict_rows(model: &LoadedModel, inputs: &Dataset, opts: PredictOptions) -> Result<Vec<Prediction>> {
    let raw = inputs.raw_inputs();
    (0..inputs.len())
        .map(|n| model.predict_raw(&raw.row(n).iter().copied().collect::<Vec<_>>(), opts))
        .collect()
}

fn predict_cmd(a: PredictArgs) -> Result<()> {
    let (_, opts) = a.flags.settings()?;
    let model = LoadedModel::open(&a.model)?;
    let inputs = model_inputs(&model, &a.input)?;
    let preds = predict_rows(&model, &inputs, opts)?;
    predictions_table(&inputs, &model.doc.target_names, &preds, &a.out)?;
    say(&format!("rows={} out={}", preds.len(), a.out.display()));
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let k = values.len() / 2;
    if values.len() % 2 == 1 {
        values[k]
    } else {
        0.5 * (values[k - 1] + values[k])
    }
}

fn region_label(r: ArmRegion) -> &'static str {
    match r {
        ArmRegion::A => "A",
        ArmRegion::B => "B",
        ArmRegion::C => "C",
        ArmRegion::Unreachable => "unreachable",
    }
}

/// One row of the end-effector report.
struct ArmError {
    position: (f64, f64),
    angles: (f64, f64),
    expert: Option<usize>,
    error: f64,
    region: ArmRegion,
}

fn write_arm_errors(rows: &[ArmError], path: &Path) -> Result<()> {
    let headers: Vec<String> = ["x1", "x2", "pred_theta1", "pred_theta2", "expert", "error", "region"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let body = rows.iter().map(|r| {
        vec![
            fmt_f64(r.position.0),
            fmt_f64(r.position.1),
            fmt_f64(r.angles.0),
            fmt_f64(r.angles.1),
            r.expert.map_or_else(String::new, |j| (j + 1).to_string()),
            fmt_f64(r.error),
            region_label(r.region).to_string(),
        ]
    });
    write_csv(path, Some(ERRORS_SCHEMA), &headers, body)
}

fn summarize_arm_errors(rows: &[ArmError]) {
    let mut all: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let mean = all.iter().sum::<f64>() / all.len().max(1) as f64;
    let med = median(&mut all);
    say(&format!("end_effector_mean={} end_effector_median={} points={}", fmt_f64(mean), fmt_f64(med), rows.len()));
    for region in [ArmRegion::A, ArmRegion::B, ArmRegion::C] {
        let mut v: Vec<f64> = rows.iter().filter(|r| r.region == region).map(|r| r.error).collect();
        if !v.is_empty() {
            let n = v.len();
            say(&format!("region={} points={n} median={}", region_label(region), fmt_f64(median(&mut v))));
        }
    }
}

fn arm_rows(
    positions: impl Iterator<Item = (f64, f64)>,
    angles: impl Iterator<Item = ((f64, f64), Option<usize>)>,
    geometry: &ArmGeometry,
) -> Vec<ArmError> {
    positions
        .zip(angles)
        .map(|(position, (angles, expert))| ArmError {
            position,
            angles,
            expert,
            error: end_effector_error(angles, position, geometry),
            region: arm_region(position, geometry, REGION_TOL),
        })
        .collect()
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let (_, opts) = a.flags.settings()?;
    let geometry = Settings::load_or_default(a.geometry.as_deref())?.geometry;
    match (a.metric, &a.model, &a.predictions) {
        (Metric::Smse, Some(model_path), _) => {
            let test_path = a.test.as_ref().ok_or_else(|| Error::usage("smse needs --test"))?;
            let model = LoadedModel::open(model_path)?;
            let schema = Schema::Columns { inputs: model.doc.input_names.clone(), targets: model.doc.target_names.clone() };
            let test = load_delimited(test_path, &schema, false)?;
            let preds = predict_rows(&model, &test, opts)?;
            let d = model.doc.target_names.len();
            let pm = DMatrix::from_fn(preds.len(), d, |n, k| preds[n].point[k]);
            let smse = standardized_mse(&pm, test.targets(), &model.doc.training_target_variance)?;
            say(&format!("smse={}", fmt_f64(smse)));
            Ok(())
        }
        (Metric::Smse, None, _) => Err(Error::usage("smse needs --model and --test")),
        (Metric::EndEffector, Some(model_path), _) => {
            let test_path = a.test.as_ref().ok_or_else(|| Error::usage("end-effector needs --test"))?;
            let model = LoadedModel::open(model_path)?;
            if model.doc.input_names.len() != 2 || model.doc.target_names.len() != 2 {
                return Err(Error::data("end-effector error needs a model with two inputs and two angle targets"));
            }
            let inputs = model_inputs(&model, test_path)?;
            let preds = predict_rows(&model, &inputs, opts)?;
            let raw = inputs.raw_inputs();
            let rows = arm_rows(
                (0..inputs.len()).map(|n| (raw[(n, 0)], raw[(n, 1)])),
                preds.iter().map(|p| ((p.point[0], p.point[1]), Some(p.expert_chosen))),
                &geometry,
            );
            let out = a.out.clone().unwrap_or_else(|| model_path.with_extension("errors.csv"));
            write_arm_errors(&rows, &out)?;
            summarize_arm_errors(&rows);
            say(&format!("out={}", out.display()));
            Ok(())
        }
        (Metric::EndEffector, None, Some(pred_path)) => {
            let table = read_table(pred_path)?;
            let cols = ["x1", "x2", "pred_theta1", "pred_theta2"]
                .iter()
                .map(|c| table.column_index(c, pred_path))
                .collect::<Result<Vec<_>>>()?;
            let expert = table.headers.iter().position(|h| h == "expert");
            let rows = arm_rows(
                table.rows.iter().map(|r| (r[cols[0]], r[cols[1]])),
                table.rows.iter().map(|r| ((r[cols[2]], r[cols[3]]), expert.map(|e| r[e] as usize - 1))),
                &geometry,
            );
            let out = a.out.clone().unwrap_or_else(|| pred_path.with_extension("errors.csv"));
            write_arm_errors(&rows, &out)?;
            summarize_arm_errors(&rows);
            say(&format!("out={}", out.display()));
            Ok(())
        }
        (Metric::EndEffector, None, None) => Err(Error::usage("give --model or --predictions")),
    }
}

pub fn parse_features(spec: &str) -> Result<FeatureConfig> {
    let bad = || Error::usage(format!("features {spec:?}: expected rbf:<centres>:<width> or poly:<degree>"));
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["poly", d] => Ok(FeatureConfig::Polynomial { degree: d.parse().map_err(|_| bad())? }),
        ["rbf", c, w] => Ok(FeatureConfig::Rbf {
            centers_per_dim: c.parse().map_err(|_| bad())?,
            width_scale: w.parse().map_err(|_| bad())?,
        }),
        _ => Err(bad()),
    }
}

fn baseline_cmd(a: BaselineArgs) -> Result<()> {
    let features = parse_features(&a.features)?;
    let train = load_training(&a.train, &a.columns, false)?;
    let model = fit_baseline(&train, features, a.ridge)?;
    // the test file may lack targets
    let table = read_table(&a.test)?;
    let has_targets = train.target_names().iter().all(|t| table.headers.contains(t));
    let schema = Schema::Columns {
        inputs: train.raw_input_names().to_vec(),
        targets: if has_targets { train.target_names().to_vec() } else { vec![] },
    };
    let test = load_delimited(&a.test, &schema, false)?;
    let raw = test.raw_inputs();
    let preds = (0..test.len())
        .map(|n| {
            let x: Vec<f64> = raw.row(n).iter().copied().collect();
            Ok(Prediction {
                point: predict_baseline(&model, &x)?,
                expert_chosen: 0,
                mixing: vec![],
                per_expert_means: DMatrix::zeros(0, 0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    predictions_table(&test, train.target_names(), &preds, &a.out)?;
    if has_targets && !preds.is_empty() {
        let d = train.target_dim();
        let pm = DMatrix::from_fn(preds.len(), d, |n, k| preds[n].point[k]);
        let smse = standardized_mse(&pm, test.targets(), &train.target_variances())?;
        say(&format!("smse={}", fmt_f64(smse)));
    }
    say(&format!("rows={} features={} out={}", preds.len(), model.num_features(), a.out.display()));
    Ok(())
}

fn grid(range: &[f64], steps: usize, name: &str) -> Result<Vec<f64>> {
    if range.len() != 2 || !(range[0] <= range[1]) || steps < 2 {
        return Err(Error::usage(format!("--{name}-range needs lo,hi with lo ≤ hi and at least 2 steps")));
    }
    Ok((0..steps).map(|k| range[0] + (range[1] - range[0]) * k as f64 / (steps - 1) as f64).collect())
}

fn density_cmd(a: DensityArgs) -> Result<()> {
    let model = LoadedModel::open(&a.model)?;
    if model.doc.input_names.len() != 1 || model.doc.target_names.len() != 1 {
        return Err(Error::data("density grids need a model with one input and one target"));
    }
    let xs = grid(&a.x_range, a.x_steps, "x")?;
    let ts = grid(&a.t_range, a.t_steps, "t")?;
    let mut rows = Vec::with_capacity(xs.len() * ts.len());
    for &x in &xs {
        for &t in &ts {
            let ln_p = model.log_density_raw(&[t], &[x])?;
            rows.push(vec![fmt_f64(x), fmt_f64(t), fmt_f64(ln_p.exp())]);
        }
    }
    let headers = vec![model.doc.input_names[0].clone(), model.doc.target_names[0].clone(), "density".to_string()];
    write_csv(&a.out, Some(DENSITY_SCHEMA), &headers, rows)?;
    say(&format!("rows={} out={}", xs.len() * ts.len(), a.out.display()));
    Ok(())
}
