//! Experiment configuration and the `a2a` command-line front end.
//!
//! Every subcommand reads the same JSON experiment file. Individual fields
//! can be overridden with `--set path.to.key=value`, where the value is parsed
//! as JSON and falls back to a plain string.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::coupling::{
    beta_value, cost_matrix, solve_assignment, BetaPolicy, CostMode, SolveMethod,
};
use crate::data::{
    fmt_f64, generate, load_csv, sample_batch_pair, save_csv, Dataset, GeneratorKind, GeneratorSpec,
};
use crate::error::{Error, Result};
use crate::eval::{
    all_group_pairs, conditional_w2_table, efficiency_curve, emit_report, mse_from_oracle,
    polar_marginal_fit, write_curve_csv, EvalReport, EvalSpec,
};
use crate::flow::{Checkpoint, FieldMode, TimeEmbedding, VectorFieldSpec};
use crate::smallnet::AdamConfig;
use crate::trainer::{run_training, CouplingMode, TrainConfig};
use crate::transport::{oracle_map, ConditionTransfer, ModelTransfer, OdeConfig, OracleKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
    /// Group CSV rows by exact condition value.
    #[serde(default)]
    pub grouped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub mode: FieldMode,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub time_embedding: TimeEmbedding,
    /// Optional declarations checked against the dataset.
    #[serde(default)]
    pub d_x: Option<usize>,
    #[serde(default)]
    pub d_c: Option<usize>,
}

fn default_hidden() -> Vec<usize> {
    vec![64; 3]
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            mode: FieldMode::default(),
            hidden: default_hidden(),
            time_embedding: TimeEmbedding::default(),
            d_x: None,
            d_c: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Defaults to the heuristic for the dataset's `d_c`.
    #[serde(default)]
    pub beta_policy: Option<BetaPolicy>,
    #[serde(default)]
    pub coupling_mode: CouplingMode,
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default)]
    pub checkpoint_every: u64,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
}

fn default_batch() -> usize {
    256
}

fn default_steps() -> u64 {
    1000
}

fn default_log_every() -> u64 {
    100
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            batch_size: default_batch(),
            beta_policy: None,
            coupling_mode: CouplingMode::default(),
            steps: default_steps(),
            optimizer: AdamConfig::default(),
            checkpoint_every: 0,
            log_every: default_log_every(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalSection {
    pub c_src: f64,
    pub c_targ: f64,
    #[serde(default = "default_marginal_n")]
    pub n: usize,
}

fn default_marginal_n() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Inferred from the dataset when absent.
    #[serde(default)]
    pub oracle: Option<OracleKind>,
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Defaults to the global seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub marginal: Option<MarginalSection>,
}

fn default_n_eval() -> usize {
    100
}

fn default_runs() -> usize {
    10
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            oracle: None,
            n_eval: default_n_eval(),
            runs: default_runs(),
            seed: None,
            marginal: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub transport: OdeConfig,
    #[serde(default)]
    pub eval: EvalSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("a2a_out")
}

fn generator_dims(kind: GeneratorKind) -> (usize, usize) {
    match kind {
        GeneratorKind::GroupedMixture | GeneratorKind::PolarQuadrant => (2, 1),
    }
}

impl ExperimentConfig {
    /// Checks the parts that do not need the dataset on disk.
    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.generator.is_some() == d.csv.is_some() {
            return Err(Error::Config(
                "/dataset: exactly one of `generator` and `csv` is required".into(),
            ));
        }
        if let Some(g) = d.generator {
            if g.n_samples == 0 {
                return Err(Error::Config(
                    "/dataset/generator/n_samples: must be >= 1".into(),
                ));
            }
            self.check_dims(generator_dims(g.kind))?;
        }
        if let Some(p) = self.train.beta_policy {
            p.validate()?;
        }
        self.train_config(self.model.d_c.unwrap_or(1)).validate()?;
        self.transport.validate()?;
        self.eval_spec().validate()?;
        if self.model.hidden.contains(&0) {
            return Err(Error::Config("/model/hidden: widths must be >= 1".into()));
        }
        Ok(())
    }

    /// Errors if the model section or beta policy disagrees with `(d_x, d_c)`.
    pub fn check_dims(&self, (d_x, d_c): (usize, usize)) -> Result<()> {
        if let Some(m) = self.model.d_x.filter(|&m| m != d_x) {
            return Err(Error::Config(format!(
                "/model/d_x: model declares {m} but the dataset has d_x = {d_x}"
            )));
        }
        if let Some(m) = self.model.d_c.filter(|&m| m != d_c) {
            return Err(Error::Config(format!(
                "/model/d_c: model declares {m} but the dataset has d_c = {d_c}"
            )));
        }
        match self.train.beta_policy {
            Some(BetaPolicy::Heuristic { d_c: p } | BetaPolicy::RateCheck { d_c: p })
                if p != d_c =>
            {
                Err(Error::Config(format!(
                    "/train/beta_policy/d_c: policy uses {p} but the dataset has d_c = {d_c}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn train_config(&self, d_c: usize) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            batch_size: t.batch_size,
            beta_policy: t.beta_policy.unwrap_or(BetaPolicy::Heuristic { d_c }),
            coupling_mode: t.coupling_mode,
            steps: t.steps,
            optimizer: t.optimizer,
            seed: self.seed,
            checkpoint_every: t.checkpoint_every,
            log_every: t.log_every,
        }
    }

    pub fn eval_spec(&self) -> EvalSpec {
        EvalSpec {
            n_eval: self.eval.n_eval,
            runs: self.eval.runs,
            seed: self.eval.seed.unwrap_or(self.seed),
        }
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let ds = match (&self.dataset.generator, &self.dataset.csv) {
            (Some(g), _) => generate(g)?,
            (None, Some(path)) => {
                let ds = load_csv(path)?;
                if self.dataset.grouped {
                    ds.with_groups_from_conditions()
                } else {
                    ds
                }
            }
            (None, None) => return Err(Error::Config("/dataset: no source".into())),
        };
        self.check_dims((ds.d_x, ds.d_c))?;
        Ok(ds)
    }

    pub fn oracle_kind(&self, dataset: &Dataset) -> OracleKind {
        self.eval.oracle.unwrap_or(if dataset.grouped.is_some() {
            OracleKind::EmpiricalGrouped
        } else {
            OracleKind::PolarAnalytic
        })
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.output_dir.join("checkpoints").join("final.json")
    }
}

/// Sets `a.b.c = value` inside a JSON object, creating objects on the way.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--set expects key=value, got {assignment:?}")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("--set: empty segment in {key:?}")));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("--set: {key:?} goes through a non-object")))?;
        if k + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split always yields a segment")
}

/// Parses and validates a config value; schema errors name the offending
/// JSON pointer.
pub fn config_from_value(value: Value) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let pointer = if path == "." {
            "/".to_string()
        } else {
            format!("/{}", path.replace('.', "/"))
        };
        Error::Config(format!("{pointer}: {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut value: Value =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    config_from_value(value)
}

pub fn parse_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, overrides)
}

#[derive(Debug, Parser)]
#[command(
    name = "a2a",
    version,
    about = "All-to-all condition transfer with coupled flow matching"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Experiment JSON file.
    #[arg(long, short)]
    config: PathBuf,
    /// Override a config field, e.g. `--set train.steps=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        parse_config(&self.config, &self.overrides)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the configured dataset to `<output_dir>/dataset.csv`.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a field; writes checkpoints and `train_log.csv`.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Map rows `x_src*, c_src*, c_targ*` of a CSV through a checkpoint.
    Transfer {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the coupling of one sampled batch pair.
    Couple {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, value_parser = parse_cost_mode, default_value = "a2a")]
        mode: CostMode,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint against the oracle; writes `report.json`.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Efficiency curve from a CSV with columns `similarity,error`.
    Curve {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        c_max: f64,
    },
}

fn parse_cost_mode(s: &str) -> std::result::Result<CostMode, String> {
    match s {
        "a2a" => Ok(CostMode::A2a),
        "cot" => Ok(CostMode::Cot),
        "plain" => Ok(CostMode::Plain),
        other => Err(format!(
            "unknown mode {other:?}, expected a2a, cot or plain"
        )),
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("A2A_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        // a pool may already exist when called as a library
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, std::io::Error::other(e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn gen_data(cfg: &ExperimentConfig, out: Option<PathBuf>) -> Result<()> {
    let ds = cfg.load_dataset()?;
    let path = out.unwrap_or_else(|| cfg.output_dir.join("dataset.csv"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_csv(&ds, &path)?;
    println!("wrote {} samples to {}", ds.len(), path.display());
    Ok(())
}

fn train(cfg: &ExperimentConfig) -> Result<()> {
    let ds = cfg.load_dataset()?;
    let m = &cfg.model;
    let spec = VectorFieldSpec::new(
        m.mode,
        ds.d_x,
        ds.d_c,
        m.time_embedding,
        &m.hidden,
        cfg.seed,
    )?;
    create_dir(&cfg.output_dir)?;
    let train_cfg = cfg.train_config(ds.d_c);
    let outcome = run_training(&ds, spec, &train_cfg, Some(&cfg.output_dir))?;
    println!(
        "trained {} steps, final mean loss {:.6e}, beta {}",
        outcome.state.step,
        outcome.final_mean_loss,
        beta_value(train_cfg.beta_policy, train_cfg.batch_size)
    );
    Ok(())
}

fn load_spec(cfg: &ExperimentConfig, checkpoint: Option<PathBuf>) -> Result<VectorFieldSpec> {
    let path = checkpoint.unwrap_or_else(|| cfg.checkpoint_path());
    Checkpoint::load(&path)?.to_spec()
}

fn transfer_csv(
    cfg: &ExperimentConfig,
    checkpoint: Option<PathBuf>,
    input: &Path,
    out: &Path,
) -> Result<()> {
    let spec = load_spec(cfg, checkpoint)?;
    let (d_x, d_c) = (spec.d_x, spec.d_c);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(input)
        .map_err(csv_io(input))?;
    let (mut xs, mut c_src, mut c_targ) = (Vec::new(), Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| Error::Ingestion {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != d_x + 2 * d_c {
            return Err(Error::Ingestion {
                line,
                message: format!("expected {} cells, found {}", d_x + 2 * d_c, record.len()),
            });
        }
        let mut row = record
            .iter()
            .map(|cell| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Ingestion {
                        line,
                        message: format!("not a finite number: {cell:?}"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        c_targ.push(row.split_off(d_x + d_c));
        c_src.push(row.split_off(d_x));
        xs.push(row);
    }
    let model = ModelTransfer {
        spec: &spec,
        ode: cfg.transport,
    };
    let moved = model.transfer_batch(&xs, &c_src, &c_targ)?;

    let mut w = csv::Writer::from_path(out).map_err(csv_io(out))?;
    let header = (0..d_x)
        .map(|k| format!("x_src{k}"))
        .chain((0..d_c).map(|k| format!("c_src{k}")))
        .chain((0..d_c).map(|k| format!("c_targ{k}")))
        .chain((0..d_x).map(|k| format!("x_out{k}")));
    w.write_record(header).map_err(csv_io(out))?;
    for i in 0..xs.len() {
        let row = xs[i]
            .iter()
            .chain(&c_src[i])
            .chain(&c_targ[i])
            .chain(&moved[i]);
        w.write_record(row.map(|&v| fmt_f64(v)))
            .map_err(csv_io(out))?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    println!("transferred {} rows to {}", xs.len(), out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct CouplingSidecar {
    #[serde(rename = "N")]
    n: usize,
    beta: f64,
    mode: String,
    total_cost: f64,
}

fn couple(
    cfg: &ExperimentConfig,
    beta: Option<f64>,
    mode: CostMode,
    batch_size: Option<usize>,
    out: &Path,
) -> Result<()> {
    let ds = cfg.load_dataset()?;
    let n = batch_size.unwrap_or(cfg.train.batch_size);
    let beta = beta.unwrap_or_else(|| beta_value(cfg.train_config(ds.d_c).beta_policy, n));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pair = sample_batch_pair(&ds, n, &mut rng)?;
    let cost = cost_matrix(&pair, beta, mode)?;
    let a = solve_assignment(&cost, SolveMethod::Exact)?;

    let mut w = csv::Writer::from_path(out).map_err(csv_io(out))?;
    w.write_record(["i", "pi_i", "transport_cost_i", "condition_cost_i"])
        .map_err(csv_io(out))?;
    for (i, &j) in a.permutation.iter().enumerate() {
        let (t, c) = cost.parts(i, j);
        w.write_record([i.to_string(), j.to_string(), fmt_f64(t), fmt_f64(c)])
            .map_err(csv_io(out))?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    let sidecar = CouplingSidecar {
        n,
        beta,
        mode: mode.to_string(),
        total_cost: a.total_cost,
    };
    write_json(&sidecar, &out.with_extension("json"))?;
    println!(
        "coupled N = {n} at beta = {beta}, total cost {:.6e}",
        a.total_cost
    );
    Ok(())
}

fn evaluate(cfg: &ExperimentConfig, checkpoint: Option<PathBuf>) -> Result<()> {
    let started = Instant::now();
    let ds = cfg.load_dataset()?;
    let spec = load_spec(cfg, checkpoint)?;
    if (spec.d_x, spec.d_c) != (ds.d_x, ds.d_c) {
        return Err(Error::Config(format!(
            "checkpoint dimensions ({}, {}) do not match the dataset ({}, {})",
            spec.d_x, spec.d_c, ds.d_x, ds.d_c
        )));
    }
    let model = ModelTransfer {
        spec: &spec,
        ode: cfg.transport,
    };
    let kind = cfg.oracle_kind(&ds);
    let oracle = oracle_map(&ds, kind)?;
    let eval_spec = cfg.eval_spec();
    let mse = mse_from_oracle(&model, &oracle, &eval_spec)?;
    let per_pair_w2 = match kind {
        OracleKind::EmpiricalGrouped => conditional_w2_table(&model, &ds, &all_group_pairs(&ds))?,
        OracleKind::PolarAnalytic => Vec::new(),
    };
    let marginal = match &cfg.eval.marginal {
        Some(m) if kind == OracleKind::PolarAnalytic => Some(polar_marginal_fit(
            &model,
            m.c_src,
            m.c_targ,
            m.n,
            eval_spec.seed,
        )?),
        Some(_) => {
            return Err(Error::Config(
                "/eval/marginal: only supported with the polar_analytic oracle".into(),
            ))
        }
        None => None,
    };
    let train_cfg = cfg.train_config(ds.d_c);
    let report = EvalReport {
        metric: "mse_from_ot".into(),
        mean: mse.mean,
        std: mse.std,
        runs: mse.runs,
        n_eval: mse.n_eval,
        seed: eval_spec.seed,
        beta: beta_value(train_cfg.beta_policy, train_cfg.batch_size),
        dataset: ds.name.clone(),
        wall_ms: started.elapsed().as_millis() as u64,
        resampled: mse.resampled,
        per_run: mse.per_run,
        per_pair_w2,
        marginal,
    };
    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("report.json");
    emit_report(&report, &path)?;
    println!(
        "mse from pairwise OT {:.4e} +- {:.4e} over {} runs; report at {}",
        report.mean,
        report.std,
        report.runs,
        path.display()
    );
    Ok(())
}

#[derive(Debug, Deserialize)]
struct MetricRow {
    similarity: f64,
    error: f64,
}

#[derive(Debug, Serialize)]
struct CurveSummary {
    auc: f64,
    n: usize,
    c_max: f64,
}

fn curve(input: &Path, out: &Path, c_max: f64) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(input)
        .map_err(csv_io(input))?;
    let (mut sims, mut errs) = (Vec::new(), Vec::new());
    for row in reader.deserialize::<MetricRow>() {
        let row = row.map_err(|e| Error::Ingestion {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        sims.push(row.similarity);
        errs.push(row.error);
    }
    let curve = efficiency_curve(&sims, &errs, c_max)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_curve_csv(&curve, out)?;
    let summary = CurveSummary {
        auc: curve.auc,
        n: sims.len(),
        c_max,
    };
    write_json(&summary, &out.with_extension("json"))?;
    println!("auc {:.6}", curve.auc);
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenData { config, out } => gen_data(&config.load()?, out),
        Command::Train { config } => train(&config.load()?),
        Command::Transfer {
            config,
            checkpoint,
            input,
            out,
        } => transfer_csv(&config.load()?, checkpoint, &input, &out),
        Command::Couple {
            config,
            beta,
            mode,
            batch_size,
            out,
        } => couple(&config.load()?, beta, mode, batch_size, &out),
        Command::Eval { config, checkpoint } => evaluate(&config.load()?, checkpoint),
        Command::Curve { input, out, c_max } => curve(&input, &out, c_max),
    }
}

/// Runs one command line and returns the process exit code: 0 on success,
/// 2 for configuration errors, 3 for data errors, 4 for numeric failures.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
