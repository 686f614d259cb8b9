//! The training loop: couple two minibatches, regress the field onto the
//! coupled straight paths, take one Adam step.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::{
    beta_value, cost_matrix, solve_assignment, Assignment, BetaPolicy, CostMode, SolveMethod,
};
use crate::data::{sample_batch_pair, Dataset};
use crate::error::{Error, Result};
use crate::flow::{fm_loss_and_grad, make_paths, VectorFieldSpec};
use crate::smallnet::{adam_step, AdamConfig, AdamState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CouplingMode {
    #[default]
    A2a,
    Cot,
    /// Minibatch OT on samples alone.
    Plain,
    /// Uniformly random permutation (no optimization).
    Random,
}

impl CouplingMode {
    fn cost_mode(self) -> Option<CostMode> {
        match self {
            CouplingMode::A2a => Some(CostMode::A2a),
            CouplingMode::Cot => Some(CostMode::Cot),
            CouplingMode::Plain => Some(CostMode::Plain),
            CouplingMode::Random => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub beta_policy: BetaPolicy,
    #[serde(default)]
    pub coupling_mode: CouplingMode,
    pub steps: u64,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default)]
    pub seed: u64,
    /// 0 writes only the final checkpoint.
    #[serde(default)]
    pub checkpoint_every: u64,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
}

fn default_log_every() -> u64 {
    100
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be >= 2, got {}",
                self.batch_size
            )));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be >= 1".into()));
        }
        self.beta_policy.validate()?;
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub spec: VectorFieldSpec,
    pub adam: AdamState,
    pub step: u64,
    /// `(step, loss / batch_size)` after every step.
    pub loss_history: Vec<(u64, f64)>,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(spec: VectorFieldSpec, config: &TrainConfig) -> Self {
        let adam = AdamState::new(&spec.net, config.optimizer);
        Self {
            spec,
            adam,
            step: 0,
            loss_history: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        }
    }
}

/// What happened in one step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub step: u64,
    pub mean_loss: f64,
    pub beta: f64,
    pub assignment: Assignment,
}

/// One iteration: sample `B1, B2`, couple them, build paths, update.
pub fn train_step(
    state: &mut TrainState,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<StepReport> {
    let step = state.step + 1;
    run_step(state, dataset, config).map_err(|e| e.at_step(step))
}

fn run_step(state: &mut TrainState, dataset: &Dataset, config: &TrainConfig) -> Result<StepReport> {
    if dataset.d_x != state.spec.d_x || dataset.d_c != state.spec.d_c {
        return Err(Error::contract(format!(
            "dataset dimensions ({}, {}) do not match the field ({}, {})",
            dataset.d_x, dataset.d_c, state.spec.d_x, state.spec.d_c
        )));
    }
    let n = config.batch_size;
    let pair = sample_batch_pair(dataset, n, &mut state.rng)?;
    let beta = beta_value(config.beta_policy, n);
    let assignment = match config.coupling_mode.cost_mode() {
        Some(mode) => solve_assignment(&cost_matrix(&pair, beta, mode)?, SolveMethod::Exact)?,
        None => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut state.rng);
            cost_matrix(&pair, beta, CostMode::A2a)?.assignment_for(perm)?
        }
    };
    let paths = make_paths(&pair, &assignment, &mut state.rng)?;
    let (loss, grads) = fm_loss_and_grad(&state.spec, &paths)?;
    adam_step(&mut state.spec.net, &grads, &mut state.adam)?;
    state.step += 1;
    let mean_loss = loss / n as f64;
    state.loss_history.push((state.step, mean_loss));
    Ok(StepReport {
        step: state.step,
        mean_loss,
        beta,
        assignment,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub checkpoints: Vec<PathBuf>,
    /// Mean of the per-step mean loss over the last 100 steps.
    pub final_mean_loss: f64,
}

/// Row of `train_log.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub mean_loss: f64,
    pub beta: f64,
    pub wall_ms: u128,
}

struct RunFiles {
    checkpoint_dir: PathBuf,
    log: csv::Writer<std::fs::File>,
    log_path: PathBuf,
}

impl RunFiles {
    fn create(out_dir: &Path) -> Result<Self> {
        let checkpoint_dir = out_dir.join("checkpoints");
        std::fs::create_dir_all(&checkpoint_dir).map_err(|e| Error::io(&checkpoint_dir, e))?;
        let log_path = out_dir.join("train_log.csv");
        let file = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
        Ok(Self {
            checkpoint_dir,
            log: csv::Writer::from_writer(file),
            log_path,
        })
    }

    fn log(&mut self, row: &LogRow) -> Result<()> {
        self.log
            .serialize(row)
            .map_err(|e| Error::io(&self.log_path, std::io::Error::other(e)))?;
        self.log.flush().map_err(|e| Error::io(&self.log_path, e))
    }

    fn checkpoint(&self, state: &TrainState, seed: u64, name: &str) -> Result<PathBuf> {
        let path = self.checkpoint_dir.join(name);
        state
            .spec
            .to_checkpoint(Some(&state.adam), seed, state.step)
            .save(&path)?;
        Ok(path)
    }
}

/// Runs `config.steps` iterations from a fresh optimizer state. With an
/// output directory, writes `checkpoints/step_XXXXXXXX.json` every
/// `checkpoint_every` steps, `checkpoints/final.json` at the end and
/// `train_log.csv` every `log_every` steps.
pub fn run_training(
    dataset: &Dataset,
    spec: VectorFieldSpec,
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if config.batch_size > dataset.len() {
        return Err(Error::Config(format!(
            "batch_size {} exceeds dataset size {}",
            config.batch_size,
            dataset.len()
        )));
    }
    let mut files = out_dir.map(RunFiles::create).transpose()?;
    let mut state = TrainState::new(spec, config);
    let mut checkpoints = Vec::new();
    let started = Instant::now();

    while state.step < config.steps {
        let report = match train_step(&mut state, dataset, config) {
            Ok(r) => r,
            Err(e) => {
                let last = checkpoints
                    .last()
                    .map(|p: &PathBuf| format!("; last good checkpoint {}", p.display()))
                    .unwrap_or_default();
                return Err(match e {
                    Error::Training { step, message } => Error::Training {
                        step,
                        message: format!("{message}{last}"),
                    },
                    other => other,
                });
            }
        };
        if !report.mean_loss.is_finite() {
            return Err(Error::Training {
                step: Some(report.step),
                message: "non-finite loss".into(),
            });
        }
        if let Some(files) = files.as_mut() {
            if report.step % config.log_every == 0 || report.step == config.steps {
                files.log(&LogRow {
                    step: report.step,
                    mean_loss: report.mean_loss,
                    beta: report.beta,
                    wall_ms: started.elapsed().as_millis(),
                })?;
            }
            if config.checkpoint_every > 0 && report.step % config.checkpoint_every == 0 {
                let name = format!("step_{:08}.json", report.step);
                checkpoints.push(files.checkpoint(&state, config.seed, &name)?);
            }
        }
        if report.step % 1000 == 0 {
            log::info!("step {} mean loss {:.6}", report.step, report.mean_loss);
        }
    }
    if let Some(files) = files.as_mut() {
        checkpoints.push(files.checkpoint(&state, config.seed, "final.json")?);
        files
            .log
            .flush()
            .map_err(|e| Error::io(&files.log_path, e))?;
    }
    let tail = &state.loss_history[state.loss_history.len().saturating_sub(100)..];
    let final_mean_loss = tail.iter().map(|(_, l)| l).sum::<f64>() / tail.len() as f64;
    Ok(TrainOutcome {
        state,
        checkpoints,
        final_mean_loss,
    })
}

/// Writes a plain `(step, mean_loss)` history as CSV.
pub fn write_loss_history(history: &[(u64, f64)], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "step,mean_loss").map_err(|e| Error::io(path, e))?;
    for (s, l) in history {
        writeln!(f, "{s},{l}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::LabeledSample;
    use crate::flow::{FieldMode, TimeEmbedding};
    use crate::transport::{integrate, OdeConfig};

    fn config(mode: CouplingMode, beta: f64, steps: u64) -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            beta_policy: BetaPolicy::Fixed { value: beta },
            coupling_mode: mode,
            steps,
            optimizer: AdamConfig::default(),
            seed: 3,
            checkpoint_every: 0,
            log_every: 1,
        }
    }

    fn toy_dataset() -> Dataset {
        let samples = (0..40)
            .map(|i| {
                let c = (i % 2) as f64;
                LabeledSample::new(vec![c + 0.01 * (i / 2) as f64, 0.5 * c], vec![c])
            })
            .collect();
        Dataset::new(samples, "toy", 0).unwrap()
    }

    fn spec() -> VectorFieldSpec {
        VectorFieldSpec::new(FieldMode::Direct, 2, 1, TimeEmbedding::Raw, &[8, 8], 1).unwrap()
    }

    #[test]
    fn identical_points_have_zero_loss() {
        let samples = (0..10)
            .map(|_| LabeledSample::new(vec![0.5, 0.5], vec![1.0]))
            .collect();
        let ds = Dataset::new(samples, "same", 0).unwrap();
        let zero = VectorFieldSpec::from_net(
            FieldMode::Direct,
            crate::smallnet::Mlp::zeros(&[5, 4, 2]).unwrap(),
            2,
            1,
            TimeEmbedding::Raw,
        )
        .unwrap();
        let cfg = config(CouplingMode::A2a, 1.0, 1);
        let mut state = TrainState::new(zero.clone(), &cfg);
        let report = train_step(&mut state, &ds, &cfg).unwrap();
        assert_eq!(report.mean_loss, 0.0);
        assert_eq!(state.spec, zero);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn runs_are_reproducible() {
        let ds = toy_dataset();
        let cfg = config(CouplingMode::A2a, 2.0, 25);
        let a = run_training(&ds, spec(), &cfg, None).unwrap();
        let b = run_training(&ds, spec(), &cfg, None).unwrap();
        assert_eq!(a.state.loss_history, b.state.loss_history);
        assert_eq!(a.state.spec, b.state.spec);
    }

    #[test]
    fn plain_equals_a2a_at_zero_beta() {
        let ds = toy_dataset();
        let plain = config(CouplingMode::Plain, 5.0, 1);
        let a2a = config(CouplingMode::A2a, 0.0, 1);
        let mut s1 = TrainState::new(spec(), &plain);
        let mut s2 = TrainState::new(spec(), &a2a);
        for _ in 0..15 {
            let r1 = train_step(&mut s1, &ds, &plain).unwrap();
            let r2 = train_step(&mut s2, &ds, &a2a).unwrap();
            assert_eq!(r1.assignment.permutation, r2.assignment.permutation);
            assert_eq!(r1.mean_loss, r2.mean_loss);
        }
        assert_eq!(s1.spec, s2.spec);
    }

    #[test]
    fn zero_steps_is_a_config_error() {
        let ds = toy_dataset();
        let cfg = config(CouplingMode::A2a, 1.0, 0);
        assert!(matches!(
            run_training(&ds, spec(), &cfg, None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dimension_mismatch_carries_step() {
        let ds = toy_dataset();
        let wrong =
            VectorFieldSpec::new(FieldMode::Direct, 3, 1, TimeEmbedding::Raw, &[4], 0).unwrap();
        let cfg = config(CouplingMode::A2a, 1.0, 1);
        let mut state = TrainState::new(wrong, &cfg);
        let err = train_step(&mut state, &ds, &cfg).unwrap_err();
        assert!(
            matches!(err, Error::Training { step: Some(1), .. }),
            "{err}"
        );
    }

    #[test]
    fn random_mode_trains() {
        let ds = toy_dataset();
        let out = run_training(&ds, spec(), &config(CouplingMode::Random, 1.0, 5), None).unwrap();
        assert_eq!(out.state.step, 5);
        assert!(out.state.loss_history.iter().all(|(_, l)| l.is_finite()));
    }

    #[test]
    fn writes_checkpoints_and_log() {
        let ds = toy_dataset();
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(CouplingMode::A2a, 1.0, 10);
        cfg.checkpoint_every = 4;
        cfg.log_every = 5;
        let out = run_training(&ds, spec(), &cfg, Some(dir.path())).unwrap();
        let names: Vec<_> = out
            .checkpoints
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(
            names,
            vec!["step_00000004.json", "step_00000008.json", "final.json"]
        );
        let log = std::fs::read_to_string(dir.path().join("train_log.csv")).unwrap();
        let lines: Vec<_> = log.lines().collect();
        assert_eq!(lines[0], "step,mean_loss,beta,wall_ms");
        assert_eq!(lines.len(), 3);
        let ckpt = crate::flow::Checkpoint::load(&out.checkpoints[2]).unwrap();
        assert_eq!(ckpt.step, 10);
        assert_eq!(ckpt.to_spec().unwrap(), out.state.spec);
        assert_eq!(ckpt.optimizer_state.unwrap().step, 10);
    }

    #[test]
    fn point_masses_transfer_by_one() {
        // x = c for c in {0, 1}: the transport 0 -> 1 is x -> x + 1
        let samples = (0..64)
            .map(|i| {
                let c = (i % 2) as f64;
                LabeledSample::new(vec![c], vec![c])
            })
            .collect();
        let ds = Dataset::new(samples, "point_masses", 0).unwrap();
        let spec = VectorFieldSpec::new(FieldMode::Direct, 1, 1, TimeEmbedding::Raw, &[16, 16], 2)
            .unwrap();
        let cfg = TrainConfig {
            batch_size: 16,
            beta_policy: BetaPolicy::Fixed { value: 10.0 },
            coupling_mode: CouplingMode::A2a,
            steps: 5000,
            optimizer: AdamConfig::default(),
            seed: 7,
            checkpoint_every: 0,
            log_every: 100,
        };
        let out = run_training(&ds, spec, &cfg, None).unwrap();
        let x = integrate(
            &out.state.spec,
            &[0.0],
            &[0.0],
            &[1.0],
            &OdeConfig::default(),
        )
        .unwrap();
        assert!((x[0] - 1.0).abs() < 0.1, "transferred to {}", x[0]);
    }
}
