//! Trains a transfer field on the polar quadrant and scores it against the
//! radius-preserving rotation.
//!
//! cargo run --release --example train_polar -- [steps] [direct|antisymmetric]

use std::time::Instant;

use a2a_flow::coupling::BetaPolicy;
use a2a_flow::data::{generate, GeneratorKind, GeneratorSpec};
use a2a_flow::eval::{mse_from_oracle, polar_marginal_fit, EvalSpec};
use a2a_flow::flow::{FieldMode, TimeEmbedding, VectorFieldSpec};
use a2a_flow::smallnet::AdamConfig;
use a2a_flow::trainer::{run_training, CouplingMode, TrainConfig};
use a2a_flow::transport::{oracle_map, ModelTransfer, OdeConfig, OracleKind};

fn main() -> a2a_flow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let mode = match args.get(1).map(String::as_str) {
        Some("antisymmetric") => FieldMode::Antisymmetric,
        _ => FieldMode::Direct,
    };

    let dataset = generate(&GeneratorSpec {
        kind: GeneratorKind::PolarQuadrant,
        n_samples: 100_000,
        seed: 0,
    })?;
    let spec = VectorFieldSpec::new(mode, 2, 1, TimeEmbedding::Raw, &[64; 6], 0)?;
    let config = TrainConfig {
        batch_size: 1000,
        beta_policy: BetaPolicy::Fixed { value: 10.0 },
        coupling_mode: CouplingMode::A2a,
        steps,
        optimizer: AdamConfig::default(),
        seed: 0,
        checkpoint_every: 0,
        log_every: 100,
    };
    let started = Instant::now();
    let outcome = run_training(&dataset, spec, &config, None)?;
    println!(
        "{steps} steps in {:?}, final mean loss {:.4e}",
        started.elapsed(),
        outcome.final_mean_loss
    );

    let model = ModelTransfer {
        spec: &outcome.state.spec,
        ode: OdeConfig::default(),
    };
    let oracle = oracle_map(&dataset, OracleKind::PolarAnalytic)?;
    let mse = mse_from_oracle(&model, &oracle, &EvalSpec::default())?;
    println!("mse {:.4e} +- {:.2e}", mse.mean, mse.std);
    let fit = polar_marginal_fit(&model, 0.2, 1.2, 1000, 0)?;
    println!("radius KS statistic 0.2 -> 1.2: {:.4}", fit.ks_statistic);
    Ok(())
}
