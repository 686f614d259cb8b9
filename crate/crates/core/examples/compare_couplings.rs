//! Trains the same field on the grouped mixture with the all-to-all coupling
//! and with random pairing, then compares average conditional W2.
//!
//! cargo run --release --example compare_couplings -- [steps] [seed]

use a2a_flow::coupling::BetaPolicy;
use a2a_flow::data::{generate, GeneratorKind, GeneratorSpec};
use a2a_flow::eval::{all_group_pairs, avg_conditional_w2};
use a2a_flow::flow::{FieldMode, TimeEmbedding, VectorFieldSpec};
use a2a_flow::smallnet::AdamConfig;
use a2a_flow::trainer::{run_training, CouplingMode, TrainConfig};
use a2a_flow::transport::{ModelTransfer, OdeConfig};

fn main() -> a2a_flow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);

    let dataset = generate(&GeneratorSpec {
        kind: GeneratorKind::GroupedMixture,
        n_samples: 3000,
        seed,
    })?;
    let pairs = all_group_pairs(&dataset);
    for mode in [CouplingMode::A2a, CouplingMode::Random] {
        let spec =
            VectorFieldSpec::new(FieldMode::Direct, 2, 1, TimeEmbedding::Raw, &[64; 3], seed)?;
        let config = TrainConfig {
            batch_size: 256,
            beta_policy: BetaPolicy::Fixed { value: 1e4 },
            coupling_mode: mode,
            steps,
            optimizer: AdamConfig::default(),
            seed,
            checkpoint_every: 0,
            log_every: 100,
        };
        let outcome = run_training(&dataset, spec, &config, None)?;
        let model = ModelTransfer {
            spec: &outcome.state.spec,
            ode: OdeConfig::default(),
        };
        let w2 = avg_conditional_w2(&model, &dataset, &pairs)?;
        println!(
            "{mode:?}: final mean loss {:.4e}, avg conditional W2 {w2:.4}",
            outcome.final_mean_loss
        );
    }
    Ok(())
}
