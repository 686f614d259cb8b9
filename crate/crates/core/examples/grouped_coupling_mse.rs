//! Couples two shuffled copies of the grouped mixture at a large beta and
//! scores the coupling, read as a map, against the per-pair OT oracle.
//!
//! cargo run --release --example grouped_coupling_mse -- [n_samples] [beta] [seed]

use std::time::Instant;

use a2a_flow::coupling::{block_partition, cost_matrix, solve_assignment, CostMode, SolveMethod};
use a2a_flow::data::{generate, sample_batch_pair, GeneratorKind, GeneratorSpec};
use a2a_flow::eval::{coupling_mse_from_oracle, EvalSpec};
use a2a_flow::transport::{oracle_map, OracleKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> a2a_flow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(3000);
    let beta: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1e4);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);

    let dataset = generate(&GeneratorSpec {
        kind: GeneratorKind::GroupedMixture,
        n_samples: n,
        seed,
    })?;
    let oracle = oracle_map(&dataset, OracleKind::EmpiricalGrouped)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let pair = sample_batch_pair(&dataset, dataset.len(), &mut rng)?;

    let started = Instant::now();
    let cost = cost_matrix(&pair, beta, CostMode::A2a)?;
    let assignment = solve_assignment(&cost, SolveMethod::Exact)?;
    println!(
        "coupled {n} samples at beta {beta} in {:?}",
        started.elapsed()
    );

    let blocks = block_partition(&pair, 0.0);
    println!(
        "{} blocks, block-preserving: {}",
        blocks.blocks.len(),
        assignment.preserves_blocks(&blocks)
    );
    let mse = coupling_mse_from_oracle(&pair, &assignment, &oracle, &EvalSpec::default())?;
    println!(
        "mse {:.4e} +- {:.2e} over {} runs",
        mse.mean, mse.std, mse.runs
    );
    Ok(())
}
