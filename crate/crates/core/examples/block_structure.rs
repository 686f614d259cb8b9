//! With discrete conditions and a large enough beta, the optimal coupling
//! never leaves the blocks of equal condition pairs, and inside each block
//! it is plain optimal transport.
//!
//! cargo run --example block_structure

use a2a_flow::coupling::{
    block_partition, cost_matrix, solve_assignment, sufficient_beta, BatchPair, CostMode,
    LabeledSample, SolveMethod,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> a2a_flow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut side = |n: usize| -> Vec<LabeledSample> {
        (0..n)
            .map(|_| {
                let c = rng.gen_range(0..3) as f64;
                LabeledSample::new(
                    vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                    vec![c],
                )
            })
            .collect()
    };
    let pair = BatchPair::new(side(24), side(24))?;
    let blocks = block_partition(&pair, 0.0);
    let beta = sufficient_beta(&pair, 0.0)?;
    println!("{} blocks, sufficient beta {beta:.1}", blocks.blocks.len());

    for b in [0.0, 1.0, beta] {
        let cost = cost_matrix(&pair, b, CostMode::A2a)?;
        let a = solve_assignment(&cost, SolveMethod::Exact)?;
        println!(
            "beta {b:>8.1}: preserves blocks = {}",
            a.preserves_blocks(&blocks)
        );
    }

    let cost = cost_matrix(&pair, beta, CostMode::A2a)?;
    let a = solve_assignment(&cost, SolveMethod::Exact)?;
    for block in &blocks.blocks {
        let idx = &block.indices;
        let local: Vec<usize> = idx
            .iter()
            .map(|&i| {
                idx.iter()
                    .position(|&k| k == a.permutation[i])
                    .expect("block preserved")
            })
            .collect();
        let restricted = cost.restrict(idx, idx)?;
        let best = solve_assignment(&restricted, SolveMethod::Exact)?;
        println!(
            "block c1 = {:?}, c2 = {:?}, size {}: cost {:.4}, block OT {:.4}",
            block.c1,
            block.c2,
            idx.len(),
            restricted.permutation_cost(&local).0,
            best.total_cost
        );
    }
    Ok(())
}
