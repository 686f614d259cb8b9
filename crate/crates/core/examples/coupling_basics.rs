//! Builds the three coupling costs for a tiny batch pair and solves each.
//!
//! cargo run --example coupling_basics

use a2a_flow::coupling::{
    cost_matrix, solve_assignment, BatchPair, CostMode, LabeledSample, SolveMethod,
};

fn main() -> a2a_flow::Result<()> {
    let b1 = vec![
        LabeledSample::new(vec![0.0], vec![0.0]),
        LabeledSample::new(vec![0.0], vec![1.0]),
        LabeledSample::new(vec![1.0], vec![1.0]),
    ];
    let b2 = vec![
        LabeledSample::new(vec![2.0], vec![0.0]),
        LabeledSample::new(vec![3.0], vec![1.0]),
        LabeledSample::new(vec![0.5], vec![0.0]),
    ];
    let pair = BatchPair::new(b1, b2)?;

    for mode in [CostMode::Plain, CostMode::Cot, CostMode::A2a] {
        let cost = cost_matrix(&pair, 2.0, mode)?;
        let exact = solve_assignment(&cost, SolveMethod::Exact)?;
        let brute = solve_assignment(&cost, SolveMethod::Brute)?;
        println!("{mode} cost (beta = 2):");
        for i in 0..cost.n() {
            println!("  {:?}", cost.row(i));
        }
        println!(
            "  pi = {:?}, total {} = transport {} + 2 * condition {} (brute force: {})",
            exact.permutation,
            exact.total_cost,
            exact.transport_cost,
            exact.condition_cost,
            brute.total_cost
        );
    }
    Ok(())
}
