//! Checks the analytic flow-matching gradient against central finite
//! differences for both field parametrizations.
//!
//! cargo run --example gradient_check

use a2a_flow::flow::{fm_loss_and_grad, FieldMode, PathSample, TimeEmbedding, VectorFieldSpec};
use a2a_flow::smallnet::compare_with_finite_differences;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> a2a_flow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for mode in [FieldMode::Direct, FieldMode::Antisymmetric] {
        let spec = VectorFieldSpec::new(
            mode,
            2,
            1,
            TimeEmbedding::Sinusoidal { frequencies: 3 },
            &[16, 16],
            1,
        )?;
        let paths: Vec<PathSample> = (0..8)
            .map(|_| PathSample {
                x_t: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                t: rng.gen(),
                target_velocity: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                c1: vec![rng.gen_range(0.0..1.5)],
                c2: vec![rng.gen_range(0.0..1.5)],
            })
            .collect();
        let (loss, grads) = fm_loss_and_grad(&spec, &paths)?;
        let report = compare_with_finite_differences(
            |flat| {
                let net = spec.net.with_flat(flat).expect("same length");
                let probe = VectorFieldSpec {
                    net,
                    ..spec.clone()
                };
                fm_loss_and_grad(&probe, &paths).expect("valid paths").0
            },
            &spec.net.to_flat(),
            &grads.to_flat(),
            &spec.net.block_layout(),
            1e-5,
        );
        println!(
            "{mode:?}: loss {loss:.4}, {} parameters",
            spec.net.n_params()
        );
        for b in &report.blocks {
            println!("  {:<12} max rel error {:.2e}", b.name, b.max_rel_error);
        }
    }
    Ok(())
}
