//! Transfers points with a checkpointed field and with the two oracles,
//! and shows that antisymmetric fields leave points alone when the
//! conditions agree.
//!
//! cargo run --example transfer_and_oracles

use a2a_flow::data::{generate, GeneratorKind, GeneratorSpec};
use a2a_flow::flow::{Checkpoint, FieldMode, TimeEmbedding, VectorFieldSpec};
use a2a_flow::transport::{oracle_map, transfer, ModelTransfer, OdeConfig, OracleKind, OracleMap};
use std::f64::consts::FRAC_PI_4;

fn main() -> a2a_flow::Result<()> {
    // analytic polar oracle: rotation that keeps the radius
    let x = [1.5, 0.0];
    let y = transfer(&OracleMap::PolarAnalytic, &x, &[0.0], &[FRAC_PI_4])?;
    println!("polar oracle: {x:?} at 0 -> {y:.4?} at pi/4");

    // empirical oracle: exact assignment between two groups
    let grouped = generate(&GeneratorSpec {
        kind: GeneratorKind::GroupedMixture,
        n_samples: 300,
        seed: 0,
    })?;
    let oracle = oracle_map(&grouped, OracleKind::EmpiricalGrouped)?;
    let src = grouped
        .samples
        .iter()
        .find(|s| s.c == [0.0])
        .expect("condition 0 present");
    let img = transfer(&oracle, &src.x, &[0.0], &[2.0])?;
    println!(
        "grouped oracle: {:.3?} in condition 0 -> {img:.3?} in condition 2",
        src.x
    );

    // an untrained antisymmetric field, saved and reloaded
    let spec = VectorFieldSpec::new(
        FieldMode::Antisymmetric,
        2,
        1,
        TimeEmbedding::Raw,
        &[32, 32],
        5,
    )?;
    let path = std::env::temp_dir().join("a2a_example_checkpoint.json");
    spec.to_checkpoint(None, 5, 0).save(&path)?;
    let loaded = Checkpoint::load(&path)?.to_spec()?;
    let model = ModelTransfer {
        spec: &loaded,
        ode: OdeConfig::default(),
    };
    let same = transfer(&model, &[1.2, 0.7], &[0.5], &[0.5])?;
    let there = transfer(&model, &[1.2, 0.7], &[0.5], &[1.0])?;
    let back = transfer(&model, &there, &[1.0], &[0.5])?;
    println!(
        "antisymmetric field: same condition {same:?}, there {there:.4?}, and back {back:.6?}"
    );
    Ok(())
}
