//! Generates both synthetic families and round-trips one through CSV.
//!
//! cargo run --example datasets

use a2a_flow::data::{generate, load_csv, save_csv, GeneratorKind, GeneratorSpec};

fn main() -> a2a_flow::Result<()> {
    let grouped = generate(&GeneratorSpec {
        kind: GeneratorKind::GroupedMixture,
        n_samples: 3000,
        seed: 0,
    })?;
    for group in grouped.grouped.as_deref().unwrap_or_default() {
        let pts = grouped.group_points(group);
        let mean: Vec<f64> = (0..2)
            .map(|k| pts.iter().map(|p| p[k]).sum::<f64>() / pts.len() as f64)
            .collect();
        println!(
            "condition {:?}: {} samples, mean {:.3?}",
            group.condition,
            pts.len(),
            mean
        );
    }

    let polar = generate(&GeneratorSpec {
        kind: GeneratorKind::PolarQuadrant,
        n_samples: 5,
        seed: 0,
    })?;
    for s in &polar.samples {
        println!("x = {:.4?}, theta = {:.4}", s.x, s.c[0]);
    }

    let path = std::env::temp_dir().join("a2a_datasets_example.csv");
    save_csv(&polar, &path)?;
    let back = load_csv(&path)?;
    println!(
        "round trip through {} exact: {}",
        path.display(),
        back.samples == polar.samples
    );
    Ok(())
}
