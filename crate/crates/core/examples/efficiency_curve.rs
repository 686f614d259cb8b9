//! Sampling-efficiency curve and AUC from paired similarity / error scores.
//!
//! cargo run --example efficiency_curve

use a2a_flow::eval::efficiency_curve;

fn main() -> a2a_flow::Result<()> {
    let similarities = [0.1, 0.2, 0.3, 0.4];
    let errors = [0.0, 0.5, 0.25, 0.75];
    let curve = efficiency_curve(&similarities, &errors, 1.0)?;
    println!("threshold      x      y");
    for p in &curve.points {
        println!("{:>9.2} {:>6.2} {:>6.2}", p.threshold, p.x, p.y);
    }
    println!("AUC {}", curve.auc);

    let perfect = efficiency_curve(&similarities, &[0.0; 4], 1.0)?;
    println!("all-zero errors: AUC {}", perfect.auc);
    Ok(())
}
