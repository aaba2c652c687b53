//! Adds corrupted copies of the models and reports how much each method
//! loses. Writes tables and a line chart to `out/sensitivity`.

use iwa::harness::{run_sensitivity, ExperimentConfig};

fn main() -> iwa::Result<()> {
    let cfg = ExperimentConfig {
        seeds: (0..3).collect(),
        counts: vec![0, 10, 50],
        out: "out/sensitivity".into(),
        ..ExperimentConfig::moons()
    };
    let report = run_sensitivity(&cfg)?;
    for d in &report.drops {
        println!("{:<12} median accuracy drop {:+.4}", d.method, d.median);
    }
    println!("{:?}", report.gate);
    Ok(())
}
