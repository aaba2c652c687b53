//! Full pipeline on the transformed moons: a sequence of 14 classifiers with
//! increasing target-entropy weight, every method, one seed.

use iwa::harness::{run_seed, ExperimentConfig};

fn main() -> iwa::Result<()> {
    let cfg = ExperimentConfig::moons();
    let run = run_seed(&cfg, 3)?;
    let acc = run.model_accuracies.clone().unwrap_or_default();
    println!("single-model target accuracies {:.3?}", acc);
    for r in &run.reports {
        println!(
            "{:<12} accuracy {:.4}  risk {:.4}",
            r.method,
            r.target_accuracy.unwrap_or(f64::NAN),
            r.target_risk
        );
    }
    for f in &run.failures {
        println!("{:?} failed: {}", f.method, f.message);
    }
    Ok(())
}
