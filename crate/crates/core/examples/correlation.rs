//! Pearson correlation between aggregation weights and the target accuracy
//! of each model. Writes `out/correlation`.

use iwa::harness::{run_correlation, ExperimentConfig, Method};

fn main() -> iwa::Result<()> {
    let cfg = ExperimentConfig {
        seeds: (0..5).collect(),
        methods: vec![Method::Iwa, Method::Sor, Method::Tmr, Method::Tcr],
        out: "out/correlation".into(),
        ..ExperimentConfig::moons()
    };
    let report = run_correlation(&cfg)?;
    for (m, q) in report.summary() {
        println!(
            "{m:<5} r: min {:.3} q25 {:.3} median {:.3} q75 {:.3} max {:.3}",
            q[0], q[1], q[2], q[3], q[4]
        );
    }
    Ok(())
}
