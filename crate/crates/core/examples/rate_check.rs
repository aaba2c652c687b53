//! Distance between the importance weighted and the oracle coefficients as
//! the sample sizes grow. Writes `out/rate`.

use iwa::datasets::SincScale;
use iwa::harness::{rate_check, ExperimentConfig};

fn main() -> iwa::Result<()> {
    for scale in [SincScale::BothStd, SincScale::Variance] {
        let cfg = ExperimentConfig {
            seeds: (0..10).collect(),
            eval_size: 50_000,
            sinc_scale: scale,
            out: format!("out/rate/{scale:?}").into(),
            ..ExperimentConfig::sinc()
        };
        let r = rate_check(&cfg)?;
        println!("{scale:?}: medians {:.4?} slope {:.3}", r.medians, r.slope);
    }
    Ok(())
}
