//! Five polynomial ridge models on the shifted sinc data, aggregated with
//! the exact density ratio and compared to the oracle combination.

use std::sync::Arc;

use iwa::aggregation::{iwa, oracle_weights, predict_aggregated, scaled_weights};
use iwa::datasets::SincShift;
use iwa::metrics::{empirical_risk, risk_from_predictions};
use iwa::models::{fit_ridge_with, FeatureMap, ModelSequence, SharedModel};

fn main() -> iwa::Result<()> {
    let setting = SincShift::new(2000, 2000, 100_000, 7);
    let inst = setting.generate()?;
    let beta = setting.density_ratio(50.0)?;

    let mut models = Vec::new();
    for degree in 0..5 {
        let m = fit_ridge_with(
            FeatureMap::polynomial(1, degree),
            &inst.source.x,
            &inst.source.y,
            1e-6,
        )?;
        models.push(Arc::new(m) as SharedModel);
    }
    let seq = ModelSequence::new(models)?;

    let eval = &inst.target_eval;
    for (i, m) in seq.iter().enumerate() {
        println!(
            "model {i}: target risk {:.4}",
            empirical_risk(m.as_ref(), &eval.x, &eval.y)?
        );
    }

    let agg = iwa(&seq, &inst.source, &inst.target_x, &beta, 0.1)?;
    let oracle = oracle_weights(&seq, eval, 0.1)?;
    let risk = |w: &[f64]| -> iwa::Result<f64> {
        Ok(risk_from_predictions(&predict_aggregated(&seq, w, &eval.x)?, &eval.y)?.mean)
    };
    println!(
        "iwa    risk {:.4}  scaled weights {:.3?}",
        risk(&agg.weights)?,
        scaled_weights(&agg.weights)
    );
    println!(
        "oracle risk {:.4}  scaled weights {:.3?}",
        risk(&oracle.weights)?,
        scaled_weights(&oracle.weights)
    );
    println!("{}", agg.to_json()?);
    Ok(())
}
