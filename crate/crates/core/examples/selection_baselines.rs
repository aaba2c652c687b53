//! IWV and DEV pick one model; IWA combines them.

use std::sync::Arc;

use iwa::aggregation::{iwa, predict_aggregated};
use iwa::datasets::SincShift;
use iwa::metrics::risk_from_predictions;
use iwa::models::{fit_ridge_with, FeatureMap, ModelSequence, SharedModel};
use iwa::selection::{dev_select, iwv_select, select_as_aggregation, Loss};

fn main() -> iwa::Result<()> {
    let setting = SincShift::new(500, 500, 20_000, 11);
    let inst = setting.generate()?;
    let beta = setting.density_ratio(50.0)?;
    let models: Vec<SharedModel> = (0..5)
        .map(|d| {
            fit_ridge_with(
                FeatureMap::polynomial(1, d),
                &inst.source.x,
                &inst.source.y,
                1e-6,
            )
            .map(|m| Arc::new(m) as SharedModel)
        })
        .collect::<iwa::Result<_>>()?;
    let seq = ModelSequence::new(models)?;
    let eval = &inst.target_eval;
    let risk = |w: &[f64]| -> iwa::Result<f64> {
        Ok(risk_from_predictions(&predict_aggregated(&seq, w, &eval.x)?, &eval.y)?.mean)
    };

    let iwv = iwv_select(&seq, &inst.source, &beta, Loss::Squared)?;
    let dev = dev_select(&seq, &inst.source, &beta, Loss::Squared)?;
    for sel in [&iwv, &dev] {
        let w = select_as_aggregation(sel, seq.len())?;
        println!(
            "{}: model {} (scores {:.4?}), target risk {:.4}",
            sel.method,
            sel.chosen_index,
            sel.scores,
            risk(&w)?
        );
    }
    let agg = iwa(&seq, &inst.source, &inst.target_x, &beta, 0.1)?;
    println!("iwa: target risk {:.4}", risk(&agg.weights)?);
    Ok(())
}
