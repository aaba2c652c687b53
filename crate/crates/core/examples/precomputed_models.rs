//! Aggregating predictions that were computed elsewhere: each model is a
//! table of outputs on the source and target samples.

use iwa::aggregation::{iwa_from_outputs, one_hot};
use iwa::linalg::Matrix;
use iwa::models::{PrecomputedModel, Split};

fn main() -> iwa::Result<()> {
    let dir = std::env::temp_dir().join("iwa_precomputed_example");
    std::fs::create_dir_all(&dir).map_err(|e| iwa::Error::InvalidArgument(e.to_string()))?;

    // Two classes, 6 source and 4 target points, three "external" models.
    let labels = [0, 1, 1, 0, 1, 0];
    let y = one_hot(&labels, 2);
    let source_preds = [
        vec![0.9, 0.2, 0.3, 0.8, 0.1, 0.7],
        vec![0.6, 0.4, 0.5, 0.6, 0.4, 0.5],
        vec![0.2, 0.9, 0.8, 0.1, 0.7, 0.4],
    ];
    let target_preds = [
        vec![0.8, 0.3, 0.6, 0.2],
        vec![0.5, 0.5, 0.5, 0.5],
        vec![0.3, 0.6, 0.4, 0.9],
    ];

    let mut paths = Vec::new();
    for (k, (s, t)) in source_preds.iter().zip(&target_preds).enumerate() {
        let probs =
            |p: &[f64]| Matrix::from_rows(&p.iter().map(|&a| [a, 1.0 - a]).collect::<Vec<_>>());
        let model = PrecomputedModel::from_outputs(&probs(s)?, &probs(t)?)?;
        let path = dir.join(format!("model_{k}.csv"));
        model.save(&path)?;
        paths.push(path);
    }

    let models: Vec<PrecomputedModel> = paths
        .iter()
        .map(|p| PrecomputedModel::load(p))
        .collect::<iwa::Result<_>>()?;
    let src: Vec<Matrix> = models
        .iter()
        .map(|m| m.outputs(Split::Source, 6))
        .collect::<iwa::Result<_>>()?;
    let tgt: Vec<Matrix> = models
        .iter()
        .map(|m| m.outputs(Split::Target, 4))
        .collect::<iwa::Result<_>>()?;
    let beta = [1.0, 0.5, 1.5, 1.0, 1.2, 0.8];
    let agg = iwa_from_outputs(&src, &y, &beta, &tgt, 0.1)?;
    println!("{}", agg.to_json()?);
    Ok(())
}
