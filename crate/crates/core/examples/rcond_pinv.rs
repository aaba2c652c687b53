//! Thresholded pseudo-inverse and what it does to duplicated models.

use iwa::aggregation::ols_from_outputs;
use iwa::linalg::{pinv_rcond, Matrix};

fn main() -> iwa::Result<()> {
    let g = Matrix::from_diag(&[4.0, 0.2]);
    let p = pinv_rcond(&g, 0.1)?;
    println!(
        "pinv(diag(4, 0.2), rcond 0.1) = {:?}, rank {}",
        p.matrix, p.rank
    );
    let p = pinv_rcond(&g, 0.01)?;
    println!(
        "pinv(diag(4, 0.2), rcond 0.01) = {:?}, rank {}",
        p.matrix, p.rank
    );

    // Three models where the last two are identical: the duplicate direction
    // is dropped and the two copies share the weight equally.
    let x: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
    let a = Matrix::column(&x)?;
    let b = a.map(|v| (3.0 * v).sin());
    let y = a.map(|v| 0.5 * v + 0.8 * (3.0 * v).sin());
    let outputs = vec![a, b.clone(), b];
    let r = ols_from_outputs("ols", &outputs, &y, 0.1)?;
    println!(
        "weights {:.6?}, rank kept {} of 3",
        r.weights, r.rank_retained
    );
    Ok(())
}
