//! Exact and classifier-based density ratios on the two benchmarks.

use iwa::datasets::{MoonsShift, SincShift};
use iwa::density_ratio::{
    fit_domain_classifier, normalized_weights, DensityRatio, DomainClassifierConfig,
};

fn main() -> iwa::Result<()> {
    let sinc = SincShift::new(2000, 2000, 10, 1);
    let inst = sinc.generate()?;
    let exact = sinc.density_ratio(50.0)?;
    let learned = fit_domain_classifier(
        &inst.source.x,
        &inst.target_x,
        &DomainClassifierConfig::default(),
    )?;
    for x in [0.5, 1.0, 1.5, 2.0] {
        println!(
            "sinc x = {x}: exact {:.3}  learned {:.3}",
            exact.weight(&[x]),
            learned.weight(&[x])
        );
    }
    println!(
        "mean over source: exact {:.3}, learned {:.3}",
        normalized_weights(&exact, &inst.source.x)?.mean,
        normalized_weights(&learned, &inst.source.x)?.mean
    );

    let moons = MoonsShift::new(1000, 1000, 10, 0.2, 1);
    let inst = moons.generate()?;
    let exact = moons.density_ratio(50.0)?;
    let cfg = DomainClassifierConfig {
        degree: 2,
        ..Default::default()
    };
    let learned = fit_domain_classifier(&inst.source.x, &inst.target_x, &cfg)?;
    for x in inst.target_x.iter_rows().take(5) {
        println!(
            "moons target point ({:.2}, {:.2}): exact {:.3}  learned {:.3}",
            x[0],
            x[1],
            exact.weight(x),
            learned.weight(x)
        );
    }
    Ok(())
}
