//! Holds out each country's latest survey and compares the full, zero
//! covariance and linear models on curved simulated trends.
//!
//! ```text
//! cargo run --release --example compare_variants
//! ```

use supplyshare::correlation::MaskMode;
use supplyshare::inference::SamplerConfig;
use supplyshare::model::PriorConfig;
use supplyshare::simulate::{simulate, SimulationConfig, TruthShape};
use supplyshare::spline::DEFAULT_SPACING;
use supplyshare::validation::{validate, IntervalMode};
use supplyshare::variants::ModelKind;

fn main() -> supplyshare::Result<()> {
    let sim = simulate(&SimulationConfig {
        shape: TruthShape::Saturating {
            amplitude: 2.0,
            mid: 2008.0,
            width: 2.0,
        },
        seed: 8,
        ..Default::default()
    })?;
    let cfg = SamplerConfig {
        n_warmup: 600,
        n_samples: 600,
        seed: 2,
        ..Default::default()
    };
    let run = validate(
        &sim.dataset,
        &ModelKind::ALL,
        &PriorConfig::default(),
        DEFAULT_SPACING,
        &cfg,
        MaskMode::Country,
        IntervalMode::Predictive,
    )?;
    for report in &run.reports {
        println!("{report}");
        println!("overall 95% coverage {:.1}%\n", report.overall_coverage());
    }
    Ok(())
}
