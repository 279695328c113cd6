//! Simulates data, runs the independent-methods fit, estimates the
//! cross-method correlations and refits with them.
//!
//! ```text
//! cargo run --release --example two_stage_fit
//! ```

use supplyshare::correlation::{two_stage_fit, MaskMode};
use supplyshare::data::{Method, Sector};
use supplyshare::inference::{diagnostics, summarize, SamplerConfig};
use supplyshare::model::PriorConfig;
use supplyshare::simulate::{simulate, SimulationConfig};
use supplyshare::spline::DEFAULT_SPACING;

fn main() -> supplyshare::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let sim = simulate(&SimulationConfig {
        seed: 3,
        ..Default::default()
    })?;
    let cfg = SamplerConfig {
        n_warmup: 1000,
        n_samples: 1000,
        seed: 11,
        ..Default::default()
    };
    let fit = two_stage_fit(&sim.dataset, &PriorConfig::default(), DEFAULT_SPACING, &cfg, MaskMode::Country)?;

    println!("estimated public-sector correlations:\n{:.2}", fit.rho.rho[0]);
    let report = diagnostics(&fit.full)?;
    println!(
        "max split R-hat {:.3}, min ESS {:.0}, {} of {} parameters flagged",
        report.max_rhat(),
        report.min_ess(),
        report.flagged().count(),
        report.params.len()
    );

    let country = &sim.dataset.countries[0].name;
    let truth = sim.truth_for(country, Method::Injectables).expect("simulated cell");
    println!("{country}, injectables, public sector:");
    println!("{:>6}{:>9}{:>9}{:>9}{:>9}", "year", "truth", "median", "lo95", "hi95");
    for s in summarize(&fit.full)?
        .iter()
        .filter(|s| &s.country == country && s.method == Method::Injectables && s.sector == Sector::Public)
        .step_by(5)
    {
        let i = &s.interval;
        println!(
            "{:>6}{:>9.3}{:>9.3}{:>9.3}{:>9.3}",
            s.year,
            truth.shares(s.year)?.phi1,
            i.median,
            i.lo95,
            i.hi95
        );
    }
    Ok(())
}
