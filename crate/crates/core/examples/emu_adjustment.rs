//! Scales public-sector service statistics up to all users with posterior
//! supply shares and derives estimated modern use.
//!
//! ```text
//! cargo run --release --example emu_adjustment
//! ```

use supplyshare::data::{Method, Sector};
use supplyshare::emu::{adjust_records, adjust_service_stat, compute_emu, AdjustMode, ServiceStatRecord};
use supplyshare::inference::SamplerConfig;
use supplyshare::model::PriorConfig;
use supplyshare::correlation::CorrelationMatrices;
use supplyshare::simulate::{simulate, SimulationConfig};
use supplyshare::spline::DEFAULT_SPACING;
use supplyshare::variants::{fit_variant, ModelKind};

fn main() -> supplyshare::Result<()> {
    // By hand: 120k injectable users reported by public clinics, public share 60%.
    let adjusted = adjust_service_stat(120_000.0, &[0.55, 0.6, 0.65])?;
    println!("adjusted users per share draw: {:?}", adjusted.draws);
    let emu = compute_emu(&adjusted.draws, 2_500_000.0)?;
    println!("EMU per draw: {:?}\n", emu.draws);

    let sim = simulate(&SimulationConfig {
        seed: 5,
        ..Default::default()
    })?;
    let cfg = SamplerConfig {
        n_warmup: 500,
        n_samples: 500,
        seed: 1,
        ..Default::default()
    };
    let draws = fit_variant(
        ModelKind::ZeroCov,
        &sim.dataset,
        &CorrelationMatrices::identity(sim.dataset.methods.len()),
        &PriorConfig::default(),
        DEFAULT_SPACING,
        &cfg,
    )?;

    let country = sim.dataset.countries[0].name.clone();
    let records: Vec<ServiceStatRecord> = [(Method::Injectables, 120_000.0), (Method::Implants, 45_000.0), (Method::OcPills, 80_000.0)]
        .into_iter()
        .map(|(method, y_raw)| ServiceStatRecord {
            country: country.clone(),
            method,
            sector: Sector::Public,
            year: 2018.0,
            y_raw,
            wra: Some(2_500_000.0),
        })
        .collect();
    for mode in [AdjustMode::Posterior, AdjustMode::LatestSurvey] {
        let (results, emu) = adjust_records(&records, &draws, mode, &sim.dataset.observations)?;
        println!("{mode:?}");
        for r in &results {
            let i = &r.adjusted.summary;
            println!(
                "  {:<14} {:>9.0} users (95% {:.0} to {:.0})",
                r.record.method.label(),
                i.median,
                i.lo95,
                i.hi95
            );
        }
        for e in &emu {
            let i = &e.emu.summary;
            println!("  EMU {} {}: {:.3} (95% {:.3} to {:.3})", e.country, e.year, i.median, i.lo95, i.hi95);
        }
    }
    Ok(())
}
