//! Ingests an observation CSV and prints what was kept, what was excluded
//! and the spread of the standard errors.
//!
//! ```text
//! cargo run --example ingest_and_se -- observations.csv [percent]
//! ```
//!
//! Without a path a simulated data set is used.

use supplyshare::data::{parse_observations, summarize_se, Dataset, IngestConfig, Units};
use supplyshare::simulate::{simulate, SimulationConfig};

fn main() -> supplyshare::Result<()> {
    let mut args = std::env::args().skip(1);
    let dataset: Dataset = match args.next() {
        Some(path) => {
            let units = match args.next().as_deref() {
                Some("percent") => Units::Percent,
                _ => Units::Fraction,
            };
            let config = IngestConfig {
                units,
                ..Default::default()
            };
            parse_observations(path, &config)?
        }
        None => simulate(&SimulationConfig::default())?.dataset,
    };

    println!(
        "{} observations, {} countries in {} regions, {} methods",
        dataset.len(),
        dataset.countries.len(),
        dataset.regions.len(),
        dataset.methods.len()
    );
    for c in &dataset.countries {
        println!(
            "  {:<28} {:<20} latest survey {}",
            c.name, c.region, c.recent_year
        );
    }
    if !dataset.exclusions.is_empty() {
        println!("{} observations left out of the likelihood:", dataset.exclusions.len());
        for e in &dataset.exclusions {
            let o = &dataset.observations[e.observation];
            println!("  {} {} {} {}: {}", o.country, o.method, o.sector, o.year, e.reason.code());
        }
    }

    let se = summarize_se(&dataset)?;
    println!(
        "standard errors: min {:.3}%, max {:.3}%, median {:.3}%",
        100.0 * se.min,
        100.0 * se.max,
        100.0 * se.median
    );
    for (method, mean) in se.per_method_mean {
        println!("  mean for {:<22}{:.3}%", method.label(), 100.0 * mean);
    }
    Ok(())
}
