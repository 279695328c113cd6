//! Simulates survey observations from the hierarchical model and writes
//! them in the ingest CSV format.
//!
//! ```text
//! cargo run --example simulate_data -- simulated.csv [seed]
//! ```

use std::fs::File;

use supplyshare::simulate::{simulate, SimulationConfig};

fn main() -> supplyshare::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "simulated.csv".into());
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    let sim = simulate(&SimulationConfig {
        seed,
        ..Default::default()
    })?;
    let file = File::create(&path).map_err(|e| supplyshare::Error::Io {
        path: path.clone(),
        source: e,
    })?;
    sim.dataset.write_csv(file)?;

    println!(
        "{} observations for {} countries written to {path}",
        sim.dataset.len(),
        sim.dataset.countries.len()
    );
    for c in &sim.dataset.countries {
        println!("  {} ({}): surveys in {:?}", c.name, c.region, sim.dataset.survey_years(&c.name));
    }
    Ok(())
}
