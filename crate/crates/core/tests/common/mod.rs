#![allow(dead_code)]

use supplyshare::data::{Dataset, IngestConfig, Method, Observation, Sector};
use supplyshare::simulate::{simulate, SimulationConfig};

pub fn obs(country: &str, region: &str, method: Method, sector: Sector, year: f64, y: f64, se: f64) -> Observation {
    Observation {
        country: country.into(),
        region: region.into(),
        method,
        sector,
        year,
        proportion: y,
        se,
    }
}

/// Two countries, two methods, three surveys each.
pub fn small_simulation(seed: u64) -> Dataset {
    simulate(&SimulationConfig {
        n_countries: 2,
        n_regions: 1,
        methods: vec![Method::OcPills, Method::Injectables],
        seed,
        ..Default::default()
    })
    .unwrap()
    .dataset
}

pub fn ingest(observations: Vec<Observation>) -> Dataset {
    Dataset::from_observations(
        observations,
        &IngestConfig {
            share_sum_tolerance: f64::INFINITY,
            ..Default::default()
        },
    )
    .unwrap()
}
