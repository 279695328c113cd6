//! Round-trips posterior draws through the binary format, checks
//! convergence and exports a long-format CSV of every draw.
//!
//! ```text
//! cargo run --release --example draws_and_diagnostics -- out_dir
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter};

use supplyshare::correlation::CorrelationMatrices;
use supplyshare::inference::{diagnostics, PosteriorDraws, SamplerConfig};
use supplyshare::model::PriorConfig;
use supplyshare::simulate::{simulate, SimulationConfig};
use supplyshare::spline::DEFAULT_SPACING;
use supplyshare::variants::{fit_variant, ModelKind};
use supplyshare::Error;

fn main() -> supplyshare::Result<()> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let io = |path: &std::path::Path| {
        let path = path.display().to_string();
        move |e| Error::Io { path, source: e }
    };
    let sim = simulate(&SimulationConfig {
        n_countries: 2,
        seed: 9,
        ..Default::default()
    })?;
    let cfg = SamplerConfig {
        n_warmup: 500,
        n_samples: 500,
        thin: 2,
        seed: 17,
        ..Default::default()
    };
    let mut draws = fit_variant(
        ModelKind::Linear,
        &sim.dataset,
        &CorrelationMatrices::identity(sim.dataset.methods.len()),
        &PriorConfig::default(),
        DEFAULT_SPACING,
        &cfg,
    )?;
    draws.provenance = "draws_and_diagnostics example".into();

    let bin = out.join("draws.bin");
    draws.write_binary(BufWriter::new(File::create(&bin).map_err(io(&bin))?))?;
    let back = PosteriorDraws::read_binary(BufReader::new(File::open(&bin).map_err(io(&bin))?))?;
    for (a, b) in back.chains.iter().zip(&draws.chains) {
        assert_eq!(a.values, b.values);
    }
    println!(
        "{} chains x {} draws of {} parameters read back from {}",
        back.n_chains(),
        back.chains[0].n_draws,
        back.n_params(),
        bin.display()
    );

    let report = diagnostics(&back)?;
    println!(
        "max R-hat {:.3}, min ESS {:.0}, {:.0}% of acceptance rates within 0.1 of {}",
        report.max_rhat(),
        report.min_ess(),
        100.0 * report.fraction_near_target(0.1),
        report.target_accept
    );
    for p in report.flagged().take(10) {
        println!("  flagged {}: R-hat {:.3}, ESS {:.0}", p.name, p.rhat, p.ess);
    }

    let csv = out.join("draws.csv");
    back.write_csv(BufWriter::new(File::create(&csv).map_err(io(&csv))?))?;
    let diag = out.join("diagnostics.csv");
    report.write_csv(BufWriter::new(File::create(&diag).map_err(io(&diag))?))?;
    println!("wrote {} and {}", csv.display(), diag.display());
    Ok(())
}
