//! Drives the same pipeline as the `supplyshare` binary from code: resolve a
//! configuration, fit into a run directory and export plot-ready files.
//!
//! ```text
//! cargo run --release --example run_directory -- observations.csv out_dir
//! ```
//!
//! Without arguments a simulated dataset is fitted under the system temp
//! directory.

use std::path::PathBuf;

use supplyshare::app::{cmd_export, cmd_fit, ConfigFile, ExportKind, RunConfig, RunDir};
use supplyshare::simulate::{simulate, SimulationConfig};
use supplyshare::Error;

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn main() -> supplyshare::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let scratch = std::env::temp_dir().join("supplyshare_run_directory");
    let data = match args.next() {
        Some(path) => PathBuf::from(path),
        None => {
            std::fs::create_dir_all(&scratch).map_err(io_err(&scratch))?;
            let path = scratch.join("simulated.csv");
            let sim = simulate(&SimulationConfig {
                seed: 3,
                ..Default::default()
            })?;
            let file = std::fs::File::create(&path).map_err(io_err(&path))?;
            sim.dataset.write_csv(file)?;
            path
        }
    };
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| scratch.join("run"));

    let file = ConfigFile::parse(
        r#"
        model = "full"
        window_start = 1990
        window_end = 2025

        [sampler]
        chains = 4
        warmup = 500
        samples = 500

        [export]
        svg = true
        "#,
    )?;
    let file = file.with_overrides(&[
        format!("data={data:?}"),
        format!("output={out:?}"),
        "sampler.seed=2024".to_string(),
    ])?;
    let config = RunConfig::from_file(&file)?;
    let dir = cmd_fit(&config)?;

    let run = RunDir::open(&dir)?;
    println!("run {} (manifest {})", dir.display(), run.manifest);
    let kinds = [ExportKind::Summaries, ExportKind::RhoHeatmap, ExportKind::Basis];
    for path in cmd_export(&run, &kinds, &dir.join("export"), config.svg)? {
        println!("  {}", path.display());
    }
    Ok(())
}
