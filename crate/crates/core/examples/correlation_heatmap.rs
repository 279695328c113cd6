//! Recovers cross-method correlations from an independent-methods fit and
//! renders them as SVG heat maps.
//!
//! ```text
//! cargo run --release --example correlation_heatmap -- out_dir
//! ```

use nalgebra::DMatrix;
use supplyshare::correlation::{correlations_from_stage1, CorrelationMatrices, MaskMode};
use supplyshare::inference::SamplerConfig;
use supplyshare::model::PriorConfig;
use supplyshare::plot::heatmap;
use supplyshare::simulate::{simulate, SimulationConfig};
use supplyshare::spline::DEFAULT_SPACING;
use supplyshare::variants::{fit_variant, ModelKind};
use supplyshare::Error;

fn main() -> supplyshare::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("supplyshare_heatmaps"));
    std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.display().to_string(), source: e })?;
    // Strongly linked pills and injectables in both sectors.
    let mut truth = DMatrix::identity(5, 5);
    truth[(1, 4)] = 0.8;
    truth[(4, 1)] = 0.8;
    let rho = CorrelationMatrices::from_matrices([truth.clone(), truth])?;
    let sim = simulate(&SimulationConfig {
        n_countries: 8,
        // Precise, frequent surveys; with sparse data the stage-1 medians
        // shrink toward zero and the estimate is attenuated.
        surveys_per_country: 8,
        survey_gap: (2, 3),
        se_range: (0.002, 0.004),
        rho: Some(rho),
        seed: 21,
        ..Default::default()
    })?;
    let cfg = SamplerConfig {
        n_warmup: 800,
        n_samples: 800,
        seed: 4,
        ..Default::default()
    };
    let n_m = sim.dataset.methods.len();
    let stage1 = fit_variant(
        ModelKind::ZeroCov,
        &sim.dataset,
        &CorrelationMatrices::identity(n_m),
        &PriorConfig::default(),
        DEFAULT_SPACING,
        &cfg,
    )?;

    let labels: Vec<&str> = sim.dataset.methods.iter().map(|m| m.label()).collect();
    for mode in [MaskMode::Country, MaskMode::CountryMethod] {
        let (deltas, estimated, regularized) = correlations_from_stage1(&stage1, &sim.dataset, mode)?;
        let kept: usize = deltas.countries.iter().map(|c| c.mask.iter().filter(|&&k| k).count()).sum();
        println!("{mode:?} mask keeps {kept} (country, difference, method) cells");
        println!("public:\n{:.2}", estimated.rho[0]);
        println!("smallest eigenvalue {:.2e}", regularized.min_eigenvalue());
        if mode == MaskMode::Country {
            for (s, name) in ["public", "private_medical"].iter().enumerate() {
                let r = &regularized.rho[s];
                let values: Vec<Vec<f64>> = (0..n_m).map(|i| r.row(i).iter().copied().collect()).collect();
                let path = out.join(format!("rho_{name}.svg"));
                std::fs::write(&path, heatmap(name, &labels, &values, &stage1.provenance))
                    .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}
