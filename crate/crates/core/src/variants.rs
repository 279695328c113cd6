//! Comparison models.
//!
//! All three variants share ingestion, likelihood, sampling, summaries and
//! validation. They differ only in how a country's latent design is built
//! ([`ModelKind::design`]) and in the correlation matrices used by the prior
//! on first differences.

use std::fmt;
use std::str::FromStr;

use crate::correlation::CorrelationMatrices;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::inference::{run_mcmc, Model, ModelSpec, PosteriorDraws, SamplerConfig};
use crate::model::{LatentDesign, PriorConfig};
use crate::spline::BasisSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Penalized splines with estimated cross-method correlations.
    Full,
    /// Penalized splines with independent methods.
    ZeroCov,
    /// Straight lines through the most recent survey year.
    Linear,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Full, ModelKind::ZeroCov, ModelKind::Linear];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Full => "full",
            ModelKind::ZeroCov => "zero_cov",
            ModelKind::Linear => "linear",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            ModelKind::Full => 0,
            ModelKind::ZeroCov => 1,
            ModelKind::Linear => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(ModelKind::Full),
            1 => Ok(ModelKind::ZeroCov),
            2 => Ok(ModelKind::Linear),
            other => Err(Error::Validation(format!("unknown model code {other}"))),
        }
    }

    /// Latent design for one country.
    pub fn design(
        self,
        country: &str,
        recent_year: f64,
        window: (f64, f64),
        spacing: f64,
        grid: &[f64],
    ) -> Result<LatentDesign> {
        match self {
            ModelKind::Full | ModelKind::ZeroCov => Ok(LatentDesign::Spline(BasisSet::new(
                country,
                recent_year,
                window,
                spacing,
                grid,
            )?)),
            ModelKind::Linear => Ok(LatentDesign::Linear {
                anchor_year: recent_year,
            }),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(ModelKind::Full),
            "zero_cov" => Ok(ModelKind::ZeroCov),
            "linear" => Ok(ModelKind::Linear),
            other => Err(Error::Config(format!(
                "unknown model `{other}` (expected full, zero_cov or linear)"
            ))),
        }
    }
}

/// Latent logit under the linear model; `centered_year` is the year minus the
/// country's most recent survey year.
pub fn linear_latent(alpha: f64, slope: f64, centered_year: f64) -> f64 {
    alpha + slope * centered_year
}

/// Fits one variant with a fixed correlation plug-in. `ZeroCov` always uses
/// identity correlations; `Full` and `Linear` use `rho`.
pub fn fit_variant(
    kind: ModelKind,
    dataset: &Dataset,
    rho: &CorrelationMatrices,
    prior: &PriorConfig,
    spacing: f64,
    cfg: &SamplerConfig,
) -> Result<PosteriorDraws> {
    let spec = ModelSpec::build(dataset, kind, spacing)?;
    let rho = match kind {
        ModelKind::ZeroCov => CorrelationMatrices::identity(dataset.methods.len()),
        ModelKind::Full | ModelKind::Linear => rho.clone(),
    };
    let model = Model::new(spec.into(), dataset, rho, *prior)?;
    run_mcmc(&model, cfg)
}
