//! Likelihood, posterior, sampler, diagnostics and summaries.

pub mod diagnostics;
pub mod draws;
pub mod likelihood;
pub mod posterior;
pub mod sampler;
pub mod summary;

pub use diagnostics::{diagnostics, DiagnosticsReport};
pub use draws::{ChainDraws, PosteriorDraws};
pub use likelihood::{truncnorm_cdf, truncnorm_logpdf};
pub use posterior::{log_likelihood, Model, ModelSpec, ObservationIndex};
pub use sampler::{run_mcmc, run_mcmc_with, RunOptions, SamplerConfig};
pub use summary::{summarize, write_summaries, EstimateSummary, Interval};
