//! Bayesian hierarchical penalized-spline estimates of contraceptive supply
//! shares across the public, commercial medical and other private sectors.
//!
//! The pipeline: ingest survey observations ([`data`]), build per-country
//! spline bases ([`spline`]), sample the posterior ([`inference`]) in the
//! two-stage correlation scheme ([`correlation`]), summarize, validate
//! against held-out surveys ([`validation`]) and adjust service statistics
//! ([`emu`]). [`app`] ties the stages into reproducible run directories.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod correlation;
pub mod data;
pub mod emu;
pub mod error;
pub mod inference;
pub mod model;
pub mod plot;
pub mod regions;
pub mod simulate;
pub mod spline;
pub mod validation;
pub mod variants;

pub use error::{Error, Result};
