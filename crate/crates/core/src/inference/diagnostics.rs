//! Convergence diagnostics: split R-hat, multi-chain effective sample size
//! and acceptance rates.

use std::io::Write;

use crate::error::{Error, Result};
use crate::inference::draws::PosteriorDraws;

pub const RHAT_THRESHOLD: f64 = 1.05;
pub const ESS_THRESHOLD: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDiagnostic {
    pub name: String,
    /// `NaN` when every chain is constant.
    pub rhat: f64,
    pub ess: f64,
    /// Mean post-warmup acceptance rate over chains.
    pub acceptance: f64,
    pub degenerate: bool,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub params: Vec<ParamDiagnostic>,
    pub target_accept: f64,
}

impl DiagnosticsReport {
    pub fn flagged(&self) -> impl Iterator<Item = &ParamDiagnostic> {
        self.params.iter().filter(|p| p.flagged)
    }

    pub fn max_rhat(&self) -> f64 {
        self.params
            .iter()
            .filter(|p| !p.degenerate)
            .map(|p| p.rhat)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.params
            .iter()
            .filter(|p| !p.degenerate)
            .map(|p| p.ess)
            .fold(f64::INFINITY, f64::min)
    }

    /// Share of updated parameters whose acceptance lies within `tol` of the
    /// target.
    pub fn fraction_near_target(&self, tol: f64) -> f64 {
        let rates: Vec<f64> = self
            .params
            .iter()
            .map(|p| p.acceptance)
            .filter(|a| a.is_finite())
            .collect();
        if rates.is_empty() {
            return f64::NAN;
        }
        rates.iter().filter(|a| (*a - self.target_accept).abs() <= tol).count() as f64 / rates.len() as f64
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["parameter", "rhat", "ess", "acceptance", "flag"])?;
        for p in &self.params {
            let flag = if p.degenerate {
                "degenerate"
            } else if p.flagged {
                "flagged"
            } else {
                ""
            };
            w.write_record([
                p.name.clone(),
                format!("{:.4}", p.rhat),
                format!("{:.1}", p.ess),
                format!("{:.3}", p.acceptance),
                flag.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<diagnostics csv>", e))?;
        Ok(())
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Split R-hat. Each chain is halved; returns `NaN` when all halves are
/// constant.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    let halves = split_chains(chains)?;
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let w = mean(&halves.iter().map(|h| variance(h)).collect::<Vec<_>>());
    let b = n * variance(&means);
    if w == 0.0 {
        return Ok(if b == 0.0 { f64::NAN } else { f64::INFINITY });
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok((var_plus / w).sqrt())
}

fn split_chains(chains: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if chains.len() < 2 {
        return Err(Error::Validation("diagnostics need at least 2 chains".into()));
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < 4 {
        return Err(Error::Validation(format!("diagnostics need at least 4 draws per chain, got {n}")));
    }
    let half = n / 2;
    Ok(chains
        .iter()
        .flat_map(|c| [c[..half].to_vec(), c[n - half..n].to_vec()])
        .collect())
}

/// Multi-chain effective sample size with Geyer's initial monotone
/// sequence estimator on split chains.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Result<f64> {
    let halves = split_chains(chains)?;
    let m = halves.len() as f64;
    let n = halves[0].len();
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let vars: Vec<f64> = halves.iter().map(|h| variance(h)).collect();
    let w = mean(&vars);
    let b_over_n = variance(&means);
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b_over_n;
    if var_plus == 0.0 {
        return Ok(f64::NAN);
    }
    let autocov = |lag: usize| -> f64 {
        halves
            .iter()
            .zip(&means)
            .map(|(h, &mu)| {
                (0..n - lag).map(|t| (h[t] - mu) * (h[t + lag] - mu)).sum::<f64>() / n as f64
            })
            .sum::<f64>()
            / m
    };
    let rho = |lag: usize| 1.0 - (w - autocov(lag)) / var_plus;
    // Sum of paired autocorrelations, truncated at the first negative pair
    // and forced monotone.
    let mut sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = if t == 0 { 1.0 + rho(1) } else { rho(t) + rho(t + 1) };
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum += pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = (-1.0 + 2.0 * sum).max(1.0 / (m * n as f64).log10().max(1.0));
    Ok(m * n as f64 / tau)
}

/// Per-parameter convergence report.
pub fn diagnostics(draws: &PosteriorDraws) -> Result<DiagnosticsReport> {
    if draws.n_chains() < 2 {
        return Err(Error::Validation("diagnostics need at least 2 chains".into()));
    }
    let names = draws.spec.param_names();
    let params = (0..draws.n_params())
        .map(|p| {
            let chains = draws.param_chains(p);
            let rhat = split_rhat(&chains)?;
            let ess = effective_sample_size(&chains)?;
            let rates: Vec<f64> = draws
                .chains
                .iter()
                .map(|c| c.acceptance[p])
                .filter(|a| a.is_finite())
                .collect();
            let acceptance = if rates.is_empty() { f64::NAN } else { mean(&rates) };
            let degenerate = rhat.is_nan();
            let flagged = degenerate || rhat > RHAT_THRESHOLD || ess < ESS_THRESHOLD;
            Ok(ParamDiagnostic {
                name: names[p].clone(),
                rhat,
                ess,
                acceptance,
                degenerate,
                flagged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagnosticsReport {
        params,
        target_accept: draws.config.target_accept_scalar,
    })
}
