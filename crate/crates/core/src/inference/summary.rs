//! Pointwise posterior summaries of supply shares.
//!
//! Quantiles use linear interpolation between order statistics (type 7):
//! for sorted `x[0..n]` and probability `p`, `h = (n - 1) p` and the result
//! is `x[floor(h)] + (h - floor(h)) (x[floor(h) + 1] - x[floor(h)])`.

use std::io::Write;

use crate::data::{Method, Sector};
use crate::error::{Error, Result};
use crate::inference::draws::PosteriorDraws;

pub const MIN_SUMMARY_DRAWS: usize = 100;

/// Type-7 quantile of already sorted values.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

/// Median with 80% and 95% equal-tailed intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub median: f64,
    pub lo80: f64,
    pub hi80: f64,
    pub lo95: f64,
    pub hi95: f64,
}

impl Interval {
    pub fn from_draws(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            median: quantile_sorted(&v, 0.5),
            lo80: quantile_sorted(&v, 0.1),
            hi80: quantile_sorted(&v, 0.9),
            lo95: quantile_sorted(&v, 0.025),
            hi95: quantile_sorted(&v, 0.975),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSummary {
    pub country: String,
    pub method: Method,
    pub sector: Sector,
    pub year: f64,
    pub interval: Interval,
}

/// Summaries for every country, method, sector and grid year.
pub fn summarize(draws: &PosteriorDraws) -> Result<Vec<EstimateSummary>> {
    let n = draws.total_draws();
    if n < MIN_SUMMARY_DRAWS {
        return Err(Error::Validation(format!(
            "{n} retained draws; summaries need at least {MIN_SUMMARY_DRAWS}"
        )));
    }
    let spec = &draws.spec;
    let mut out = Vec::with_capacity(spec.n_countries() * spec.n_methods() * 3 * spec.year_grid.len());
    for (c, country) in spec.countries.iter().enumerate() {
        for (m, &method) in spec.methods.iter().enumerate() {
            let traj = draws.trajectories(c, m);
            for s in 0..3 {
                for (t, &year) in spec.year_grid.iter().enumerate() {
                    let vals: Vec<f64> = traj.iter().map(|d| d[t].get(s)).collect();
                    out.push(EstimateSummary {
                        country: country.name.clone(),
                        method,
                        sector: Sector::from_index(s),
                        year,
                        interval: Interval::from_draws(&vals),
                    });
                }
            }
        }
    }
    Ok(out)
}

pub fn write_summaries<W: Write>(summaries: &[EstimateSummary], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["country", "method", "sector", "year", "median", "lo80", "hi80", "lo95", "hi95"])?;
    for s in summaries {
        let i = &s.interval;
        w.write_record([
            s.country.clone(),
            s.method.label().to_string(),
            s.sector.label().to_string(),
            s.year.to_string(),
            format!("{:.6}", i.median),
            format!("{:.6}", i.lo80),
            format!("{:.6}", i.hi80),
            format!("{:.6}", i.lo95),
            format!("{:.6}", i.hi95),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<summaries csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_draws() {
        let i = Interval::from_draws(&[0.3; 200]);
        assert_eq!([i.median, i.lo80, i.hi80, i.lo95, i.hi95], [0.3; 5]);
    }

    #[test]
    fn type7_against_sort_and_interpolate() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        // h = 99 * 0.1 = 9.9 -> x[9] + 0.9 (x[10] - x[9]) = 0.10 + 0.009
        assert!((quantile(&v, 0.1) - 0.109).abs() < 1e-12);
        assert!((quantile(&v, 0.9) - 0.901).abs() < 1e-12);
        assert!((quantile(&v, 0.5) - 0.505).abs() < 1e-12);
    }
}
