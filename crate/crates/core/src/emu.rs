//! Supply-share adjustment of service statistics and estimated modern use.
//!
//! A service-statistics count covers one sector only; dividing it by that
//! sector's supply share scales it up to all users of the method. EMU is the
//! sum of adjusted users over methods divided by women of reproductive age.
//! Counts must already be expressed as user equivalents.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use log::warn;

use crate::data::{Method, Observation, Sector};
use crate::error::{Error, Result};
use crate::inference::summary::Interval;
use crate::inference::PosteriorDraws;

/// Shares at or below this make the adjustment blow up.
pub const SHARE_EPSILON: f64 = 1e-6;

pub const SERVICE_STAT_HEADER: [&str; 6] = ["country", "method", "sector", "year", "y_raw", "wra"];

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceStatRecord {
    pub country: String,
    pub method: Method,
    pub sector: Sector,
    pub year: f64,
    /// User-equivalent count reported by `sector`.
    pub y_raw: f64,
    /// Women of reproductive age; needed only for EMU.
    pub wra: Option<f64>,
}

/// Parses `country,method,sector,year,y_raw,wra` (`wra` may be empty).
pub fn parse_service_stats<R: Read>(reader: R) -> Result<Vec<ServiceStatRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != SERVICE_STAT_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", SERVICE_STAT_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let err = |message: String| Error::Parse { line, message };
        let num = |k: usize, name: &str| -> Result<f64> {
            rec[k]
                .parse::<f64>()
                .map_err(|_| err(format!("`{}` is not a number for {name}", &rec[k])))
        };
        let y_raw = num(4, "y_raw")?;
        if !(y_raw >= 0.0) {
            return Err(err(format!("y_raw {y_raw} must be non-negative")));
        }
        let wra = if rec[5].is_empty() {
            None
        } else {
            let w = num(5, "wra")?;
            if !(w > 0.0) {
                return Err(err(format!("wra {w} must be positive")));
            }
            Some(w)
        };
        out.push(ServiceStatRecord {
            country: rec[0].to_string(),
            method: rec[1].parse().map_err(|e: Error| err(e.to_string()))?,
            sector: rec[2].parse().map_err(|e: Error| err(e.to_string()))?,
            year: num(3, "year")?,
            y_raw,
            wra,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedDraws {
    pub draws: Vec<f64>,
    pub summary: Interval,
}

/// `y_raw / p` for every share draw.
pub fn adjust_service_stat(y_raw: f64, p_draws: &[f64]) -> Result<AdjustedDraws> {
    if !(y_raw >= 0.0) {
        return Err(Error::Domain(format!("y_raw {y_raw} must be non-negative")));
    }
    if p_draws.is_empty() {
        return Err(Error::Validation("no share draws".into()));
    }
    if let Some(p) = p_draws.iter().find(|&&p| !(p > SHARE_EPSILON)) {
        return Err(Error::Numerical(format!("supply share too small to adjust ({p})")));
    }
    let draws: Vec<f64> = p_draws.iter().map(|p| y_raw / p).collect();
    let summary = Interval::from_draws(&draws);
    Ok(AdjustedDraws { draws, summary })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmuDraws {
    pub draws: Vec<f64>,
    pub summary: Interval,
    /// Some draw exceeds 1.
    pub exceeds_one: bool,
}

/// `users / wra` for every draw; values above 1 are kept and flagged.
pub fn compute_emu(user_draws: &[f64], wra: f64) -> Result<EmuDraws> {
    if !(wra > 0.0) {
        return Err(Error::Domain(format!("women of reproductive age {wra} must be positive")));
    }
    if user_draws.is_empty() {
        return Err(Error::Validation("no user draws".into()));
    }
    let draws: Vec<f64> = user_draws.iter().map(|u| u / wra).collect();
    let exceeds_one = draws.iter().any(|&e| e > 1.0);
    if exceeds_one {
        warn!("estimated modern use exceeds 1 in some draws");
    }
    let summary = Interval::from_draws(&draws);
    Ok(EmuDraws {
        draws,
        summary,
        exceeds_one,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdjustMode {
    /// Divide by every posterior share draw.
    #[default]
    Posterior,
    /// Divide by the share observed in the latest survey for the cell.
    LatestSurvey,
}

impl std::str::FromStr for AdjustMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "posterior" => Ok(AdjustMode::Posterior),
            "latest_survey" => Ok(AdjustMode::LatestSurvey),
            other => Err(Error::Config(format!("unknown adjustment mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentResult {
    pub record: ServiceStatRecord,
    pub adjusted: AdjustedDraws,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmuResult {
    pub country: String,
    pub year: f64,
    pub wra: f64,
    pub emu: EmuDraws,
}

/// Share used to scale one record: posterior draws at the record's year, or
/// the latest surveyed value at or before it.
fn share_draws(
    record: &ServiceStatRecord,
    draws: &PosteriorDraws,
    mode: AdjustMode,
    observations: &[Observation],
) -> Result<Vec<f64>> {
    match mode {
        AdjustMode::Posterior => {
            let spec = &draws.spec;
            let c = spec
                .country_index(&record.country)
                .ok_or_else(|| Error::Validation(format!("no posterior for country `{}`", record.country)))?;
            let m = spec
                .method_index(record.method)
                .ok_or_else(|| Error::Validation(format!("no posterior for method `{}`", record.method)))?;
            Ok(draws
                .shares_at(c, m, record.year)?
                .iter()
                .map(|t| t.get(record.sector.index()))
                .collect())
        }
        AdjustMode::LatestSurvey => observations
            .iter()
            .filter(|o| {
                o.country == record.country && o.method == record.method && o.sector == record.sector && o.year <= record.year
            })
            .max_by(|a, b| a.year.total_cmp(&b.year))
            .map(|o| vec![o.proportion])
            .ok_or_else(|| {
                Error::Validation(format!(
                    "no survey for {} {} {} at or before {}",
                    record.country, record.method, record.sector, record.year
                ))
            }),
    }
}

/// Adjusts every record and, for country-years with `wra`, sums adjusted
/// users draw by draw into EMU.
pub fn adjust_records(
    records: &[ServiceStatRecord],
    draws: &PosteriorDraws,
    mode: AdjustMode,
    observations: &[Observation],
) -> Result<(Vec<AdjustmentResult>, Vec<EmuResult>)> {
    let mut results = Vec::with_capacity(records.len());
    let mut totals: BTreeMap<(String, u64), (Vec<f64>, Option<f64>)> = BTreeMap::new();
    for r in records {
        let p = share_draws(r, draws, mode, observations)?;
        let adjusted = adjust_service_stat(r.y_raw, &p)?;
        let entry = totals
            .entry((r.country.clone(), r.year.to_bits()))
            .or_insert_with(|| (vec![0.0; adjusted.draws.len()], None));
        if entry.0.len() != adjusted.draws.len() {
            return Err(Error::Shape("mixed draw counts within a country-year".into()));
        }
        for (t, a) in entry.0.iter_mut().zip(&adjusted.draws) {
            *t += a;
        }
        if let Some(w) = r.wra {
            match entry.1 {
                Some(prev) if prev != w => {
                    return Err(Error::Validation(format!(
                        "{} {}: conflicting wra {prev} and {w}",
                        r.country, r.year
                    )))
                }
                _ => entry.1 = Some(w),
            }
        }
        results.push(AdjustmentResult {
            record: r.clone(),
            adjusted,
        });
    }
    let mut emu = Vec::new();
    for ((country, year_bits), (users, wra)) in totals {
        if let Some(wra) = wra {
            emu.push(EmuResult {
                country,
                year: f64::from_bits(year_bits),
                wra,
                emu: compute_emu(&users, wra)?,
            });
        }
    }
    emu.sort_by(|a, b| a.country.cmp(&b.country).then(a.year.total_cmp(&b.year)));
    Ok((results, emu))
}

pub fn write_adjustments<W: Write>(results: &[AdjustmentResult], emu: &[EmuResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "kind", "country", "method", "sector", "year", "input", "median", "lo80", "hi80", "lo95", "hi95", "flag",
    ])?;
    let fmt = |i: &Interval| {
        [i.median, i.lo80, i.hi80, i.lo95, i.hi95].map(|v| format!("{v:.6}"))
    };
    for r in results {
        let rec = &r.record;
        let mut row = vec![
            "adjusted".to_string(),
            rec.country.clone(),
            rec.method.label().to_string(),
            rec.sector.label().to_string(),
            rec.year.to_string(),
            rec.y_raw.to_string(),
        ];
        row.extend(fmt(&r.adjusted.summary));
        row.push(String::new());
        w.write_record(&row)?;
    }
    for e in emu {
        let mut row = vec![
            "emu".to_string(),
            e.country.clone(),
            String::new(),
            String::new(),
            e.year.to_string(),
            e.wra.to_string(),
        ];
        row.extend(fmt(&e.emu.summary));
        row.push(if e.emu.exceeds_one { "exceeds_one" } else { "" }.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<emu csv>", e))?;
    Ok(())
}
