//! Out-of-sample validation on each country's most recent survey.
//!
//! Errors are `e = y - y_hat` with `y_hat` the posterior median share, so a
//! positive error means under-prediction. Coverage uses 95% intervals that
//! either add the test observation's sampling noise to every share draw
//! ([`IntervalMode::Predictive`]) or use the share draws alone
//! ([`IntervalMode::Credible`]).

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use log::{info, warn};

use crate::correlation::{correlations_from_stage1, CorrelationMatrices, MaskMode};
use crate::data::{Dataset, IngestConfig, Observation, Sector};
use crate::error::{Error, Result};
use crate::inference::likelihood::truncnorm_cdf;
use crate::inference::summary::{quantile_sorted, EstimateSummary, Interval};
use crate::inference::{PosteriorDraws, SamplerConfig};
use crate::model::PriorConfig;
use crate::variants::{fit_variant, ModelKind};

#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutSplit {
    pub train: Dataset,
    pub test: Vec<Observation>,
}

/// Moves every observation from the most recent survey year of each
/// country with at least two survey years into the test set.
pub fn make_holdout_split(dataset: &Dataset) -> Result<HoldoutSplit> {
    let mut latest: BTreeMap<&str, f64> = BTreeMap::new();
    for c in &dataset.countries {
        if dataset.survey_years(&c.name).len() >= 2 {
            latest.insert(c.name.as_str(), c.recent_year);
        }
    }
    let (test, train): (Vec<Observation>, Vec<Observation>) = dataset
        .observations
        .iter()
        .cloned()
        .partition(|o| latest.get(o.country.as_str()).is_some_and(|&y| o.year == y));
    let ingest = IngestConfig {
        window: dataset.window,
        share_sum_tolerance: f64::INFINITY,
        ..IngestConfig::default()
    };
    let train = Dataset::from_observations(train, &ingest)?;
    Ok(HoldoutSplit { train, test })
}

/// Signed errors `y - median` for each test observation, looked up in
/// `summaries` by country, method, sector and year.
pub fn compute_errors(test: &[Observation], summaries: &[EstimateSummary]) -> Result<Vec<f64>> {
    test.iter()
        .map(|o| {
            summaries
                .iter()
                .find(|s| {
                    s.country == o.country && s.method == o.method && s.sector == o.sector && (s.year - o.year).abs() < 1e-9
                })
                .map(|s| o.proportion - s.interval.median)
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "no summary for {} {} {} {}",
                        o.country, o.method, o.sector, o.year
                    ))
                })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    pub rmse: f64,
    pub mean_error: f64,
    pub median_abs_error: f64,
}

pub fn metrics(errors: &[f64]) -> Result<ErrorMetrics> {
    if errors.is_empty() {
        return Err(Error::Validation("no errors to summarize".into()));
    }
    let n = errors.len() as f64;
    let mut abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    abs.sort_by(f64::total_cmp);
    Ok(ErrorMetrics {
        rmse: (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
        mean_error: errors.iter().sum::<f64>() / n,
        median_abs_error: quantile_sorted(&abs, 0.5),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntervalMode {
    /// Share draws plus truncated-normal sampling noise.
    #[default]
    Predictive,
    /// Share draws only.
    Credible,
}

impl IntervalMode {
    pub fn label(self) -> &'static str {
        match self {
            IntervalMode::Predictive => "predictive",
            IntervalMode::Credible => "credible",
        }
    }
}

impl FromStr for IntervalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "predictive" => Ok(IntervalMode::Predictive),
            "credible" => Ok(IntervalMode::Credible),
            other => Err(Error::Config(format!("unknown interval mode `{other}`"))),
        }
    }
}

/// Share draws for one test observation.
#[derive(Debug, Clone, PartialEq)]
pub struct TestCell {
    pub observation: Observation,
    pub phi_draws: Vec<f64>,
}

/// Share draws at each test observation's exact year. Observations whose
/// country or method the model never saw are skipped with a warning.
pub fn predict_test_cells(draws: &PosteriorDraws, test: &[Observation]) -> Result<Vec<TestCell>> {
    let spec = &draws.spec;
    let mut cache: BTreeMap<(usize, usize, u64), Vec<crate::model::ShareTriple>> = BTreeMap::new();
    let mut out = Vec::with_capacity(test.len());
    for o in test {
        let (Some(c), Some(m)) = (spec.country_index(&o.country), spec.method_index(o.method)) else {
            warn!("{} {}: not in the fitted model; skipped", o.country, o.method);
            continue;
        };
        let key = (c, m, o.year.to_bits());
        let shares = match cache.entry(key) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(draws.shares_at(c, m, o.year)?),
        };
        out.push(TestCell {
            observation: o.clone(),
            phi_draws: shares.iter().map(|t| t.get(o.sector.index())).collect(),
        });
    }
    Ok(out)
}

/// Median, 80% and 95% intervals of each test cell's share draws, in the
/// summary format [`compute_errors`] consumes.
pub fn summarize_cells(cells: &[TestCell]) -> Vec<EstimateSummary> {
    cells
        .iter()
        .map(|cell| EstimateSummary {
            country: cell.observation.country.clone(),
            method: cell.observation.method,
            sector: cell.observation.sector,
            year: cell.observation.year,
            interval: Interval::from_draws(&cell.phi_draws),
        })
        .collect()
}

/// Quantile `p` of the mixture of `TN(phi_d, se^2)` on (0, 1), by bisection
/// on the averaged CDF.
pub fn predictive_quantile(phi_draws: &[f64], se: f64, p: f64) -> f64 {
    let cdf = |y: f64| phi_draws.iter().map(|&mu| truncnorm_cdf(y, mu, se)).sum::<f64>() / phi_draws.len() as f64;
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// 95% interval for one test cell.
pub fn test_interval(cell: &TestCell, mode: IntervalMode) -> (f64, f64) {
    match mode {
        IntervalMode::Predictive => (
            predictive_quantile(&cell.phi_draws, cell.observation.se, 0.025),
            predictive_quantile(&cell.phi_draws, cell.observation.se, 0.975),
        ),
        IntervalMode::Credible => {
            let i = Interval::from_draws(&cell.phi_draws);
            (i.lo95, i.hi95)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    Below,
    Inside,
    Above,
}

pub fn classify(y: f64, interval: (f64, f64)) -> Position {
    if y < interval.0 {
        Position::Below
    } else if y > interval.1 {
        Position::Above
    } else {
        Position::Inside
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageReport {
    pub n: usize,
    /// Percentages.
    pub coverage_95: f64,
    pub pct_above_pi: f64,
    pub pct_below_pi: f64,
    /// Percentage points.
    pub median_pi_width: f64,
}

pub fn coverage_report(cells: &[TestCell], mode: IntervalMode) -> Result<CoverageReport> {
    if cells.is_empty() {
        return Err(Error::Validation("no test cells".into()));
    }
    let mut counts = [0usize; 3];
    let mut widths = Vec::with_capacity(cells.len());
    for cell in cells {
        let interval = test_interval(cell, mode);
        widths.push(interval.1 - interval.0);
        let k = match classify(cell.observation.proportion, interval) {
            Position::Below => 0,
            Position::Inside => 1,
            Position::Above => 2,
        };
        counts[k] += 1;
    }
    widths.sort_by(f64::total_cmp);
    let n = cells.len() as f64;
    Ok(CoverageReport {
        n: cells.len(),
        coverage_95: 100.0 * counts[1] as f64 / n,
        pct_above_pi: 100.0 * counts[2] as f64 / n,
        pct_below_pi: 100.0 * counts[0] as f64 / n,
        median_pi_width: 100.0 * quantile_sorted(&widths, 0.5),
    })
}

/// One sector's row of a validation table. Errors are in percentage points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorReport {
    pub sector: Sector,
    pub n: usize,
    pub mean_error: f64,
    pub median_abs_error: f64,
    pub rmse: f64,
    pub coverage: CoverageReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub model: ModelKind,
    pub mode: IntervalMode,
    pub n_train: usize,
    pub n_test: usize,
    pub sectors: Vec<SectorReport>,
}

impl ValidationReport {
    pub fn sector(&self, sector: Sector) -> Option<&SectorReport> {
        self.sectors.iter().find(|s| s.sector == sector)
    }

    /// Coverage over all test cells, in percent.
    pub fn overall_coverage(&self) -> f64 {
        let n: usize = self.sectors.iter().map(|s| s.n).sum();
        self.sectors.iter().map(|s| s.coverage.coverage_95 * s.n as f64).sum::<f64>() / n as f64
    }
}

/// Errors, metrics and coverage of one fitted model on a test set.
pub fn evaluate(
    draws: &PosteriorDraws,
    n_train: usize,
    test: &[Observation],
    mode: IntervalMode,
) -> Result<ValidationReport> {
    let cells = predict_test_cells(draws, test)?;
    let summaries = summarize_cells(&cells);
    let kept: Vec<Observation> = cells.iter().map(|c| c.observation.clone()).collect();
    let errors = compute_errors(&kept, &summaries)?;
    let mut sectors = Vec::new();
    for sector in Sector::ALL {
        let idx: Vec<usize> = (0..cells.len()).filter(|&i| cells[i].observation.sector == sector).collect();
        if idx.is_empty() {
            continue;
        }
        let e: Vec<f64> = idx.iter().map(|&i| errors[i]).collect();
        let sector_cells: Vec<TestCell> = idx.iter().map(|&i| cells[i].clone()).collect();
        let m = metrics(&e)?;
        sectors.push(SectorReport {
            sector,
            n: idx.len(),
            mean_error: 100.0 * m.mean_error,
            median_abs_error: 100.0 * m.median_abs_error,
            rmse: 100.0 * m.rmse,
            coverage: coverage_report(&sector_cells, mode)?,
        });
    }
    Ok(ValidationReport {
        model: draws.spec.kind,
        mode,
        n_train,
        n_test: cells.len(),
        sectors,
    })
}

#[derive(Debug, Clone)]
pub struct ValidationRun {
    pub split: HoldoutSplit,
    pub rho: Option<CorrelationMatrices>,
    pub reports: Vec<ValidationReport>,
}

/// Splits, fits each requested model on the training set and evaluates it
/// on the held-out surveys. The full and linear models use correlations
/// estimated from an independent-methods fit of the training set.
pub fn validate(
    dataset: &Dataset,
    kinds: &[ModelKind],
    prior: &PriorConfig,
    spacing: f64,
    cfg: &SamplerConfig,
    mask: MaskMode,
    mode: IntervalMode,
) -> Result<ValidationRun> {
    let split = make_holdout_split(dataset)?;
    if split.test.is_empty() {
        return Err(Error::Validation("no country has two or more surveys; nothing to hold out".into()));
    }
    info!("holdout: {} train, {} test observations", split.train.len(), split.test.len());
    let n_m = split.train.methods.len();
    let zero_cov = fit_variant(
        ModelKind::ZeroCov,
        &split.train,
        &CorrelationMatrices::identity(n_m),
        prior,
        spacing,
        cfg,
    )?;
    let needs_rho = kinds.iter().any(|k| *k != ModelKind::ZeroCov);
    let rho = if needs_rho {
        Some(correlations_from_stage1(&zero_cov, &split.train, mask)?.2)
    } else {
        None
    };
    let mut reports = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let draws = match kind {
            ModelKind::ZeroCov => zero_cov.clone(),
            _ => fit_variant(kind, &split.train, rho.as_ref().unwrap_or(&zero_cov.rho), prior, spacing, cfg)?,
        };
        reports.push(evaluate(&draws, split.train.len(), &split.test, mode)?);
    }
    Ok(ValidationRun { split, rho, reports })
}

pub const REPORT_HEADER: [&str; 11] = [
    "model",
    "interval",
    "sector",
    "n",
    "mean_error",
    "median_abs_error",
    "rmse",
    "coverage_95",
    "median_pi_width",
    "pct_above_pi",
    "pct_below_pi",
];

/// One block of rows per model, values in percent.
pub fn write_reports<W: Write>(reports: &[ValidationReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REPORT_HEADER)?;
    for r in reports {
        for s in &r.sectors {
            w.write_record([
                r.model.label().to_string(),
                r.mode.label().to_string(),
                s.sector.label().to_string(),
                s.n.to_string(),
                format!("{:.2}", s.mean_error),
                format!("{:.2}", s.median_abs_error),
                format!("{:.2}", s.rmse),
                format!("{:.1}", s.coverage.coverage_95),
                format!("{:.2}", s.coverage.median_pi_width),
                format!("{:.1}", s.coverage.pct_above_pi),
                format!("{:.1}", s.coverage.pct_below_pi),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<validation csv>", e))?;
    Ok(())
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} ({} intervals; {} train, {} test)",
            self.model,
            self.mode.label(),
            self.n_train,
            self.n_test
        )?;
        writeln!(
            f,
            "{:<16}{:>6}{:>10}{:>10}{:>8}{:>10}{:>10}{:>8}{:>8}",
            "sector", "n", "mean_err", "med_abs", "rmse", "cover95", "pi_width", "above", "below"
        )?;
        for s in &self.sectors {
            writeln!(
                f,
                "{:<16}{:>6}{:>10.2}{:>10.2}{:>8.2}{:>10.1}{:>10.2}{:>8.1}{:>8.1}",
                s.sector.label(),
                s.n,
                s.mean_error,
                s.median_abs_error,
                s.rmse,
                s.coverage.coverage_95,
                s.coverage.median_pi_width,
                s.coverage.pct_above_pi,
                s.coverage.pct_below_pi
            )?;
        }
        Ok(())
    }
}
