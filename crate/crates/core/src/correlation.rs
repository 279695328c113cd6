//! Cross-method correlation of first differences.
//!
//! Stage 1 fits the model with independent methods, stage 2 turns posterior
//! medians of the differences into cosine-similarity correlation matrices,
//! stage 3 refits with those matrices held fixed.

use std::io::{Read, Write};

use log::{info, warn};
use nalgebra::DMatrix;

use crate::data::{Dataset, Method};
use crate::error::{Error, Result};
use crate::inference::summary::quantile;
use crate::inference::{PosteriorDraws, SamplerConfig};
use crate::model::{PriorConfig, N_LATENT};
use crate::variants::{fit_variant, ModelKind};

const SYMMETRY_TOL: f64 = 1e-10;

/// Per-sector `M x M` correlation matrices (public, commercial medical).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrices {
    pub rho: [DMatrix<f64>; N_LATENT],
}

impl CorrelationMatrices {
    pub fn identity(n_methods: usize) -> Self {
        Self {
            rho: [DMatrix::identity(n_methods, n_methods), DMatrix::identity(n_methods, n_methods)],
        }
    }

    pub fn from_matrices(rho: [DMatrix<f64>; N_LATENT]) -> Result<Self> {
        let out = Self { rho };
        out.validate()?;
        Ok(out)
    }

    pub fn n_methods(&self) -> usize {
        self.rho[0].nrows()
    }

    /// Square, equal sizes, symmetric, unit diagonal, entries in [-1, 1].
    pub fn validate(&self) -> Result<()> {
        let m = self.rho[0].nrows();
        for (s, r) in self.rho.iter().enumerate() {
            if r.nrows() != m || r.ncols() != m {
                return Err(Error::Shape(format!(
                    "correlation matrix {s} is {}x{}, expected {m}x{m}",
                    r.nrows(),
                    r.ncols()
                )));
            }
            for i in 0..m {
                if (r[(i, i)] - 1.0).abs() > SYMMETRY_TOL {
                    return Err(Error::Validation(format!(
                        "correlation matrix {s} has diagonal entry {} at {i}",
                        r[(i, i)]
                    )));
                }
                for j in 0..m {
                    let v = r[(i, j)];
                    if !(-1.0..=1.0).contains(&v) {
                        return Err(Error::Validation(format!(
                            "correlation {v} at ({i}, {j}) outside [-1, 1]"
                        )));
                    }
                    if (v - r[(j, i)]).abs() > SYMMETRY_TOL {
                        return Err(Error::Validation(format!(
                            "correlation matrix {s} is not symmetric at ({i}, {j})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Smallest eigenvalue over both sectors.
    pub fn min_eigenvalue(&self) -> f64 {
        self.rho
            .iter()
            .map(|r| {
                r.clone()
                    .symmetric_eigenvalues()
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Shrinks each matrix toward the identity just enough for a Cholesky
    /// factorization to succeed. Returns the matrices and the weight used
    /// per sector (0 when untouched).
    pub fn regularized(&self) -> (Self, [f64; N_LATENT]) {
        let mut out = self.clone();
        let mut weights = [0.0; N_LATENT];
        let m = self.n_methods();
        for s in 0..N_LATENT {
            if self.rho[s].clone().cholesky().is_some() {
                continue;
            }
            let eye = DMatrix::<f64>::identity(m, m);
            let mut lambda = 1e-6;
            loop {
                let shrunk = &self.rho[s] * (1.0 - lambda) + &eye * lambda;
                if shrunk.clone().cholesky().is_some() || lambda >= 1.0 {
                    out.rho[s] = shrunk;
                    weights[s] = lambda;
                    break;
                }
                lambda = (lambda * 10.0).min(1.0);
            }
            warn!("correlation matrix for latent sector {s} is singular; shrunk toward identity with weight {lambda:e}");
        }
        (out, weights)
    }

    /// Heat-map CSV: `sector,method_i,method_j,rho`.
    pub fn write_csv<W: Write>(&self, methods: &[Method], writer: W) -> Result<()> {
        let sectors = ["public", "private_medical"];
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["sector", "method_i", "method_j", "rho"])?;
        for (s, r) in self.rho.iter().enumerate() {
            for i in 0..r.nrows() {
                for j in 0..r.ncols() {
                    w.write_record([
                        sectors[s].to_string(),
                        methods[i].label().to_string(),
                        methods[j].label().to_string(),
                        r[(i, j)].to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<rho csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(methods: &[Method], reader: R) -> Result<Self> {
        let m = methods.len();
        let mut mats = [DMatrix::from_element(m, m, f64::NAN), DMatrix::from_element(m, m, f64::NAN)];
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse_err = |message: String| Error::Parse { line: line + 2, message };
            let s = match rec.get(0) {
                Some("public") => 0,
                Some("private_medical") => 1,
                other => return Err(parse_err(format!("unknown sector {other:?}"))),
            };
            let idx = |k: usize| -> Result<usize> {
                let method: Method = rec.get(k).unwrap_or_default().parse()?;
                methods
                    .iter()
                    .position(|&x| x == method)
                    .ok_or_else(|| parse_err(format!("method `{method}` not in the model")))
            };
            let (i, j) = (idx(1)?, idx(2)?);
            mats[s][(i, j)] = rec
                .get(3)
                .unwrap_or_default()
                .parse()
                .map_err(|_| parse_err("bad rho value".into()))?;
        }
        if mats.iter().any(|r| r.iter().any(|v| v.is_nan())) {
            return Err(Error::Validation("correlation CSV is missing entries".into()));
        }
        Self::from_matrices(mats)
    }
}

/// `Sigma[i][j] = rho[i][j] * sds[i] * sds[j]`.
pub fn assemble_covariance(rho: &DMatrix<f64>, sds: &[f64]) -> Result<DMatrix<f64>> {
    let m = rho.nrows();
    CorrelationMatrices::from_matrices([rho.clone(), rho.clone()])?;
    if sds.len() != m {
        return Err(Error::Shape(format!("{} standard deviations for {m} methods", sds.len())));
    }
    if let Some(sd) = sds.iter().find(|&&sd| !(sd > 0.0)) {
        return Err(Error::Domain(format!("standard deviation {sd} must be positive")));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| rho[(i, j)] * sds[i] * sds[j]))
}

/// Which differences count as lying in a period with data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskMode {
    /// Between the first and last survey year of the country.
    #[default]
    Country,
    /// Between the first and last survey year of the country and method.
    CountryMethod,
}

impl std::str::FromStr for MaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "country" => Ok(MaskMode::Country),
            "country_method" => Ok(MaskMode::CountryMethod),
            other => Err(Error::Config(format!("unknown mask mode `{other}`"))),
        }
    }
}

/// Posterior medians of one country's differences plus the data-period
/// mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CountryDeltas {
    pub country: String,
    pub n_diffs: usize,
    pub n_methods: usize,
    /// Indexed `(s * n_diffs + h) * n_methods + m`.
    pub medians: Vec<f64>,
    /// Indexed `h * n_methods + m`; `true` keeps the term.
    pub mask: Vec<bool>,
}

impl CountryDeltas {
    pub fn median(&self, s: usize, h: usize, m: usize) -> f64 {
        self.medians[(s * self.n_diffs + h) * self.n_methods + m]
    }

    pub fn kept(&self, h: usize, m: usize) -> bool {
        self.mask[h * self.n_methods + m]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaEstimates {
    pub n_methods: usize,
    pub countries: Vec<CountryDeltas>,
}

/// Whether the half-open span between two peaks overlaps `[first, last]`
/// with positive length.
fn overlaps(interval: (f64, f64), period: (f64, f64)) -> bool {
    interval.0.max(period.0) < interval.1.min(period.1)
}

/// Posterior medians of every difference from a stage-1 fit, masked to
/// periods with data.
pub fn extract_delta_medians(draws: &PosteriorDraws, dataset: &Dataset, mode: MaskMode) -> Result<DeltaEstimates> {
    let spec = &draws.spec;
    let l = &spec.layout;
    let n_m = spec.n_methods();
    let mut countries = Vec::with_capacity(spec.n_countries());
    for (c, info) in spec.countries.iter().enumerate() {
        let h_n = l.n_diffs[c];
        let mut medians = vec![0.0; N_LATENT * h_n * n_m];
        for s in 0..N_LATENT {
            for h in 0..h_n {
                for m in 0..n_m {
                    medians[(s * h_n + h) * n_m + m] = quantile(&draws.param_draws(l.delta(c, s, h, m)), 0.5);
                }
            }
        }
        let period_of = |filter: &dyn Fn(Method) -> bool| -> Option<(f64, f64)> {
            let years: Vec<f64> = dataset
                .observations
                .iter()
                .filter(|o| o.country == info.name && filter(o.method))
                .map(|o| o.year)
                .collect();
            let first = years.iter().copied().fold(f64::INFINITY, f64::min);
            let last = years.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (first < last).then_some((first, last))
        };
        let periods: Vec<Option<(f64, f64)>> = match mode {
            MaskMode::Country => vec![period_of(&|_| true); n_m],
            MaskMode::CountryMethod => spec
                .methods
                .iter()
                .map(|&method| period_of(&|x| x == method))
                .collect(),
        };
        let mut mask = vec![false; h_n * n_m];
        for h in 0..h_n {
            let interval = spec.designs[c].difference_interval(h);
            for m in 0..n_m {
                mask[h * n_m + m] = periods[m].is_some_and(|p| overlaps(interval, p));
            }
        }
        if !mask.iter().any(|&k| k) {
            info!("{}: no period with data; contributes nothing to correlations", info.name);
        }
        countries.push(CountryDeltas {
            country: info.name.clone(),
            n_diffs: h_n,
            n_methods: n_m,
            medians,
            mask,
        });
    }
    Ok(DeltaEstimates {
        n_methods: n_m,
        countries,
    })
}

/// Cosine similarity of masked difference medians, per latent sector.
/// Masked-out cells count as zero, so each method's norm runs over its own
/// kept cells and the result is a Gram matrix of unit vectors.
pub fn estimate_correlations(deltas: &DeltaEstimates) -> Result<CorrelationMatrices> {
    let n_m = deltas.n_methods;
    let mut mats = [DMatrix::identity(n_m, n_m), DMatrix::identity(n_m, n_m)];
    for (s, mat) in mats.iter_mut().enumerate() {
        for i in 0..n_m {
            for j in i + 1..n_m {
                let (mut num, mut ii, mut jj) = (0.0, 0.0, 0.0);
                for cd in &deltas.countries {
                    if cd.n_methods != n_m {
                        return Err(Error::Shape(format!(
                            "{}: {} methods, expected {n_m}",
                            cd.country, cd.n_methods
                        )));
                    }
                    for h in 0..cd.n_diffs {
                        let a = if cd.kept(h, i) { cd.median(s, h, i) } else { 0.0 };
                        let b = if cd.kept(h, j) { cd.median(s, h, j) } else { 0.0 };
                        num += a * b;
                        ii += a * a;
                        jj += b * b;
                    }
                }
                let den = ii.sqrt() * jj.sqrt();
                let r = if den > 0.0 {
                    (num / den).clamp(-1.0, 1.0)
                } else {
                    warn!("no information for correlation of methods {i} and {j} (sector {s}); set to 0");
                    0.0
                };
                mat[(i, j)] = r;
                mat[(j, i)] = r;
            }
        }
    }
    CorrelationMatrices::from_matrices(mats)
}

/// Artifacts of the three-stage fit.
#[derive(Debug, Clone)]
pub struct TwoStageFit {
    pub zero_cov: PosteriorDraws,
    pub deltas: DeltaEstimates,
    /// Estimated matrices before any regularization.
    pub rho_estimated: CorrelationMatrices,
    /// Matrices used in stage 3.
    pub rho: CorrelationMatrices,
    pub full: PosteriorDraws,
}

/// Estimates correlations from an independent-methods fit.
pub fn correlations_from_stage1(
    zero_cov: &PosteriorDraws,
    dataset: &Dataset,
    mode: MaskMode,
) -> Result<(DeltaEstimates, CorrelationMatrices, CorrelationMatrices)> {
    let deltas = extract_delta_medians(zero_cov, dataset, mode)?;
    let estimated = estimate_correlations(&deltas)?;
    let (rho, _) = estimated.regularized();
    Ok((deltas, estimated, rho))
}

/// Zero-covariance fit, correlation estimate, then the full fit with the
/// same seed.
pub fn two_stage_fit(
    dataset: &Dataset,
    prior: &PriorConfig,
    spacing: f64,
    cfg: &SamplerConfig,
    mode: MaskMode,
) -> Result<TwoStageFit> {
    let n_m = dataset.methods.len();
    info!("stage 1: independent-methods fit");
    let zero_cov = fit_variant(
        ModelKind::ZeroCov,
        dataset,
        &CorrelationMatrices::identity(n_m),
        prior,
        spacing,
        cfg,
    )?;
    info!("stage 2: correlation estimate");
    let (deltas, rho_estimated, rho) = correlations_from_stage1(&zero_cov, dataset, mode)?;
    info!("stage 3: full fit");
    let full = fit_variant(ModelKind::Full, dataset, &rho, prior, spacing, cfg)?;
    Ok(TwoStageFit {
        zero_cov,
        deltas,
        rho_estimated,
        rho,
        full,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_country(series: &[[f64; 2]]) -> DeltaEstimates {
        let h_n = series.len();
        let mut medians = vec![0.0; 2 * h_n * 2];
        for (h, pair) in series.iter().enumerate() {
            for s in 0..2 {
                for m in 0..2 {
                    medians[(s * h_n + h) * 2 + m] = pair[m];
                }
            }
        }
        DeltaEstimates {
            n_methods: 2,
            countries: vec![CountryDeltas {
                country: "x".into(),
                n_diffs: h_n,
                n_methods: 2,
                medians,
                mask: vec![true; h_n * 2],
            }],
        }
    }

    #[test]
    fn identical_series_give_one() {
        let rho = estimate_correlations(&one_country(&[[0.3, 0.3], [-0.1, -0.1], [0.2, 0.2]])).unwrap();
        assert!((rho.rho[0][(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_cosine() {
        let rho = estimate_correlations(&one_country(&[[1.0, 1.0], [0.0, 1.0]])).unwrap();
        assert!((rho.rho[1][(0, 1)] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(rho.rho[1][(0, 0)], 1.0);
    }

    #[test]
    fn zero_denominator_defaults_to_zero() {
        let rho = estimate_correlations(&one_country(&[[0.0, 1.0], [0.0, 0.5]])).unwrap();
        assert_eq!(rho.rho[0][(0, 1)], 0.0);
    }

    #[test]
    fn covariance_examples() {
        let rho = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let sigma = assemble_covariance(&rho, &[1.0, 2.0]).unwrap();
        assert_eq!(sigma, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 4.0]));
        let sigma = assemble_covariance(&DMatrix::identity(3, 3), &[0.5, 1.0, 2.0]).unwrap();
        assert_eq!(sigma, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.25, 1.0, 4.0])));
        assert!(assemble_covariance(&DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]), &[1.0, 1.0]).is_err());
        assert!(assemble_covariance(&rho, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn invalid_matrices_rejected() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.3, 1.0]);
        assert!(CorrelationMatrices::from_matrices([asym, DMatrix::identity(2, 2)]).is_err());
        let diag = DMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.0, 1.0]);
        assert!(CorrelationMatrices::from_matrices([diag, DMatrix::identity(2, 2)]).is_err());
        assert!(CorrelationMatrices::from_matrices([DMatrix::identity(2, 2), DMatrix::identity(3, 3)]).is_err());
    }

    #[test]
    fn singular_matrix_regularized() {
        let ones = DMatrix::from_element(3, 3, 1.0);
        let rho = CorrelationMatrices::from_matrices([ones, DMatrix::identity(3, 3)]).unwrap();
        let (reg, w) = rho.regularized();
        assert!(w[0] > 0.0 && w[0] < 1e-3);
        assert_eq!(w[1], 0.0);
        assert!(reg.rho[0].clone().cholesky().is_some());
        reg.validate().unwrap();
    }

    #[test]
    fn csv_roundtrip() {
        let rho = CorrelationMatrices::from_matrices([
            DMatrix::from_row_slice(2, 2, &[1.0, 0.25, 0.25, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]),
        ])
        .unwrap();
        let methods = [Method::OcPills, Method::Injectables];
        let mut buf = Vec::new();
        rho.write_csv(&methods, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 1 + 2 * 4);
        assert_eq!(CorrelationMatrices::read_csv(&methods, buf.as_slice()).unwrap(), rho);
    }

    #[test]
    fn overlap_rule() {
        assert!(overlaps((2008.0, 2011.5), (2010.0, 2015.0)));
        assert!(!overlaps((2015.0, 2018.5), (2010.0, 2015.0)));
        assert!(!overlaps((2001.0, 2004.5), (2010.0, 2015.0)));
    }
}
