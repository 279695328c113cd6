//! Synthetic survey data with known true shares.
//!
//! Observations are drawn from the model's own truncated-normal data model:
//! `y1 ~ TN(phi1, se)` and `y2 ~ TN(phi2, se)` on (0, 1), redrawn until
//! `y1 + y2 < 1`, with `y3 = 1 - y1 - y2` reported at
//! `se3 = sqrt(se1^2 + se2^2)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::correlation::CorrelationMatrices;
use crate::data::{Dataset, IngestConfig, Method, Observation, Sector};
use crate::error::{Error, Result};
use crate::model::{compose_shares, fill_betas, LatentDesign, ShareTriple, N_LATENT};
use crate::variants::ModelKind;

/// Shape of the true latent curves.
#[derive(Debug, Clone, PartialEq)]
pub enum TruthShape {
    /// Draws from the hierarchical spline prior.
    Model,
    /// Straight lines with slopes drawn from `N(0, slope_sd)`.
    Linear { slope_sd: f64 },
    /// Logistic rise (or fall) of height `amplitude` centred at `mid` that
    /// levels off after roughly `2 * width` years.
    Saturating { amplitude: f64, mid: f64, width: f64 },
    /// Constant latent values for every country and method.
    Flat { psi: [f64; N_LATENT] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n_countries: usize,
    pub n_regions: usize,
    pub methods: Vec<Method>,
    pub surveys_per_country: usize,
    /// Range of the first survey year (inclusive, integer years).
    pub first_survey: (i32, i32),
    /// Range of gaps between surveys (inclusive, integer years).
    pub survey_gap: (i32, i32),
    pub window: (f64, f64),
    pub spacing: f64,
    pub se_range: (f64, f64),
    pub shape: TruthShape,
    /// World means of the two latent series.
    pub world_mean: [f64; N_LATENT],
    pub sd_theta: f64,
    pub sd_alpha: f64,
    pub sd_delta: f64,
    /// Correlation of differences across methods (both latent series).
    pub rho: Option<CorrelationMatrices>,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_countries: 4,
            n_regions: 2,
            methods: Method::ALL.to_vec(),
            surveys_per_country: 3,
            first_survey: (2000, 2004),
            survey_gap: (4, 6),
            window: (1995.0, 2025.0),
            spacing: 3.5,
            se_range: (0.015, 0.035),
            shape: TruthShape::Model,
            world_mean: [0.4, 0.6],
            sd_theta: 0.3,
            sd_alpha: 0.5,
            sd_delta: 0.15,
            rho: None,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Curve {
    Spline { design: LatentDesign, beta: Vec<f64> },
    Line { level: f64, slope: f64, anchor: f64 },
    Saturating { base: f64, amplitude: f64, mid: f64, width: f64 },
}

impl Curve {
    fn eval(&self, year: f64) -> Result<f64> {
        match self {
            Curve::Spline { design, beta } => {
                let row = design.row(year)?;
                Ok(row.iter().zip(beta).map(|(a, b)| a * b).sum())
            }
            Curve::Line { level, slope, anchor } => Ok(level + slope * (year - anchor)),
            Curve::Saturating {
                base,
                amplitude,
                mid,
                width,
            } => Ok(base + amplitude * ((year - mid) / width).tanh()),
        }
    }
}

/// True latent curves of one country and method.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueCurve {
    pub country: String,
    pub method: Method,
    curves: [Curve; N_LATENT],
}

impl TrueCurve {
    pub fn latent(&self, year: f64) -> Result<[f64; N_LATENT]> {
        Ok([self.curves[0].eval(year)?, self.curves[1].eval(year)?])
    }

    pub fn shares(&self, year: f64) -> Result<ShareTriple> {
        let [a, b] = self.latent(year)?;
        Ok(compose_shares(a, b))
    }

    /// Slope of a linear truth; `None` for other shapes.
    pub fn slope(&self, s: usize) -> Option<f64> {
        match &self.curves[s] {
            Curve::Line { slope, .. } => Some(*slope),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub dataset: Dataset,
    pub truth: Vec<TrueCurve>,
}

impl SimulatedData {
    pub fn truth_for(&self, country: &str, method: Method) -> Option<&TrueCurve> {
        self.truth.iter().find(|t| t.country == country && t.method == method)
    }
}

/// Draws `y ~ N(mu, sd^2)` truncated to (0, 1) by rejection, falling back
/// to clamping after many rejections.
fn truncated_normal(rng: &mut ChaCha8Rng, mu: f64, sd: f64) -> f64 {
    for _ in 0..10_000 {
        let z: f64 = rng.sample(StandardNormal);
        let y = mu + sd * z;
        if y > 0.0 && y < 1.0 {
            return y;
        }
    }
    mu.clamp(1e-4, 1.0 - 1e-4)
}

fn country_name(c: usize) -> String {
    format!("Country{:02}", c + 1)
}

fn region_name(r: usize) -> String {
    format!("Region{}", r + 1)
}

pub fn simulate(cfg: &SimulationConfig) -> Result<SimulatedData> {
    if cfg.n_countries == 0 || cfg.n_regions == 0 || cfg.methods.is_empty() || cfg.surveys_per_country == 0 {
        return Err(Error::Config("simulation needs countries, regions, methods and surveys".into()));
    }
    let n_m = cfg.methods.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std = |sd: f64| Normal::new(0.0, sd).map_err(|e| Error::Config(e.to_string()));
    let rho = cfg.rho.clone().unwrap_or_else(|| CorrelationMatrices::identity(n_m));
    if rho.n_methods() != n_m {
        return Err(Error::Shape("simulation correlation does not match methods".into()));
    }
    let chol: Vec<DMatrix<f64>> = rho
        .rho
        .iter()
        .map(|r| {
            r.clone()
                .cholesky()
                .map(|c| c.l())
                .ok_or_else(|| Error::Numerical("simulation correlation is not positive definite".into()))
        })
        .collect::<Result<_>>()?;

    // theta_world[m][s], theta_region[r][m][s]
    let theta_w: Vec<[f64; N_LATENT]> = (0..n_m)
        .map(|_| Ok([cfg.world_mean[0] + std(0.3)?.sample(&mut rng), cfg.world_mean[1] + std(0.3)?.sample(&mut rng)]))
        .collect::<Result<_>>()?;
    let mut theta_r = vec![vec![[0.0; N_LATENT]; n_m]; cfg.n_regions];
    for region in theta_r.iter_mut() {
        for (m, t) in region.iter_mut().enumerate() {
            for s in 0..N_LATENT {
                t[s] = theta_w[m][s] + std(cfg.sd_theta)?.sample(&mut rng);
            }
        }
    }

    let grid: Vec<f64> = {
        let (a, b) = cfg.window;
        ((a.ceil() as i64)..=(b.floor() as i64)).map(|y| y as f64).collect()
    };
    let mut observations = Vec::new();
    let mut truth = Vec::new();
    for c in 0..cfg.n_countries {
        let r = c % cfg.n_regions;
        let name = country_name(c);
        let region = region_name(r);
        let mut years = vec![f64::from(rng.random_range(cfg.first_survey.0..=cfg.first_survey.1))];
        for _ in 1..cfg.surveys_per_country {
            let gap = rng.random_range(cfg.survey_gap.0..=cfg.survey_gap.1);
            years.push(years.last().copied().unwrap_or_default() + f64::from(gap));
        }
        let recent = *years.last().unwrap_or(&cfg.window.1);
        if recent > cfg.window.1 || years[0] < cfg.window.0 {
            return Err(Error::Config(format!("simulated survey years {years:?} leave the window")));
        }
        let design = ModelKind::Full.design(&name, recent, cfg.window, cfg.spacing, &grid)?;
        let h_n = design.n_diffs();
        // delta[s][h][m] with MVN(0, sd^2 R) across methods.
        let mut deltas = vec![vec![vec![0.0; n_m]; h_n]; N_LATENT];
        for (s, per_s) in deltas.iter_mut().enumerate() {
            for d in per_s.iter_mut() {
                let z = DVector::from_fn(n_m, |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = &chol[s] * z;
                for m in 0..n_m {
                    d[m] = cfg.sd_delta * x[m];
                }
            }
        }
        for (m, &method) in cfg.methods.iter().enumerate() {
            let mut curves = Vec::with_capacity(N_LATENT);
            for s in 0..N_LATENT {
                let alpha = theta_r[r][m][s] + std(cfg.sd_alpha)?.sample(&mut rng);
                let curve = match &cfg.shape {
                    TruthShape::Model => {
                        let d: Vec<f64> = (0..h_n).map(|h| deltas[s][h][m]).collect();
                        let mut beta = vec![0.0; h_n + 1];
                        fill_betas(alpha, &d, design.k_star(), &mut beta);
                        Curve::Spline {
                            design: design.clone(),
                            beta,
                        }
                    }
                    TruthShape::Linear { slope_sd } => Curve::Line {
                        level: alpha,
                        slope: std(*slope_sd)?.sample(&mut rng),
                        anchor: recent,
                    },
                    TruthShape::Saturating { amplitude, mid, width } => {
                        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                        Curve::Saturating {
                            base: alpha,
                            amplitude: sign * amplitude,
                            mid: *mid,
                            width: *width,
                        }
                    }
                    TruthShape::Flat { psi } => Curve::Line {
                        level: psi[s],
                        slope: 0.0,
                        anchor: recent,
                    },
                };
                curves.push(curve);
            }
            let curve = TrueCurve {
                country: name.clone(),
                method,
                curves: [curves[0].clone(), curves[1].clone()],
            };
            for &year in &years {
                let phi = curve.shares(year)?;
                let se1 = rng.random_range(cfg.se_range.0..=cfg.se_range.1);
                let se2 = rng.random_range(cfg.se_range.0..=cfg.se_range.1);
                let (mut y1, mut y2) = (0.0, 0.0);
                for _ in 0..1000 {
                    y1 = truncated_normal(&mut rng, phi.phi1, se1);
                    y2 = truncated_normal(&mut rng, phi.phi2, se2);
                    if y1 + y2 < 1.0 {
                        break;
                    }
                }
                if y1 + y2 >= 1.0 {
                    let scale = (1.0 - 1e-4) / (y1 + y2);
                    y1 *= scale;
                    y2 *= scale;
                }
                let se3 = (se1 * se1 + se2 * se2).sqrt();
                for (sector, y, se) in [
                    (Sector::Public, y1, se1),
                    (Sector::PrivateMedical, y2, se2),
                    (Sector::PrivateOther, (1.0 - y1 - y2).max(0.0), se3),
                ] {
                    observations.push(Observation {
                        country: name.clone(),
                        region: region.clone(),
                        method,
                        sector,
                        year,
                        proportion: y,
                        se,
                    });
                }
            }
            truth.push(curve);
        }
    }
    let ingest = IngestConfig {
        window: cfg.window,
        ..IngestConfig::default()
    };
    let dataset = Dataset::from_observations(observations, &ingest)?;
    Ok(SimulatedData { dataset, truth })
}
