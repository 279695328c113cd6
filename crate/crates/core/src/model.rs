//! Latent process model: spline-coefficient reconstruction, latent curves,
//! compositional shares and the joint log-prior.
//!
//! Two latent series are modelled per country and method: `psi[0]`, the
//! logit of the public share, and `psi[1]`, the logit of the commercial
//! medical share within the private sector. Indices are zero-based
//! throughout; `N_LATENT == 2` modelled sectors.

use std::f64::consts::{LN_2, PI};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::correlation::CorrelationMatrices;
use crate::error::{Error, Result};
use crate::spline::BasisSet;

pub const N_LATENT: usize = 2;

/// Latent values are saturated here so shares stay strictly inside (0, 1).
pub const PSI_LIMIT: f64 = 35.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

// ---------------------------------------------------------------------------
// Compositional transform

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShareTriple {
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
}

impl ShareTriple {
    pub fn get(&self, sector: usize) -> f64 {
        match sector {
            0 => self.phi1,
            1 => self.phi2,
            _ => self.phi3,
        }
    }

    pub fn sum(&self) -> f64 {
        self.phi1 + self.phi2 + self.phi3
    }
}

pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Public, commercial-medical and other-private shares from the two latent
/// logits.
pub fn compose_shares(psi1: f64, psi2: f64) -> ShareTriple {
    let psi1 = psi1.clamp(-PSI_LIMIT, PSI_LIMIT);
    let psi2 = psi2.clamp(-PSI_LIMIT, PSI_LIMIT);
    let phi1 = inv_logit(psi1);
    let private = inv_logit(-psi1);
    ShareTriple {
        phi1,
        phi2: private * inv_logit(psi2),
        phi3: private * inv_logit(-psi2),
    }
}

// ---------------------------------------------------------------------------
// Spline coefficients and latent curves

/// Rebuilds `K = deltas.len() + 1` coefficients from the reference value
/// `alpha` at `k_star` and first differences `deltas[h] = beta[h+1] - beta[h]`.
pub fn reconstruct_betas(alpha: f64, deltas: &[f64], k_star: usize) -> Result<Vec<f64>> {
    let k = deltas.len() + 1;
    if k_star >= k {
        return Err(Error::Shape(format!(
            "reference index {k_star} out of range for {k} coefficients"
        )));
    }
    let mut beta = vec![0.0; k];
    fill_betas(alpha, deltas, k_star, &mut beta);
    Ok(beta)
}

pub(crate) fn fill_betas(alpha: f64, deltas: &[f64], k_star: usize, beta: &mut [f64]) {
    beta[k_star] = alpha;
    for k in (0..k_star).rev() {
        beta[k] = beta[k + 1] - deltas[k];
    }
    for k in k_star + 1..beta.len() {
        beta[k] = beta[k - 1] + deltas[k - 1];
    }
}

/// Latent series on the basis grid: `basis * beta`.
pub fn latent_curve(beta: &[f64], basis: &BasisSet) -> Result<Vec<f64>> {
    if beta.len() != basis.n_basis() {
        return Err(Error::Shape(format!(
            "{} coefficients for {} basis functions",
            beta.len(),
            basis.n_basis()
        )));
    }
    let b = DVector::from_column_slice(beta);
    Ok((&basis.basis * b).iter().copied().collect())
}

/// How a country's latent series is built from its coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum LatentDesign {
    /// Cubic B-spline basis with coefficients anchored at `k_star`.
    Spline(BasisSet),
    /// Straight line through the anchor year: two "coefficients" with weights
    /// `(1 - u, u)`, `u = year - anchor_year`, so that `beta = (alpha,
    /// alpha + slope)` gives `alpha + slope * u`.
    Linear { anchor_year: f64 },
}

impl LatentDesign {
    pub fn n_coef(&self) -> usize {
        match self {
            LatentDesign::Spline(b) => b.n_basis(),
            LatentDesign::Linear { .. } => 2,
        }
    }

    pub fn n_diffs(&self) -> usize {
        self.n_coef() - 1
    }

    pub fn k_star(&self) -> usize {
        match self {
            LatentDesign::Spline(b) => b.k_star,
            LatentDesign::Linear { .. } => 0,
        }
    }

    pub fn anchor_year(&self) -> f64 {
        match self {
            LatentDesign::Spline(b) => b.recent_year,
            LatentDesign::Linear { anchor_year } => *anchor_year,
        }
    }

    /// Design weights at an arbitrary year.
    pub fn row(&self, year: f64) -> Result<Vec<f64>> {
        match self {
            LatentDesign::Spline(b) => b.row(year),
            LatentDesign::Linear { anchor_year } => {
                let u = year - anchor_year;
                Ok(vec![1.0 - u, u])
            }
        }
    }

    /// Time window over which each difference `h` acts: the span between the
    /// peaks (Greville abscissae) of coefficients `h` and `h + 1`.
    pub fn difference_interval(&self, h: usize) -> (f64, f64) {
        match self {
            LatentDesign::Spline(b) => {
                let t = b.augmented_knots();
                let greville = |k: usize| (t[k + 1] + t[k + 2] + t[k + 3]) / 3.0;
                (greville(h), greville(h + 1))
            }
            LatentDesign::Linear { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

// ---------------------------------------------------------------------------
// Parameter layout and state

/// Typed reference to one scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRef {
    Alpha { c: usize, m: usize, s: usize },
    Delta { c: usize, s: usize, h: usize, m: usize },
    ThetaRegion { r: usize, m: usize, s: usize },
    ThetaWorld { m: usize, s: usize },
    SdAlpha { s: usize },
    SdTheta { s: usize },
    SdDelta { m: usize, s: usize },
}

impl ParamRef {
    pub fn is_scale(&self) -> bool {
        matches!(
            self,
            ParamRef::SdAlpha { .. } | ParamRef::SdTheta { .. } | ParamRef::SdDelta { .. }
        )
    }
}

/// Flat index map for all latent parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterLayout {
    pub n_countries: usize,
    pub n_methods: usize,
    pub n_regions: usize,
    /// Region index of each country.
    pub country_region: Vec<usize>,
    /// Number of first differences per country (`K_c - 1`).
    pub n_diffs: Vec<usize>,
    delta_offsets: Vec<usize>,
    theta_r_start: usize,
    theta_w_start: usize,
    sd_alpha_start: usize,
    sd_theta_start: usize,
    sd_delta_start: usize,
    len: usize,
}

impl ParameterLayout {
    pub fn new(n_methods: usize, n_regions: usize, country_region: Vec<usize>, n_diffs: Vec<usize>) -> Result<Self> {
        if country_region.len() != n_diffs.len() {
            return Err(Error::Shape("one region and one difference count per country".into()));
        }
        if let Some(&r) = country_region.iter().find(|&&r| r >= n_regions) {
            return Err(Error::Shape(format!("region index {r} >= {n_regions}")));
        }
        let n_countries = country_region.len();
        let mut offset = n_countries * n_methods * N_LATENT;
        let mut delta_offsets = Vec::with_capacity(n_countries);
        for &h in &n_diffs {
            delta_offsets.push(offset);
            offset += N_LATENT * h * n_methods;
        }
        let theta_r_start = offset;
        let theta_w_start = theta_r_start + n_regions * n_methods * N_LATENT;
        let sd_alpha_start = theta_w_start + n_methods * N_LATENT;
        let sd_theta_start = sd_alpha_start + N_LATENT;
        let sd_delta_start = sd_theta_start + N_LATENT;
        let len = sd_delta_start + n_methods * N_LATENT;
        Ok(Self {
            n_countries,
            n_methods,
            n_regions,
            country_region,
            n_diffs,
            delta_offsets,
            theta_r_start,
            theta_w_start,
            sd_alpha_start,
            sd_theta_start,
            sd_delta_start,
            len,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn alpha(&self, c: usize, m: usize, s: usize) -> usize {
        (c * self.n_methods + m) * N_LATENT + s
    }

    pub fn delta(&self, c: usize, s: usize, h: usize, m: usize) -> usize {
        self.delta_offsets[c] + (s * self.n_diffs[c] + h) * self.n_methods + m
    }

    /// Start of the contiguous `M`-vector `delta[c][s][h][..]`.
    pub fn delta_block(&self, c: usize, s: usize, h: usize) -> usize {
        self.delta(c, s, h, 0)
    }

    pub fn theta_region(&self, r: usize, m: usize, s: usize) -> usize {
        self.theta_r_start + (r * self.n_methods + m) * N_LATENT + s
    }

    pub fn theta_world(&self, m: usize, s: usize) -> usize {
        self.theta_w_start + m * N_LATENT + s
    }

    pub fn sd_alpha(&self, s: usize) -> usize {
        self.sd_alpha_start + s
    }

    pub fn sd_theta(&self, s: usize) -> usize {
        self.sd_theta_start + s
    }

    pub fn sd_delta(&self, m: usize, s: usize) -> usize {
        self.sd_delta_start + m * N_LATENT + s
    }

    pub fn first_scale(&self) -> usize {
        self.sd_alpha_start
    }

    pub fn decode(&self, i: usize) -> ParamRef {
        let m_n = self.n_methods;
        if i < self.delta_offsets.first().copied().unwrap_or(self.theta_r_start) {
            let s = i % N_LATENT;
            let cm = i / N_LATENT;
            return ParamRef::Alpha { c: cm / m_n, m: cm % m_n, s };
        }
        if i < self.theta_r_start {
            let c = self.delta_offsets.partition_point(|&o| o <= i) - 1;
            let local = i - self.delta_offsets[c];
            let m = local % m_n;
            let sh = local / m_n;
            let h_n = self.n_diffs[c];
            return ParamRef::Delta { c, s: sh / h_n, h: sh % h_n, m };
        }
        if i < self.theta_w_start {
            let local = i - self.theta_r_start;
            let s = local % N_LATENT;
            let rm = local / N_LATENT;
            return ParamRef::ThetaRegion { r: rm / m_n, m: rm % m_n, s };
        }
        if i < self.sd_alpha_start {
            let local = i - self.theta_w_start;
            return ParamRef::ThetaWorld { m: local / N_LATENT, s: local % N_LATENT };
        }
        if i < self.sd_theta_start {
            return ParamRef::SdAlpha { s: i - self.sd_alpha_start };
        }
        if i < self.sd_delta_start {
            return ParamRef::SdTheta { s: i - self.sd_theta_start };
        }
        let local = i - self.sd_delta_start;
        ParamRef::SdDelta { m: local / N_LATENT, s: local % N_LATENT }
    }

    /// Human-readable parameter name built from the supplied labels.
    pub fn name(&self, i: usize, countries: &[String], regions: &[String], methods: &[String]) -> String {
        let sector = ["public", "private_medical"];
        match self.decode(i) {
            ParamRef::Alpha { c, m, s } => format!("alpha[{},{},{}]", countries[c], methods[m], sector[s]),
            ParamRef::Delta { c, s, h, m } => {
                format!("delta[{},{},{},{}]", countries[c], sector[s], h + 1, methods[m])
            }
            ParamRef::ThetaRegion { r, m, s } => {
                format!("theta_region[{},{},{}]", regions[r], methods[m], sector[s])
            }
            ParamRef::ThetaWorld { m, s } => format!("theta_world[{},{}]", methods[m], sector[s]),
            ParamRef::SdAlpha { s } => format!("sd_alpha[{}]", sector[s]),
            ParamRef::SdTheta { s } => format!("sd_theta[{}]", sector[s]),
            ParamRef::SdDelta { m, s } => format!("sd_delta[{},{}]", methods[m], sector[s]),
        }
    }
}

/// One full assignment of the latent parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    pub layout: Arc<ParameterLayout>,
    pub values: Vec<f64>,
}

impl ParameterState {
    pub fn zeros(layout: Arc<ParameterLayout>) -> Self {
        let values = vec![0.0; layout.len()];
        Self { layout, values }
    }

    pub fn from_values(layout: Arc<ParameterLayout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Shape(format!(
                "{} values for a layout of {}",
                values.len(),
                layout.len()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn alpha(&self, c: usize, m: usize, s: usize) -> f64 {
        self.values[self.layout.alpha(c, m, s)]
    }

    pub fn delta(&self, c: usize, s: usize, h: usize, m: usize) -> f64 {
        self.values[self.layout.delta(c, s, h, m)]
    }

    /// Differences `delta[c][s][..][m]` along `h`.
    pub fn delta_series(&self, c: usize, m: usize, s: usize) -> Vec<f64> {
        (0..self.layout.n_diffs[c]).map(|h| self.delta(c, s, h, m)).collect()
    }

    pub fn set(&mut self, index: usize, value: f64) {
        self.values[index] = value;
    }

    pub fn check_scales(&self) -> Result<()> {
        let first = self.layout.first_scale();
        match self.values[first..].iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            Some(i) => Err(Error::Domain(format!(
                "scale parameter #{} is {} (must be > 0)",
                first + i,
                self.values[first + i]
            ))),
            None => Ok(()),
        }
    }
}

// ---------------------------------------------------------------------------
// Priors

/// Whether half-Cauchy priors act on standard deviations or variances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScalePrior {
    #[default]
    StdDev,
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorConfig {
    /// Variance of the Normal prior on world-level means.
    pub theta_world_variance: f64,
    pub half_cauchy_scale: f64,
    pub scale_prior: ScalePrior,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            theta_world_variance: 100.0,
            half_cauchy_scale: 1.0,
            scale_prior: ScalePrior::StdDev,
        }
    }
}

impl PriorConfig {
    /// Log prior density of one scale parameter, in standard-deviation
    /// coordinates (includes the change of variables when the prior acts on
    /// the variance).
    pub fn scale_logpdf(&self, sd: f64) -> f64 {
        let a = self.half_cauchy_scale;
        match self.scale_prior {
            ScalePrior::StdDev => half_cauchy_logpdf(sd, a),
            ScalePrior::Variance => half_cauchy_logpdf(sd * sd, a) + LN_2 + sd.ln(),
        }
    }

    pub fn scale_logpdf_grad(&self, sd: f64) -> f64 {
        let a2 = self.half_cauchy_scale * self.half_cauchy_scale;
        match self.scale_prior {
            ScalePrior::StdDev => -2.0 * sd / (a2 + sd * sd),
            ScalePrior::Variance => {
                let s3 = sd * sd * sd;
                -4.0 * s3 / (a2 + s3 * sd) + 1.0 / sd
            }
        }
    }
}

pub fn half_cauchy_logpdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    (2.0 / (PI * scale)).ln() - (x / scale).powi(2).ln_1p()
}

pub fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -LN_SQRT_2PI - sd.ln() - 0.5 * z * z
}

/// Precomputed correlation structure for the multivariate-normal prior on
/// each `delta[c][s][h][..]` vector.
#[derive(Debug, Clone)]
pub struct DeltaPrior {
    pub precision: [DMatrix<f64>; N_LATENT],
    /// Lower Cholesky factor of each correlation matrix.
    pub chol: [DMatrix<f64>; N_LATENT],
    pub log_det: [f64; N_LATENT],
}

impl DeltaPrior {
    pub fn new(rho: &CorrelationMatrices) -> Result<Self> {
        rho.validate()?;
        let build = |s: usize| -> Result<(DMatrix<f64>, DMatrix<f64>, f64)> {
            let chol = rho.rho[s].clone().cholesky().ok_or_else(|| {
                Error::Numerical(format!("correlation matrix for latent sector {s} is not positive definite"))
            })?;
            let l = chol.l();
            let log_det = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
            Ok((chol.inverse(), l, log_det))
        };
        let (p0, l0, d0) = build(0)?;
        let (p1, l1, d1) = build(1)?;
        Ok(Self {
            precision: [p0, p1],
            chol: [l0, l1],
            log_det: [d0, d1],
        })
    }

    pub fn n_methods(&self) -> usize {
        self.precision[0].nrows()
    }

    /// Multivariate-normal log density of `delta` with zero mean and
    /// covariance `diag(sds) R diag(sds)`.
    pub fn logpdf(&self, s: usize, delta: &[f64], sds: &[f64]) -> f64 {
        let m = delta.len();
        let p = &self.precision[s];
        let mut quad = 0.0;
        let mut log_sd = 0.0;
        for i in 0..m {
            let zi = delta[i] / sds[i];
            log_sd += sds[i].ln();
            let mut row = 0.0;
            for j in 0..m {
                row += p[(i, j)] * delta[j] / sds[j];
            }
            quad += zi * row;
        }
        -(m as f64) * LN_SQRT_2PI - 0.5 * self.log_det[s] - log_sd - 0.5 * quad
    }

    /// Gradients of [`Self::logpdf`] with respect to `delta` and `sds`.
    pub fn logpdf_grad(&self, s: usize, delta: &[f64], sds: &[f64], g_delta: &mut [f64], g_sd: &mut [f64]) {
        let m = delta.len();
        let p = &self.precision[s];
        let z: Vec<f64> = delta.iter().zip(sds).map(|(d, sd)| d / sd).collect();
        for i in 0..m {
            let pz: f64 = (0..m).map(|j| p[(i, j)] * z[j]).sum();
            g_delta[i] += -pz / sds[i];
            g_sd[i] += -1.0 / sds[i] + pz * z[i] / sds[i];
        }
    }
}

/// Joint log prior of all latent parameters.
pub fn log_prior(state: &ParameterState, rho: &CorrelationMatrices, hyper: &PriorConfig) -> Result<f64> {
    state.check_scales()?;
    let prior = DeltaPrior::new(rho)?;
    if prior.n_methods() != state.layout.n_methods {
        return Err(Error::Shape(format!(
            "correlation matrices are {0}x{0} but the state has {1} methods",
            prior.n_methods(),
            state.layout.n_methods
        )));
    }
    Ok(log_prior_with(state, &prior, hyper))
}

pub(crate) fn log_prior_with(state: &ParameterState, prior: &DeltaPrior, hyper: &PriorConfig) -> f64 {
    let l = &state.layout;
    let v = &state.values;
    let mut total = 0.0;
    let world_sd = hyper.theta_world_variance.sqrt();
    for s in 0..N_LATENT {
        let sd_a = v[l.sd_alpha(s)];
        let sd_t = v[l.sd_theta(s)];
        total += hyper.scale_logpdf(sd_a) + hyper.scale_logpdf(sd_t);
        for m in 0..l.n_methods {
            total += hyper.scale_logpdf(v[l.sd_delta(m, s)]);
            let tw = v[l.theta_world(m, s)];
            total += normal_logpdf(tw, 0.0, world_sd);
            for r in 0..l.n_regions {
                total += normal_logpdf(v[l.theta_region(r, m, s)], tw, sd_t);
            }
            for c in 0..l.n_countries {
                let tr = v[l.theta_region(l.country_region[c], m, s)];
                total += normal_logpdf(v[l.alpha(c, m, s)], tr, sd_a);
            }
        }
        let sds: Vec<f64> = (0..l.n_methods).map(|m| v[l.sd_delta(m, s)]).collect();
        for c in 0..l.n_countries {
            for h in 0..l.n_diffs[c] {
                let start = l.delta_block(c, s, h);
                total += prior.logpdf(s, &v[start..start + l.n_methods], &sds);
            }
        }
    }
    total
}

/// Gradient of the joint log prior with respect to every parameter (scales
/// in natural, not log, coordinates).
pub fn log_prior_grad(state: &ParameterState, rho: &CorrelationMatrices, hyper: &PriorConfig) -> Result<Vec<f64>> {
    state.check_scales()?;
    let prior = DeltaPrior::new(rho)?;
    let mut grad = vec![0.0; state.values.len()];
    log_prior_grad_with(state, &prior, hyper, &mut grad);
    Ok(grad)
}

pub(crate) fn log_prior_grad_with(state: &ParameterState, prior: &DeltaPrior, hyper: &PriorConfig, grad: &mut [f64]) {
    let l = &state.layout;
    let v = &state.values;
    let world_var = hyper.theta_world_variance;
    for s in 0..N_LATENT {
        let sd_a = v[l.sd_alpha(s)];
        let sd_t = v[l.sd_theta(s)];
        grad[l.sd_alpha(s)] += hyper.scale_logpdf_grad(sd_a);
        grad[l.sd_theta(s)] += hyper.scale_logpdf_grad(sd_t);
        for m in 0..l.n_methods {
            grad[l.sd_delta(m, s)] += hyper.scale_logpdf_grad(v[l.sd_delta(m, s)]);
            let tw_i = l.theta_world(m, s);
            let tw = v[tw_i];
            grad[tw_i] += -tw / world_var;
            for r in 0..l.n_regions {
                let tr_i = l.theta_region(r, m, s);
                let z = (v[tr_i] - tw) / sd_t;
                grad[tr_i] += -z / sd_t;
                grad[tw_i] += z / sd_t;
                grad[l.sd_theta(s)] += (z * z - 1.0) / sd_t;
            }
            for c in 0..l.n_countries {
                let tr_i = l.theta_region(l.country_region[c], m, s);
                let a_i = l.alpha(c, m, s);
                let z = (v[a_i] - v[tr_i]) / sd_a;
                grad[a_i] += -z / sd_a;
                grad[tr_i] += z / sd_a;
                grad[l.sd_alpha(s)] += (z * z - 1.0) / sd_a;
            }
        }
        let sds: Vec<f64> = (0..l.n_methods).map(|m| v[l.sd_delta(m, s)]).collect();
        let mut g_sd = vec![0.0; l.n_methods];
        for c in 0..l.n_countries {
            for h in 0..l.n_diffs[c] {
                let start = l.delta_block(c, s, h);
                let end = start + l.n_methods;
                prior.logpdf_grad(s, &v[start..end], &sds, &mut grad[start..end], &mut g_sd);
            }
        }
        for m in 0..l.n_methods {
            grad[l.sd_delta(m, s)] += g_sd[m];
        }
    }
}
