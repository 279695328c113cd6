//! Model specification and the joint log posterior.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::correlation::CorrelationMatrices;
use crate::data::{nudge_proportion, CountryInfo, Dataset, Method};
use crate::error::{Error, Result};
use crate::inference::likelihood::{truncnorm_logpdf_dmu, truncnorm_logpdf_unchecked};
use crate::model::{
    compose_shares, fill_betas, inv_logit, log_prior_grad_with, log_prior_with, DeltaPrior, LatentDesign,
    ParameterLayout, ParameterState, PriorConfig, ShareTriple, N_LATENT, PSI_LIMIT,
};
use crate::variants::ModelKind;

/// Everything needed to map a parameter vector to supply shares.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub methods: Vec<Method>,
    pub countries: Vec<CountryInfo>,
    pub regions: Vec<String>,
    pub designs: Vec<LatentDesign>,
    pub year_grid: Vec<f64>,
    pub window: (f64, f64),
    pub spacing: f64,
    pub layout: Arc<ParameterLayout>,
    grid_rows: Vec<DMatrix<f64>>,
}

impl ModelSpec {
    pub fn build(dataset: &Dataset, kind: ModelKind, spacing: f64) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Validation("cannot build a model from an empty dataset".into()));
        }
        Self::from_parts(
            kind,
            dataset.methods.clone(),
            dataset.countries.clone(),
            dataset.regions.clone(),
            dataset.window,
            spacing,
            dataset.year_grid.clone(),
        )
    }

    pub fn from_parts(
        kind: ModelKind,
        methods: Vec<Method>,
        countries: Vec<CountryInfo>,
        regions: Vec<String>,
        window: (f64, f64),
        spacing: f64,
        year_grid: Vec<f64>,
    ) -> Result<Self> {
        let designs = countries
            .iter()
            .map(|c| kind.design(&c.name, c.recent_year, window, spacing, &year_grid))
            .collect::<Result<Vec<_>>>()?;
        let country_region = countries
            .iter()
            .map(|c| {
                regions
                    .iter()
                    .position(|r| *r == c.region)
                    .ok_or_else(|| Error::Validation(format!("unknown region `{}`", c.region)))
            })
            .collect::<Result<Vec<_>>>()?;
        let layout = ParameterLayout::new(
            methods.len(),
            regions.len(),
            country_region,
            designs.iter().map(LatentDesign::n_diffs).collect(),
        )?;
        let grid_rows = designs
            .iter()
            .map(|d| {
                let mut m = DMatrix::zeros(year_grid.len(), d.n_coef());
                for (r, &y) in year_grid.iter().enumerate() {
                    for (k, v) in d.row(y)?.into_iter().enumerate() {
                        m[(r, k)] = v;
                    }
                }
                Ok(m)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind,
            methods,
            countries,
            regions,
            designs,
            year_grid,
            window,
            spacing,
            layout: Arc::new(layout),
            grid_rows,
        })
    }

    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    pub fn n_methods(&self) -> usize {
        self.methods.len()
    }

    pub fn country_index(&self, name: &str) -> Option<usize> {
        self.countries.iter().position(|c| c.name == name)
    }

    pub fn method_index(&self, method: Method) -> Option<usize> {
        self.methods.iter().position(|&m| m == method)
    }

    pub fn param_names(&self) -> Vec<String> {
        let countries: Vec<String> = self.countries.iter().map(|c| c.name.clone()).collect();
        let methods: Vec<String> = self.methods.iter().map(|m| m.label().to_string()).collect();
        (0..self.layout.len())
            .map(|i| self.layout.name(i, &countries, &self.regions, &methods))
            .collect()
    }

    /// Coefficients of latent series `s` for country `c`, method `m`.
    pub fn betas(&self, values: &[f64], c: usize, m: usize, s: usize, out: &mut Vec<f64>) {
        let l = &self.layout;
        let h_n = l.n_diffs[c];
        let deltas: Vec<f64> = (0..h_n).map(|h| values[l.delta(c, s, h, m)]).collect();
        out.clear();
        out.resize(h_n + 1, 0.0);
        fill_betas(values[l.alpha(c, m, s)], &deltas, self.designs[c].k_star(), out);
    }

    /// Shares at an arbitrary year.
    pub fn shares_at(&self, values: &[f64], c: usize, m: usize, year: f64) -> Result<ShareTriple> {
        let row = self.designs[c].row(year)?;
        let mut beta = Vec::new();
        let mut psi = [0.0; N_LATENT];
        for (s, p) in psi.iter_mut().enumerate() {
            self.betas(values, c, m, s, &mut beta);
            *p = dot(&row, &beta);
        }
        Ok(compose_shares(psi[0], psi[1]))
    }

    /// Shares on every grid year.
    pub fn trajectory(&self, values: &[f64], c: usize, m: usize) -> Vec<ShareTriple> {
        let rows = &self.grid_rows[c];
        let mut b0 = Vec::new();
        let mut b1 = Vec::new();
        self.betas(values, c, m, 0, &mut b0);
        self.betas(values, c, m, 1, &mut b1);
        (0..rows.nrows())
            .map(|r| {
                let (mut p0, mut p1) = (0.0, 0.0);
                for k in 0..rows.ncols() {
                    p0 += rows[(r, k)] * b0[k];
                    p1 += rows[(r, k)] * b1[k];
                }
                compose_shares(p0, p1)
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub(crate) struct PreparedObs {
    pub c: usize,
    pub m: usize,
    /// 0 = public, 1 = commercial medical.
    pub s: usize,
    pub year: f64,
    pub y: f64,
    pub se: f64,
    pub row: Vec<f64>,
}

/// Likelihood-eligible observations mapped onto a [`ModelSpec`].
#[derive(Debug, Clone)]
pub struct ObservationIndex {
    pub(crate) obs: Vec<PreparedObs>,
    /// Observation indices per `c * M + m` cell.
    pub(crate) cells: Vec<Vec<usize>>,
}

impl ObservationIndex {
    pub fn new(spec: &ModelSpec, dataset: &Dataset) -> Result<Self> {
        let n_m = spec.n_methods();
        let mut obs = Vec::new();
        let mut cells = vec![Vec::new(); spec.n_countries() * n_m];
        for o in dataset.observations.iter().filter(|o| o.sector.in_likelihood()) {
            let c = spec
                .country_index(&o.country)
                .ok_or_else(|| Error::Validation(format!("country `{}` not in model", o.country)))?;
            let m = spec
                .method_index(o.method)
                .ok_or_else(|| Error::Validation(format!("method `{}` not in model", o.method)))?;
            cells[c * n_m + m].push(obs.len());
            obs.push(PreparedObs {
                c,
                m,
                s: o.sector.index(),
                year: o.year,
                y: nudge_proportion(o.proportion),
                se: o.se,
                row: spec.designs[c].row(o.year)?,
            });
        }
        Ok(Self { obs, cells })
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

/// Truncated-normal log likelihood of all public and commercial-medical
/// observations.
pub fn log_likelihood(dataset: &Dataset, state: &ParameterState, spec: &ModelSpec) -> Result<f64> {
    if *state.layout != *spec.layout {
        return Err(Error::Shape("state layout does not match the model".into()));
    }
    let index = ObservationIndex::new(spec, dataset)?;
    Ok((0..index.cells.len())
        .map(|cell| cell_loglik(spec, &index, &state.values, cell / spec.n_methods(), cell % spec.n_methods()))
        .sum())
}

pub(crate) fn cell_loglik(spec: &ModelSpec, index: &ObservationIndex, values: &[f64], c: usize, m: usize) -> f64 {
    let members = &index.cells[c * spec.n_methods() + m];
    if members.is_empty() {
        return 0.0;
    }
    let mut b0 = Vec::new();
    let mut b1 = Vec::new();
    spec.betas(values, c, m, 0, &mut b0);
    spec.betas(values, c, m, 1, &mut b1);
    members
        .iter()
        .map(|&i| {
            let o = &index.obs[i];
            let psi1 = dot(&o.row, &b0);
            let mu = if o.s == 0 {
                compose_shares(psi1, 0.0).phi1
            } else {
                compose_shares(psi1, dot(&o.row, &b1)).phi2
            };
            truncnorm_logpdf_unchecked(o.y, mu, o.se)
        })
        .sum()
}

/// Posterior: specification, observations, correlation plug-in and priors.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: Arc<ModelSpec>,
    pub rho: CorrelationMatrices,
    pub prior: PriorConfig,
    pub(crate) delta_prior: DeltaPrior,
    pub(crate) index: ObservationIndex,
}

impl Model {
    pub fn new(spec: Arc<ModelSpec>, dataset: &Dataset, rho: CorrelationMatrices, prior: PriorConfig) -> Result<Self> {
        if rho.n_methods() != spec.n_methods() {
            return Err(Error::Shape(format!(
                "{} methods but {1}x{1} correlation matrices",
                spec.n_methods(),
                rho.n_methods()
            )));
        }
        let delta_prior = DeltaPrior::new(&rho)?;
        let index = ObservationIndex::new(&spec, dataset)?;
        Ok(Self {
            spec,
            rho,
            prior,
            delta_prior,
            index,
        })
    }

    pub fn layout(&self) -> &Arc<ParameterLayout> {
        &self.spec.layout
    }

    pub fn n_observations(&self) -> usize {
        self.index.len()
    }

    pub(crate) fn cell_loglik(&self, values: &[f64], c: usize, m: usize) -> f64 {
        cell_loglik(&self.spec, &self.index, values, c, m)
    }

    pub fn log_likelihood(&self, state: &ParameterState) -> f64 {
        let n_m = self.spec.n_methods();
        (0..self.index.cells.len())
            .map(|cell| self.cell_loglik(&state.values, cell / n_m, cell % n_m))
            .sum()
    }

    pub fn log_prior(&self, state: &ParameterState) -> Result<f64> {
        state.check_scales()?;
        Ok(log_prior_with(state, &self.delta_prior, &self.prior))
    }

    pub fn log_posterior(&self, state: &ParameterState) -> Result<f64> {
        Ok(self.log_prior(state)? + self.log_likelihood(state))
    }

    /// Gradient of the log likelihood with respect to every parameter.
    pub fn log_likelihood_grad(&self, state: &ParameterState) -> Vec<f64> {
        let spec = &self.spec;
        let l = &spec.layout;
        let v = &state.values;
        let mut grad = vec![0.0; v.len()];
        let mut b0 = Vec::new();
        let mut b1 = Vec::new();
        for c in 0..spec.n_countries() {
            let k_star = spec.designs[c].k_star();
            for m in 0..spec.n_methods() {
                let members = &self.index.cells[c * spec.n_methods() + m];
                if members.is_empty() {
                    continue;
                }
                spec.betas(v, c, m, 0, &mut b0);
                spec.betas(v, c, m, 1, &mut b1);
                for &i in members {
                    let o = &self.index.obs[i];
                    let psi1 = dot(&o.row, &b0);
                    let psi2 = dot(&o.row, &b1);
                    let shares = compose_shares(psi1, psi2);
                    // Derivatives of the observed share with respect to psi1, psi2.
                    let live1 = if psi1.abs() < PSI_LIMIT { 1.0 } else { 0.0 };
                    let live2 = if psi2.abs() < PSI_LIMIT { 1.0 } else { 0.0 };
                    let p1 = shares.phi1;
                    let (mu, dpsi) = if o.s == 0 {
                        (p1, [live1 * p1 * (1.0 - p1), 0.0])
                    } else {
                        let r = inv_logit(psi2.clamp(-PSI_LIMIT, PSI_LIMIT));
                        (
                            shares.phi2,
                            [-live1 * p1 * (1.0 - p1) * r, live2 * (1.0 - p1) * r * (1.0 - r)],
                        )
                    };
                    let dmu = truncnorm_logpdf_dmu(o.y, mu, o.se);
                    let n = o.row.len();
                    let total: f64 = o.row.iter().sum();
                    for (s, &d) in dpsi.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        let g = dmu * d;
                        grad[l.alpha(c, m, s)] += g * total;
                        // d psi / d delta_h: +sum_{k>h} row_k ahead of the
                        // reference, -sum_{k<=h} row_k behind it.
                        let mut prefix = 0.0;
                        for h in 0..n - 1 {
                            prefix += o.row[h];
                            let w = if h >= k_star { total - prefix } else { -prefix };
                            grad[l.delta(c, s, h, m)] += g * w;
                        }
                    }
                }
            }
        }
        grad
    }

    pub fn log_prior_grad(&self, state: &ParameterState) -> Vec<f64> {
        let mut grad = vec![0.0; state.values.len()];
        log_prior_grad_with(state, &self.delta_prior, &self.prior, &mut grad);
        grad
    }

    pub fn log_posterior_grad(&self, state: &ParameterState) -> Vec<f64> {
        let mut g = self.log_likelihood_grad(state);
        for (a, b) in g.iter_mut().zip(self.log_prior_grad(state)) {
            *a += b;
        }
        g
    }
}
