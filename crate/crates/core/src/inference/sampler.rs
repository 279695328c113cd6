//! Adaptive random-walk Metropolis-within-Gibbs.
//!
//! One sweep updates, in a fixed order: every `alpha`, every `delta` (scalar
//! or per-`(c, s, h)` block), every regional and world mean, then every scale
//! parameter on the log scale. Step sizes adapt during warmup by
//! Robbins–Monro on the log step, `gamma_n = (n + 1)^-0.6`, and are frozen
//! afterwards. Each chain owns a ChaCha8 stream derived from `(seed, chain)`.
//!
//! Each sweep ends with joint moves that break the dependence between a
//! scale and the parameters it governs: every scale is rescaled together
//! with its children's deviations (`sd -> e^eps sd`, `x -> mean + e^eps (x -
//! mean)`), and every regional mean is shifted together with its countries'
//! intercepts.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::draws::{ChainDraws, PosteriorDraws};
use crate::inference::posterior::Model;
use crate::model::{log_prior_with, logit, normal_logpdf, ParamRef, ParameterState, N_LATENT};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_warmup: usize,
    /// Post-warmup iterations per chain (before thinning).
    pub n_samples: usize,
    pub thin: usize,
    pub seed: u64,
    pub target_accept_scalar: f64,
    pub target_accept_block: f64,
    pub block_delta_updates: bool,
    /// Worker threads for chain-level parallelism; `None` uses the global pool.
    pub n_threads: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_warmup: 1000,
            n_samples: 1000,
            thin: 1,
            seed: 0,
            target_accept_scalar: 0.44,
            target_accept_block: 0.234,
            block_delta_updates: false,
            n_threads: None,
        }
    }
}

impl SamplerConfig {
    pub fn draws_per_chain(&self) -> usize {
        self.n_samples / self.thin.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 2 {
            return Err(Error::Config(format!("n_chains must be at least 2, got {}", self.n_chains)));
        }
        if self.thin == 0 || self.n_samples == 0 {
            return Err(Error::Config("n_samples and thin must be positive".into()));
        }
        for (name, t) in [
            ("target_accept_scalar", self.target_accept_scalar),
            ("target_accept_block", self.target_accept_block),
        ] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {t}")));
            }
        }
        if self.n_threads == Some(0) {
            return Err(Error::Config("n_threads must be positive".into()));
        }
        if self.draws_per_chain() < 500 {
            warn!(
                "{} retained draws per chain; summaries want at least 500",
                self.draws_per_chain()
            );
        }
        Ok(())
    }
}

/// Overrides for chain initialization.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Starting values (jittered for non-frozen, non-difference parameters).
    pub initial: Option<Vec<f64>>,
    /// Parameters held fixed at their initial value.
    pub frozen: Option<Vec<bool>>,
}

pub fn run_mcmc(model: &Model, cfg: &SamplerConfig) -> Result<PosteriorDraws> {
    run_mcmc_with(model, cfg, &RunOptions::default())
}

pub fn run_mcmc_with(model: &Model, cfg: &SamplerConfig, opts: &RunOptions) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let n = model.layout().len();
    for (name, len) in [
        ("initial", opts.initial.as_ref().map(Vec::len)),
        ("frozen", opts.frozen.as_ref().map(Vec::len)),
    ] {
        if let Some(len) = len {
            if len != n {
                return Err(Error::Shape(format!("{name} has {len} entries for {n} parameters")));
            }
        }
    }
    let run = |chain: usize| Chain::new(model, cfg, opts, chain).and_then(|c| c.run());
    let results: Vec<Result<ChainDraws>> = match cfg.n_threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| (0..cfg.n_chains).into_par_iter().map(run).collect()),
        None => (0..cfg.n_chains).into_par_iter().map(run).collect(),
    };
    let chains = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(PosteriorDraws {
        spec: model.spec.clone(),
        rho: model.rho.clone(),
        seed: cfg.seed,
        config: cfg.clone(),
        chains,
        provenance: String::new(),
    })
}

const JITTER_SD: f64 = 0.25;
const INITIAL_SD: f64 = 0.3;
const LOG_STEP_BOUNDS: (f64, f64) = (-15.0, 5.0);

struct Chain<'a> {
    model: &'a Model,
    cfg: &'a SamplerConfig,
    values: Vec<f64>,
    cell_ll: Vec<f64>,
    rng: ChaCha8Rng,
    frozen: Vec<bool>,
    refs: Vec<ParamRef>,
    log_step: Vec<f64>,
    accepted: Vec<u32>,
    tried: Vec<u32>,
    /// `(c, s, h)` per block and its start index.
    blocks: Vec<(usize, usize, usize)>,
    block_log_step: Vec<f64>,
    block_accepted: Vec<u32>,
    block_tried: Vec<u32>,
    region_countries: Vec<Vec<usize>>,
    joint: Vec<JointMove>,
    joint_log_step: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
enum JointMove {
    DeltaScale { m: usize, s: usize },
    AlphaScale { s: usize },
    ThetaScale { s: usize },
    RegionShift { r: usize, m: usize, s: usize },
}

impl<'a> Chain<'a> {
    fn new(model: &'a Model, cfg: &'a SamplerConfig, opts: &RunOptions, chain: usize) -> Result<Self> {
        let layout = model.layout();
        let n = layout.len();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(chain as u64 + 1);
        let frozen = opts.frozen.clone().unwrap_or_else(|| vec![false; n]);
        let refs: Vec<ParamRef> = (0..n).map(|i| layout.decode(i)).collect();
        let base = match &opts.initial {
            Some(v) => v.clone(),
            None => default_initial(model),
        };
        let mut values = base;
        for i in 0..n {
            if frozen[i] || matches!(refs[i], ParamRef::Delta { .. }) {
                continue;
            }
            let z: f64 = rng.sample(StandardNormal);
            if refs[i].is_scale() {
                values[i] *= (JITTER_SD * z).exp();
            } else {
                values[i] += JITTER_SD * z;
            }
        }
        let mut blocks = Vec::new();
        for c in 0..layout.n_countries {
            for s in 0..N_LATENT {
                for h in 0..layout.n_diffs[c] {
                    blocks.push((c, s, h));
                }
            }
        }
        let mut region_countries = vec![Vec::new(); layout.n_regions];
        for (c, &r) in layout.country_region.iter().enumerate() {
            region_countries[r].push(c);
        }
        let n_m = layout.n_methods;
        let cell_ll = (0..layout.n_countries * n_m)
            .map(|cell| model.cell_loglik(&values, cell / n_m, cell % n_m))
            .collect();
        let n_blocks = blocks.len();
        let mut joint = Vec::new();
        for s in 0..N_LATENT {
            for m in 0..n_m {
                joint.push(JointMove::DeltaScale { m, s });
            }
            joint.push(JointMove::AlphaScale { s });
            joint.push(JointMove::ThetaScale { s });
            for r in 0..layout.n_regions {
                for m in 0..n_m {
                    joint.push(JointMove::RegionShift { r, m, s });
                }
            }
        }
        let n_joint = joint.len();
        let chain = Self {
            model,
            cfg,
            values,
            cell_ll,
            rng,
            frozen,
            refs,
            log_step: vec![0.2f64.ln(); n],
            accepted: vec![0; n],
            tried: vec![0; n],
            blocks,
            block_log_step: vec![(1.0 / (n_m as f64).sqrt()).ln(); n_blocks],
            block_accepted: vec![0; n_blocks],
            block_tried: vec![0; n_blocks],
            region_countries,
            joint,
            joint_log_step: vec![0.1f64.ln(); n_joint],
        };
        chain.check_initial()?;
        Ok(chain)
    }

    fn check_initial(&self) -> Result<()> {
        let state = ParameterState::from_values(self.model.layout().clone(), self.values.clone())?;
        let lp = self.model.log_prior(&state)?;
        let ll: f64 = self.cell_ll.iter().sum();
        if (lp + ll).is_finite() {
            return Ok(());
        }
        let names = self.model.spec.param_names();
        let dump: Vec<String> = self
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_finite())
            .map(|(i, v)| format!("{}={v}", names[i]))
            .chain(
                self.cell_ll
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| !v.is_finite())
                    .map(|(cell, v)| format!("loglik[cell {cell}]={v}")),
            )
            .take(20)
            .collect();
        Err(Error::Numerical(format!(
            "non-finite log posterior at initialization (prior {lp}, likelihood {ll}): {}",
            dump.join(", ")
        )))
    }

    fn run(mut self) -> Result<ChainDraws> {
        let n = self.values.len();
        let keep = self.cfg.draws_per_chain();
        let mut stored = Vec::with_capacity(keep * n);
        for it in 0..self.cfg.n_warmup {
            let gamma = ((it + 1) as f64).powf(-0.6);
            self.sweep(Some(gamma))?;
        }
        self.accepted.iter_mut().for_each(|a| *a = 0);
        self.tried.iter_mut().for_each(|a| *a = 0);
        self.block_accepted.iter_mut().for_each(|a| *a = 0);
        self.block_tried.iter_mut().for_each(|a| *a = 0);
        for it in 0..self.cfg.n_samples {
            self.sweep(None)?;
            if (it + 1) % self.cfg.thin == 0 && stored.len() < keep * n {
                stored.extend_from_slice(&self.values);
            }
        }
        let rate = |a: &[u32], t: &[u32]| -> Vec<f64> {
            a.iter()
                .zip(t)
                .map(|(&a, &t)| if t == 0 { f64::NAN } else { a as f64 / t as f64 })
                .collect()
        };
        Ok(ChainDraws {
            n_draws: stored.len() / n.max(1),
            values: stored,
            acceptance: rate(&self.accepted, &self.tried),
            block_acceptance: rate(&self.block_accepted, &self.block_tried),
        })
    }

    fn sweep(&mut self, gamma: Option<f64>) -> Result<()> {
        let layout = self.model.layout().clone();
        for c in 0..layout.n_countries {
            for m in 0..layout.n_methods {
                for s in 0..N_LATENT {
                    self.update_scalar(layout.alpha(c, m, s), gamma)?;
                }
            }
        }
        if self.cfg.block_delta_updates {
            for b in 0..self.blocks.len() {
                self.update_block(b, gamma)?;
            }
        } else {
            for c in 0..layout.n_countries {
                for s in 0..N_LATENT {
                    for h in 0..layout.n_diffs[c] {
                        for m in 0..layout.n_methods {
                            self.update_scalar(layout.delta(c, s, h, m), gamma)?;
                        }
                    }
                }
            }
        }
        let first_scale = layout.first_scale();
        let theta_start = layout.theta_region(0, 0, 0);
        for i in theta_start..first_scale {
            self.update_scalar(i, gamma)?;
        }
        for i in first_scale..layout.len() {
            self.update_scalar(i, gamma)?;
        }
        for k in 0..self.joint.len() {
            self.update_joint(k, gamma)?;
        }
        Ok(())
    }

    /// Indices moved by a joint move, their proposed values, the log
    /// Jacobian and the likelihood cells touched.
    fn joint_proposal(&self, mv: JointMove, eps: f64) -> (Vec<(usize, f64)>, f64, Vec<(usize, usize)>) {
        let l = self.model.layout();
        let v = &self.values;
        let f = eps.exp();
        let mut moved = Vec::new();
        let mut cells = Vec::new();
        match mv {
            JointMove::DeltaScale { m, s } => {
                moved.push((l.sd_delta(m, s), v[l.sd_delta(m, s)] * f));
                for c in 0..l.n_countries {
                    for h in 0..l.n_diffs[c] {
                        let i = l.delta(c, s, h, m);
                        moved.push((i, v[i] * f));
                    }
                    cells.push((c, m));
                }
            }
            JointMove::AlphaScale { s } => {
                moved.push((l.sd_alpha(s), v[l.sd_alpha(s)] * f));
                for c in 0..l.n_countries {
                    for m in 0..l.n_methods {
                        let i = l.alpha(c, m, s);
                        let mean = v[l.theta_region(l.country_region[c], m, s)];
                        moved.push((i, mean + f * (v[i] - mean)));
                        cells.push((c, m));
                    }
                }
            }
            JointMove::ThetaScale { s } => {
                moved.push((l.sd_theta(s), v[l.sd_theta(s)] * f));
                for r in 0..l.n_regions {
                    for m in 0..l.n_methods {
                        let i = l.theta_region(r, m, s);
                        let mean = v[l.theta_world(m, s)];
                        moved.push((i, mean + f * (v[i] - mean)));
                    }
                }
            }
            JointMove::RegionShift { r, m, s } => {
                let i = l.theta_region(r, m, s);
                moved.push((i, v[i] + eps));
                for &c in &self.region_countries[r] {
                    let i = l.alpha(c, m, s);
                    moved.push((i, v[i] + eps));
                    cells.push((c, m));
                }
            }
        }
        let log_jacobian = match mv {
            JointMove::RegionShift { .. } => 0.0,
            _ => moved.len() as f64 * eps,
        };
        (moved, log_jacobian, cells)
    }

    fn full_log_prior(&mut self) -> f64 {
        let state = ParameterState {
            layout: self.model.layout().clone(),
            values: std::mem::take(&mut self.values),
        };
        let lp = log_prior_with(&state, &self.model.delta_prior, &self.model.prior);
        self.values = state.values;
        lp
    }

    fn update_joint(&mut self, k: usize, gamma: Option<f64>) -> Result<()> {
        let mv = self.joint[k];
        let z: f64 = self.rng.sample(StandardNormal);
        let eps = self.joint_log_step[k].exp() * z;
        let (moved, log_jacobian, cells) = self.joint_proposal(mv, eps);
        if moved.iter().any(|&(i, _)| self.frozen[i]) {
            return Ok(());
        }
        let n_m = self.model.layout().n_methods;
        let old: Vec<f64> = moved.iter().map(|&(i, _)| self.values[i]).collect();
        let prior_old = self.full_log_prior();
        for &(i, x) in &moved {
            self.values[i] = x;
        }
        let prior_new = self.full_log_prior();
        let new_ll: Vec<f64> = cells
            .iter()
            .map(|&(c, m)| self.model.cell_loglik(&self.values, c, m))
            .collect();
        let ll_delta: f64 = cells
            .iter()
            .zip(&new_ll)
            .map(|(&(c, m), new)| new - self.cell_ll[c * n_m + m])
            .sum();
        let log_ratio = prior_new - prior_old + ll_delta + log_jacobian;
        if log_ratio.is_nan() || log_ratio == f64::INFINITY {
            return Err(self.divergence(moved[0].0, moved[0].1, log_ratio));
        }
        let u: f64 = self.rng.random();
        let accept = u.ln() < log_ratio;
        if accept {
            for (&(c, m), new) in cells.iter().zip(new_ll) {
                self.cell_ll[c * n_m + m] = new;
            }
        } else {
            for (&(i, _), x) in moved.iter().zip(old) {
                self.values[i] = x;
            }
        }
        Self::adapt(&mut self.joint_log_step[k], gamma, accept, self.cfg.target_accept_scalar);
        Ok(())
    }

    fn block_logpdf(&self, c: usize, s: usize, h: usize) -> f64 {
        let l = self.model.layout();
        let start = l.delta_block(c, s, h);
        let sds: Vec<f64> = (0..l.n_methods).map(|m| self.values[l.sd_delta(m, s)]).collect();
        self.model
            .delta_prior
            .logpdf(s, &self.values[start..start + l.n_methods], &sds)
    }

    /// Prior terms that involve parameter `r`, at the current values.
    fn local_prior(&self, r: ParamRef) -> f64 {
        let l = self.model.layout();
        let v = &self.values;
        let hyper = &self.model.prior;
        match r {
            ParamRef::Alpha { c, m, s } => normal_logpdf(
                v[l.alpha(c, m, s)],
                v[l.theta_region(l.country_region[c], m, s)],
                v[l.sd_alpha(s)],
            ),
            ParamRef::Delta { c, s, h, .. } => self.block_logpdf(c, s, h),
            ParamRef::ThetaRegion { r, m, s } => {
                let tr = v[l.theta_region(r, m, s)];
                let sd_a = v[l.sd_alpha(s)];
                normal_logpdf(tr, v[l.theta_world(m, s)], v[l.sd_theta(s)])
                    + self.region_countries[r]
                        .iter()
                        .map(|&c| normal_logpdf(v[l.alpha(c, m, s)], tr, sd_a))
                        .sum::<f64>()
            }
            ParamRef::ThetaWorld { m, s } => {
                let tw = v[l.theta_world(m, s)];
                let sd_t = v[l.sd_theta(s)];
                normal_logpdf(tw, 0.0, hyper.theta_world_variance.sqrt())
                    + (0..l.n_regions)
                        .map(|r| normal_logpdf(v[l.theta_region(r, m, s)], tw, sd_t))
                        .sum::<f64>()
            }
            ParamRef::SdAlpha { s } => {
                let sd = v[l.sd_alpha(s)];
                let mut total = hyper.scale_logpdf(sd);
                for c in 0..l.n_countries {
                    for m in 0..l.n_methods {
                        let tr = v[l.theta_region(l.country_region[c], m, s)];
                        total += normal_logpdf(v[l.alpha(c, m, s)], tr, sd);
                    }
                }
                total
            }
            ParamRef::SdTheta { s } => {
                let sd = v[l.sd_theta(s)];
                let mut total = hyper.scale_logpdf(sd);
                for m in 0..l.n_methods {
                    let tw = v[l.theta_world(m, s)];
                    for r in 0..l.n_regions {
                        total += normal_logpdf(v[l.theta_region(r, m, s)], tw, sd);
                    }
                }
                total
            }
            ParamRef::SdDelta { m, s } => {
                let mut total = hyper.scale_logpdf(v[l.sd_delta(m, s)]);
                for c in 0..l.n_countries {
                    for h in 0..l.n_diffs[c] {
                        total += self.block_logpdf(c, s, h);
                    }
                }
                total
            }
        }
    }

    fn adapt(log_step: &mut f64, gamma: Option<f64>, accepted: bool, target: f64) {
        if let Some(g) = gamma {
            let a = if accepted { 1.0 } else { 0.0 };
            *log_step = (*log_step + g * (a - target)).clamp(LOG_STEP_BOUNDS.0, LOG_STEP_BOUNDS.1);
        }
    }

    fn divergence(&self, i: usize, proposal: f64, log_ratio: f64) -> Error {
        let names = self.model.spec.param_names();
        Error::Numerical(format!(
            "non-finite log posterior ({log_ratio}) proposing {}={proposal}",
            names[i]
        ))
    }

    fn update_scalar(&mut self, i: usize, gamma: Option<f64>) -> Result<()> {
        if self.frozen[i] {
            return Ok(());
        }
        let r = self.refs[i];
        let old = self.values[i];
        let z: f64 = self.rng.sample(StandardNormal);
        let step = self.log_step[i].exp();
        let (proposal, log_jacobian) = if r.is_scale() {
            let p = old * (step * z).exp();
            (p, step * z)
        } else {
            (old + step * z, 0.0)
        };
        let prior_old = self.local_prior(r);
        self.values[i] = proposal;
        let prior_new = self.local_prior(r);
        let cell = match r {
            ParamRef::Alpha { c, m, .. } | ParamRef::Delta { c, m, .. } => {
                let idx = c * self.model.layout().n_methods + m;
                Some((idx, self.model.cell_loglik(&self.values, c, m)))
            }
            _ => None,
        };
        let ll_delta = cell.map_or(0.0, |(idx, new)| new - self.cell_ll[idx]);
        let log_ratio = prior_new - prior_old + ll_delta + log_jacobian;
        if log_ratio.is_nan() || log_ratio == f64::INFINITY {
            return Err(self.divergence(i, proposal, log_ratio));
        }
        let u: f64 = self.rng.random();
        let accept = u.ln() < log_ratio;
        if accept {
            if let Some((idx, new)) = cell {
                self.cell_ll[idx] = new;
            }
        } else {
            self.values[i] = old;
        }
        self.tried[i] += 1;
        self.accepted[i] += u32::from(accept);
        Self::adapt(&mut self.log_step[i], gamma, accept, self.cfg.target_accept_scalar);
        Ok(())
    }

    fn update_block(&mut self, b: usize, gamma: Option<f64>) -> Result<()> {
        let (c, s, h) = self.blocks[b];
        let l = self.model.layout().clone();
        let n_m = l.n_methods;
        let start = l.delta_block(c, s, h);
        if self.frozen[start..start + n_m].iter().any(|&f| f) {
            return Ok(());
        }
        let old: Vec<f64> = self.values[start..start + n_m].to_vec();
        let z: Vec<f64> = (0..n_m).map(|_| self.rng.sample(StandardNormal)).collect();
        let lambda = self.block_log_step[b].exp();
        let chol = &self.model.delta_prior.chol[s];
        let prior_old = self.block_logpdf(c, s, h);
        for m in 0..n_m {
            let lz: f64 = (0..=m).map(|j| chol[(m, j)] * z[j]).sum();
            self.values[start + m] = old[m] + lambda * self.values[l.sd_delta(m, s)] * lz;
        }
        let prior_new = self.block_logpdf(c, s, h);
        let new_ll: Vec<f64> = (0..n_m)
            .map(|m| self.model.cell_loglik(&self.values, c, m))
            .collect();
        let ll_delta: f64 = (0..n_m).map(|m| new_ll[m] - self.cell_ll[c * n_m + m]).sum();
        let log_ratio = prior_new - prior_old + ll_delta;
        if log_ratio.is_nan() || log_ratio == f64::INFINITY {
            return Err(self.divergence(start, self.values[start], log_ratio));
        }
        let u: f64 = self.rng.random();
        let accept = u.ln() < log_ratio;
        if accept {
            self.cell_ll[c * n_m..(c + 1) * n_m].copy_from_slice(&new_ll);
        } else {
            self.values[start..start + n_m].copy_from_slice(&old);
        }
        self.block_tried[b] += 1;
        self.block_accepted[b] += u32::from(accept);
        Self::adapt(&mut self.block_log_step[b], gamma, accept, self.cfg.target_accept_block);
        Ok(())
    }
}

/// Deterministic starting point: empirical logits of each country-method's
/// most recent observation, falling back to the regional mean, then 0;
/// differences 0; scales 0.3; means at the average of their children.
pub(crate) fn default_initial(model: &Model) -> Vec<f64> {
    const LOGIT_CAP: f64 = 6.0;
    let l = model.layout();
    let n_m = l.n_methods;
    let mut values = vec![0.0; l.len()];
    // Latest (year, share) per cell and latent sector.
    let mut latest: Vec<[Option<(f64, f64)>; N_LATENT]> = vec![[None, None]; l.n_countries * n_m];
    for o in &model.index.obs {
        let slot = &mut latest[o.c * n_m + o.m][o.s];
        if slot.is_none_or(|(y, _)| o.year >= y) {
            *slot = Some((o.year, o.y));
        }
    }
    let mut empirical: Vec<[Option<f64>; N_LATENT]> = vec![[None, None]; l.n_countries * n_m];
    for (cell, obs) in latest.iter().enumerate() {
        if let Some((_, p)) = obs[0] {
            empirical[cell][0] = Some(logit(p).clamp(-LOGIT_CAP, LOGIT_CAP));
            if let Some((_, q)) = obs[1] {
                let within = q / (1.0 - p);
                if within > 0.0 && within < 1.0 {
                    empirical[cell][1] = Some(logit(within).clamp(-LOGIT_CAP, LOGIT_CAP));
                }
            }
        }
    }
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            None
        } else {
            Some(xs.iter().sum::<f64>() / xs.len() as f64)
        }
    };
    for m in 0..n_m {
        for s in 0..N_LATENT {
            let mut region_means = Vec::with_capacity(l.n_regions);
            for r in 0..l.n_regions {
                let known: Vec<f64> = (0..l.n_countries)
                    .filter(|&c| l.country_region[c] == r)
                    .filter_map(|c| empirical[c * n_m + m][s])
                    .collect();
                region_means.push(mean(&known).unwrap_or(0.0));
            }
            for c in 0..l.n_countries {
                values[l.alpha(c, m, s)] =
                    empirical[c * n_m + m][s].unwrap_or(region_means[l.country_region[c]]);
            }
            let mut theta_r = Vec::with_capacity(l.n_regions);
            for r in 0..l.n_regions {
                let children: Vec<f64> = (0..l.n_countries)
                    .filter(|&c| l.country_region[c] == r)
                    .map(|c| values[l.alpha(c, m, s)])
                    .collect();
                let t = mean(&children).unwrap_or(0.0);
                values[l.theta_region(r, m, s)] = t;
                theta_r.push(t);
            }
            values[l.theta_world(m, s)] = mean(&theta_r).unwrap_or(0.0);
        }
    }
    for v in &mut values[l.first_scale()..] {
        *v = INITIAL_SD;
    }
    values
}
