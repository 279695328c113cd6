//! Posterior draw storage and export.
//!
//! # Binary layout
//!
//! All integers and floats are little-endian. Strings are a `u32` byte
//! length followed by UTF-8 bytes.
//!
//! ```text
//! magic          8 bytes  "SSHDRAW1"
//! provenance     string   run manifest hash, may be empty
//! model          u8       0 full, 1 zero_cov, 2 linear
//! window         f64 f64
//! spacing        f64
//! seed           u64
//! n_chains       u32
//! n_warmup       u64
//! n_samples      u64
//! thin           u64
//! targets        f64 f64  scalar, block
//! block_updates  u8
//! methods        u32 count, then u8 index into Method::ALL each
//! regions        u32 count, then string each
//! countries      u32 count, then (name string, region string, recent f64) each
//! year_grid      u32 count, then f64 each
//! rho            2 x M x M f64, row-major, public then commercial medical
//! n_params       u64
//! per chain:
//!   n_draws      u64
//!   acceptance   n_params f64 (NaN when never proposed)
//!   n_blocks     u64, then f64 each
//!   values       n_draws x n_params f64, draw-major
//! ```
//!
//! The header carries everything needed to rebuild the model specification,
//! so a draws file is self-contained.

use std::io::{Read, Write};
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;

use crate::correlation::CorrelationMatrices;
use crate::data::{CountryInfo, Method};
use crate::error::{Error, Result};
use crate::inference::posterior::ModelSpec;
use crate::inference::sampler::SamplerConfig;
use crate::model::{ShareTriple, N_LATENT};
use crate::variants::ModelKind;

const MAGIC: &[u8; 8] = b"SSHDRAW1";

/// Retained draws of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    /// `n_draws x n_params`, draw-major.
    pub values: Vec<f64>,
    pub n_draws: usize,
    /// Post-warmup acceptance rate per scalar parameter.
    pub acceptance: Vec<f64>,
    /// Post-warmup acceptance rate per difference block, when block updates
    /// are on.
    pub block_acceptance: Vec<f64>,
}

impl ChainDraws {
    pub fn draw(&self, i: usize) -> &[f64] {
        let n = self.values.len() / self.n_draws.max(1);
        &self.values[i * n..(i + 1) * n]
    }
}

#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub spec: Arc<ModelSpec>,
    pub rho: CorrelationMatrices,
    pub seed: u64,
    pub config: SamplerConfig,
    pub chains: Vec<ChainDraws>,
    /// Manifest hash of the run that produced the draws.
    pub provenance: String,
}

impl PosteriorDraws {
    pub fn n_params(&self) -> usize {
        self.spec.layout.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(|c| c.n_draws).sum()
    }

    /// All retained draws in chain order.
    pub fn iter_draws(&self) -> impl Iterator<Item = &[f64]> {
        self.chains
            .iter()
            .flat_map(|ch| (0..ch.n_draws).map(move |i| ch.draw(i)))
    }

    /// One parameter's draws per chain.
    pub fn param_chains(&self, p: usize) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|ch| (0..ch.n_draws).map(|i| ch.draw(i)[p]).collect())
            .collect()
    }

    /// One parameter's draws pooled over chains.
    pub fn param_draws(&self, p: usize) -> Vec<f64> {
        self.iter_draws().map(|d| d[p]).collect()
    }

    /// Shares of country `c`, method `m` on every grid year, one vector per
    /// draw.
    pub fn trajectories(&self, c: usize, m: usize) -> Vec<Vec<ShareTriple>> {
        self.iter_draws().map(|d| self.spec.trajectory(d, c, m)).collect()
    }

    /// Shares at an arbitrary year, one per draw.
    pub fn shares_at(&self, c: usize, m: usize, year: f64) -> Result<Vec<ShareTriple>> {
        self.iter_draws().map(|d| self.spec.shares_at(d, c, m, year)).collect()
    }

    /// Long-format CSV: `chain,iter,parameter,value`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let names = self.spec.param_names();
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["chain", "iter", "parameter", "value"])?;
        for (c, ch) in self.chains.iter().enumerate() {
            for i in 0..ch.n_draws {
                for (p, v) in ch.draw(i).iter().enumerate() {
                    w.write_record([c.to_string(), i.to_string(), names[p].clone(), v.to_string()])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<draws csv>", e))?;
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<draws binary>", e);
        let spec = &self.spec;
        let cfg = &self.config;
        w.write_all(MAGIC).map_err(io)?;
        write_str(&mut w, &self.provenance)?;
        w.write_u8(spec.kind.code()).map_err(io)?;
        for x in [spec.window.0, spec.window.1, spec.spacing] {
            w.write_f64::<LittleEndian>(x).map_err(io)?;
        }
        w.write_u64::<LittleEndian>(self.seed).map_err(io)?;
        w.write_u32::<LittleEndian>(cfg.n_chains as u32).map_err(io)?;
        for x in [cfg.n_warmup, cfg.n_samples, cfg.thin] {
            w.write_u64::<LittleEndian>(x as u64).map_err(io)?;
        }
        w.write_f64::<LittleEndian>(cfg.target_accept_scalar).map_err(io)?;
        w.write_f64::<LittleEndian>(cfg.target_accept_block).map_err(io)?;
        w.write_u8(u8::from(cfg.block_delta_updates)).map_err(io)?;
        w.write_u32::<LittleEndian>(spec.methods.len() as u32).map_err(io)?;
        for m in &spec.methods {
            let idx = Method::ALL.iter().position(|x| x == m).unwrap_or_default();
            w.write_u8(idx as u8).map_err(io)?;
        }
        w.write_u32::<LittleEndian>(spec.regions.len() as u32).map_err(io)?;
        for r in &spec.regions {
            write_str(&mut w, r)?;
        }
        w.write_u32::<LittleEndian>(spec.countries.len() as u32).map_err(io)?;
        for c in &spec.countries {
            write_str(&mut w, &c.name)?;
            write_str(&mut w, &c.region)?;
            w.write_f64::<LittleEndian>(c.recent_year).map_err(io)?;
        }
        w.write_u32::<LittleEndian>(spec.year_grid.len() as u32).map_err(io)?;
        for &y in &spec.year_grid {
            w.write_f64::<LittleEndian>(y).map_err(io)?;
        }
        for s in 0..N_LATENT {
            let r = &self.rho.rho[s];
            for i in 0..r.nrows() {
                for j in 0..r.ncols() {
                    w.write_f64::<LittleEndian>(r[(i, j)]).map_err(io)?;
                }
            }
        }
        w.write_u64::<LittleEndian>(self.n_params() as u64).map_err(io)?;
        for ch in &self.chains {
            w.write_u64::<LittleEndian>(ch.n_draws as u64).map_err(io)?;
            for &a in &ch.acceptance {
                w.write_f64::<LittleEndian>(a).map_err(io)?;
            }
            w.write_u64::<LittleEndian>(ch.block_acceptance.len() as u64).map_err(io)?;
            for &a in &ch.block_acceptance {
                w.write_f64::<LittleEndian>(a).map_err(io)?;
            }
            for &v in &ch.values {
                w.write_f64::<LittleEndian>(v).map_err(io)?;
            }
        }
        w.flush().map_err(io)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let bad = |what: &str| Error::Validation(format!("malformed draws file: {what}"));
        let io = |e: std::io::Error| Error::Validation(format!("malformed draws file: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let provenance = read_str(&mut r)?;
        let kind = ModelKind::from_code(r.read_u8().map_err(io)?)?;
        let window = (
            r.read_f64::<LittleEndian>().map_err(io)?,
            r.read_f64::<LittleEndian>().map_err(io)?,
        );
        let spacing = r.read_f64::<LittleEndian>().map_err(io)?;
        let seed = r.read_u64::<LittleEndian>().map_err(io)?;
        let n_chains = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let n_warmup = r.read_u64::<LittleEndian>().map_err(io)? as usize;
        let n_samples = r.read_u64::<LittleEndian>().map_err(io)? as usize;
        let thin = r.read_u64::<LittleEndian>().map_err(io)? as usize;
        let target_accept_scalar = r.read_f64::<LittleEndian>().map_err(io)?;
        let target_accept_block = r.read_f64::<LittleEndian>().map_err(io)?;
        let block_delta_updates = r.read_u8().map_err(io)? != 0;
        let n_m = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let methods = (0..n_m)
            .map(|_| {
                let i = r.read_u8().map_err(io)? as usize;
                Method::ALL.get(i).copied().ok_or_else(|| bad("method index"))
            })
            .collect::<Result<Vec<_>>>()?;
        let n_r = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let regions = (0..n_r).map(|_| read_str(&mut r)).collect::<Result<Vec<_>>>()?;
        let n_c = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let countries = (0..n_c)
            .map(|_| {
                Ok(CountryInfo {
                    name: read_str(&mut r)?,
                    region: read_str(&mut r)?,
                    recent_year: r.read_f64::<LittleEndian>().map_err(io)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let n_g = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let year_grid = (0..n_g)
            .map(|_| r.read_f64::<LittleEndian>().map_err(io))
            .collect::<Result<Vec<_>>>()?;
        let mut mats = Vec::with_capacity(N_LATENT);
        for _ in 0..N_LATENT {
            let mut data = vec![0.0; n_m * n_m];
            for x in &mut data {
                *x = r.read_f64::<LittleEndian>().map_err(io)?;
            }
            mats.push(DMatrix::from_row_slice(n_m, n_m, &data));
        }
        let rho = CorrelationMatrices::from_matrices([mats[0].clone(), mats[1].clone()])?;
        let spec = ModelSpec::from_parts(kind, methods, countries, regions, window, spacing, year_grid)?;
        let n_params = r.read_u64::<LittleEndian>().map_err(io)? as usize;
        if n_params != spec.layout.len() {
            return Err(bad("parameter count does not match the specification"));
        }
        let mut chains = Vec::with_capacity(n_chains);
        for _ in 0..n_chains {
            let n_draws = r.read_u64::<LittleEndian>().map_err(io)? as usize;
            let acceptance = (0..n_params)
                .map(|_| r.read_f64::<LittleEndian>().map_err(io))
                .collect::<Result<Vec<_>>>()?;
            let n_blocks = r.read_u64::<LittleEndian>().map_err(io)? as usize;
            let block_acceptance = (0..n_blocks)
                .map(|_| r.read_f64::<LittleEndian>().map_err(io))
                .collect::<Result<Vec<_>>>()?;
            let mut values = vec![0.0; n_draws * n_params];
            r.read_f64_into::<LittleEndian>(&mut values).map_err(io)?;
            chains.push(ChainDraws {
                values,
                n_draws,
                acceptance,
                block_acceptance,
            });
        }
        Ok(Self {
            spec: Arc::new(spec),
            rho,
            seed,
            config: SamplerConfig {
                n_chains,
                n_warmup,
                n_samples,
                thin,
                seed,
                target_accept_scalar,
                target_accept_block,
                block_delta_updates,
                n_threads: None,
            },
            chains,
            provenance,
        })
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    let io = |e| Error::io("<draws binary>", e);
    w.write_u32::<LittleEndian>(s.len() as u32).map_err(io)?;
    w.write_all(s.as_bytes()).map_err(io)
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let io = |e: std::io::Error| Error::Validation(format!("malformed draws file: {e}"));
    let n = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(io)?;
    String::from_utf8(buf).map_err(|_| Error::Validation("malformed draws file: invalid UTF-8".into()))
}
