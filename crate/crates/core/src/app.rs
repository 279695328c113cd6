//! Run configuration and the command implementations behind the binary.
//!
//! A fit writes one run directory:
//!
//! ```text
//! <output>/
//!   INCOMPLETE          present until every artifact is written
//!   manifest.txt        manifest hash, seed, input checksum, resolved config
//!   config.toml         resolved configuration
//!   observations.csv    ingested observations (fractions)
//!   stage1/             independent-methods fit: draws.bin, summaries.csv, diagnostics.csv
//!   rho.csv             regularized correlation estimate (absent for zero_cov)
//!   rho_estimated.csv   raw correlation estimate
//!   stage3/             final fit with the estimated correlations
//!   summaries.csv       final summaries
//!   diagnostics.csv     final diagnostics
//! ```
//!
//! Every CSV starts with a `# manifest=<hash>` line and `draws.bin` carries
//! the same hash as its provenance string. The hash covers the resolved
//! configuration (minus the output path and thread count), the seed and the
//! SHA-256 of the data file.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::correlation::{correlations_from_stage1, CorrelationMatrices, MaskMode};
use crate::data::{parse_observations, parse_observations_from, summarize_se, Dataset, IngestConfig, SeSummary, Units};
use crate::emu::{adjust_records, parse_service_stats, write_adjustments, AdjustMode};
use crate::error::{Error, Result};
use crate::inference::{diagnostics, summarize, write_summaries, PosteriorDraws, SamplerConfig};
use crate::model::{PriorConfig, ScalePrior};
use crate::plot::{heatmap, trajectory_chart, Panel};
use crate::spline::{BasisSet, DEFAULT_SPACING};
use crate::validation::{validate, write_reports, IntervalMode, ValidationRun};
use crate::variants::{fit_variant, ModelKind};

pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";
pub const MANIFEST_FILE: &str = "manifest.txt";

// ---------------------------------------------------------------------------
// Configuration

/// Configuration file layout; every field is optional and falls back to the
/// defaults of [`RunConfig`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_start: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub share_sum_tolerance: Option<f64>,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub correlation: CorrelationSection,
    #[serde(default)]
    pub validation: ValidationSection,
    #[serde(default)]
    pub export: ExportSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chains: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thin: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_delta_updates: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_accept_scalar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_accept_block: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_world_variance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_cauchy_scale: Option<f64>,
    /// `sd` or `variance`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale_prior: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub svg: Option<bool>,
}

/// Parses a `key=value` override such as `sampler.chains=8` into a table
/// that can be merged over a configuration file.
pub fn parse_override(assignment: &str) -> Result<toml::Table> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let value = value.trim();
    let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(value.to_string())),
        Err(_) => toml::Value::String(value.to_string()),
    };
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    let leaf = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Config(format!("empty key in `{assignment}`")))?;
    let mut table = toml::Table::new();
    table.insert(leaf.to_string(), parsed);
    for part in parts.into_iter().rev() {
        let mut outer = toml::Table::new();
        outer.insert(part.to_string(), toml::Value::Table(table));
        table = outer;
    }
    Ok(table)
}

fn merge_tables(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies `key=value` overrides on top of `self`.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut table = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            merge_tables(&mut table, parse_override(o.as_ref())?);
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub model: ModelKind,
    pub ingest: IngestConfig,
    pub spacing: f64,
    pub sampler: SamplerConfig,
    pub prior: PriorConfig,
    pub mask: MaskMode,
    pub validation_models: Vec<ModelKind>,
    pub interval: IntervalMode,
    pub svg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            output: None,
            model: ModelKind::Full,
            ingest: IngestConfig::default(),
            spacing: DEFAULT_SPACING,
            sampler: SamplerConfig::default(),
            prior: PriorConfig::default(),
            mask: MaskMode::Country,
            validation_models: ModelKind::ALL.to_vec(),
            interval: IntervalMode::Predictive,
            svg: false,
        }
    }
}

fn units_label(u: Units) -> &'static str {
    match u {
        Units::Fraction => "fraction",
        Units::Percent => "percent",
    }
}

fn mask_label(m: MaskMode) -> &'static str {
    match m {
        MaskMode::Country => "country",
        MaskMode::CountryMethod => "country_method",
    }
}

fn scale_prior_label(p: ScalePrior) -> &'static str {
    match p {
        ScalePrior::StdDev => "sd",
        ScalePrior::Variance => "variance",
    }
}

fn parse_scale_prior(s: &str) -> Result<ScalePrior> {
    match s.trim() {
        "sd" => Ok(ScalePrior::StdDev),
        "variance" => Ok(ScalePrior::Variance),
        other => Err(Error::Config(format!("unknown scale prior `{other}` (expected sd or variance)"))),
    }
}

impl RunConfig {
    pub fn from_file(file: &ConfigFile) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let d = &mut cfg;
        d.data.clone_from(&file.data);
        d.output.clone_from(&file.output);
        if let Some(m) = &file.model {
            d.model = m.parse()?;
        }
        if let Some(u) = &file.units {
            d.ingest.units = u.parse()?;
        }
        if let Some(v) = file.window_start {
            d.ingest.window.0 = v;
        }
        if let Some(v) = file.window_end {
            d.ingest.window.1 = v;
        }
        if let Some(v) = file.share_sum_tolerance {
            d.ingest.share_sum_tolerance = v;
        }
        if let Some(v) = file.spacing {
            d.spacing = v;
        }
        let s = &file.sampler;
        let sc = &mut d.sampler;
        sc.n_chains = s.chains.unwrap_or(sc.n_chains);
        sc.n_warmup = s.warmup.unwrap_or(sc.n_warmup);
        sc.n_samples = s.samples.unwrap_or(sc.n_samples);
        sc.thin = s.thin.unwrap_or(sc.thin);
        sc.seed = s.seed.unwrap_or(sc.seed);
        sc.n_threads = s.threads.or(sc.n_threads);
        sc.block_delta_updates = s.block_delta_updates.unwrap_or(sc.block_delta_updates);
        sc.target_accept_scalar = s.target_accept_scalar.unwrap_or(sc.target_accept_scalar);
        sc.target_accept_block = s.target_accept_block.unwrap_or(sc.target_accept_block);
        let p = &file.prior;
        d.prior.theta_world_variance = p.theta_world_variance.unwrap_or(d.prior.theta_world_variance);
        d.prior.half_cauchy_scale = p.half_cauchy_scale.unwrap_or(d.prior.half_cauchy_scale);
        if let Some(sp) = &p.scale_prior {
            d.prior.scale_prior = parse_scale_prior(sp)?;
        }
        if let Some(m) = &file.correlation.mask {
            d.mask = m.parse()?;
        }
        if let Some(models) = &file.validation.models {
            d.validation_models = models.iter().map(|m| m.parse()).collect::<Result<_>>()?;
        }
        if let Some(i) = &file.validation.interval {
            d.interval = i.parse()?;
        }
        d.svg = file.export.svg.unwrap_or(d.svg);
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        let (a, b) = self.ingest.window;
        if !(a < b) {
            return Err(Error::Config(format!("window_start {a} must precede window_end {b}")));
        }
        if !(self.spacing > 0.0) {
            return Err(Error::Config(format!("spacing {} must be positive", self.spacing)));
        }
        if !(self.prior.theta_world_variance > 0.0 && self.prior.half_cauchy_scale > 0.0) {
            return Err(Error::Config("prior variances and scales must be positive".into()));
        }
        if self.validation_models.is_empty() {
            return Err(Error::Config("validation.models is empty".into()));
        }
        self.sampler.validate()
    }

    /// Every setting as a configuration file.
    pub fn to_file(&self) -> ConfigFile {
        let s = &self.sampler;
        ConfigFile {
            data: self.data.clone(),
            output: self.output.clone(),
            model: Some(self.model.label().into()),
            units: Some(units_label(self.ingest.units).into()),
            window_start: Some(self.ingest.window.0),
            window_end: Some(self.ingest.window.1),
            spacing: Some(self.spacing),
            share_sum_tolerance: Some(self.ingest.share_sum_tolerance),
            sampler: SamplerSection {
                chains: Some(s.n_chains),
                warmup: Some(s.n_warmup),
                samples: Some(s.n_samples),
                thin: Some(s.thin),
                seed: Some(s.seed),
                threads: s.n_threads,
                block_delta_updates: Some(s.block_delta_updates),
                target_accept_scalar: Some(s.target_accept_scalar),
                target_accept_block: Some(s.target_accept_block),
            },
            prior: PriorSection {
                theta_world_variance: Some(self.prior.theta_world_variance),
                half_cauchy_scale: Some(self.prior.half_cauchy_scale),
                scale_prior: Some(scale_prior_label(self.prior.scale_prior).into()),
            },
            correlation: CorrelationSection {
                mask: Some(mask_label(self.mask).into()),
            },
            validation: ValidationSection {
                models: Some(self.validation_models.iter().map(|m| m.label().to_string()).collect()),
                interval: Some(self.interval.label().into()),
            },
            export: ExportSection { svg: Some(self.svg) },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_file()).expect("configuration serializes")
    }

    /// Settings that determine the numbers: no paths, no thread count.
    pub fn canonical(&self) -> String {
        let mut file = self.to_file();
        file.data = None;
        file.output = None;
        file.sampler.threads = None;
        toml::to_string(&file).expect("configuration serializes")
    }

    fn data_path(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::Config("no data file given (`data` or --data)".into()))
    }

    fn output_path(&self) -> Result<&Path> {
        self.output
            .as_deref()
            .ok_or_else(|| Error::Config("no output directory given (`output` or --output)".into()))
    }
}

// ---------------------------------------------------------------------------
// Provenance

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Hash of the canonical configuration, seed and input checksum.
pub fn manifest_hash(config: &RunConfig, data_sha256: &str) -> String {
    let text = format!(
        "{}\nseed={}\ndata_sha256={data_sha256}\n",
        config.canonical(),
        config.sampler.seed
    );
    sha256_hex(text.as_bytes())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes a CSV whose first line is `# manifest=<hash>`.
fn write_csv_file(path: &Path, manifest: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# manifest={manifest}").map_err(|e| Error::io(path, e))?;
    body(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// fit

fn load_dataset(config: &RunConfig) -> Result<(Dataset, String)> {
    let path = config.data_path()?;
    let checksum = file_sha256(path)?;
    let dataset = parse_observations(path, &config.ingest)?;
    info!(
        "{} observations, {} countries, {} methods",
        dataset.len(),
        dataset.countries.len(),
        dataset.methods.len()
    );
    Ok((dataset, checksum))
}

fn write_stage(dir: &Path, draws: &PosteriorDraws, manifest: &str) -> Result<()> {
    let path = dir.join("draws.bin");
    let mut w = create(&path)?;
    draws.write_binary(&mut w)?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    let summaries = summarize(draws)?;
    write_csv_file(&dir.join("summaries.csv"), manifest, |w| write_summaries(&summaries, w))?;
    let report = diagnostics(draws)?;
    let n_flagged = report.flagged().count();
    if n_flagged > 0 {
        warn!(
            "{n_flagged} parameters flagged (max R-hat {:.3}, min ESS {:.0})",
            report.max_rhat(),
            report.min_ess()
        );
    }
    write_csv_file(&dir.join("diagnostics.csv"), manifest, |w| report.write_csv(w))
}

/// Fits the configured model and writes the run directory. An error leaves
/// the `INCOMPLETE` marker in place with the error message.
pub fn cmd_fit(config: &RunConfig) -> Result<PathBuf> {
    let out = config.output_path()?.to_path_buf();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let marker = out.join(INCOMPLETE_MARKER);
    write_text(&marker, "fit in progress\n")?;
    match fit_into(config, &out) {
        Ok(()) => {
            fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
            Ok(out)
        }
        Err(e) => {
            let _ = write_text(&marker, &format!("{e}\n"));
            Err(e)
        }
    }
}

fn fit_into(config: &RunConfig, out: &Path) -> Result<()> {
    let (dataset, checksum) = load_dataset(config)?;
    let hash = manifest_hash(config, &checksum);
    let stages = match config.model {
        ModelKind::ZeroCov => "stage1",
        ModelKind::Full | ModelKind::Linear => "stage1,stage3",
    };
    let manifest = format!(
        "manifest={hash}\nseed={}\nmodel={}\nstages={stages}\ndata={}\ndata_sha256={checksum}\nversion={}\n\n{}",
        config.sampler.seed,
        config.model,
        config.data_path()?.display(),
        env!("CARGO_PKG_VERSION"),
        config.canonical()
    );
    write_text(&out.join(MANIFEST_FILE), &manifest)?;
    write_text(&out.join("config.toml"), &config.to_toml())?;
    write_csv_file(&out.join("observations.csv"), &hash, |w| dataset.write_csv(w))?;

    let n_m = dataset.methods.len();
    let cfg = &config.sampler;
    info!("stage 1: independent-methods fit");
    let mut stage1 = fit_variant(
        ModelKind::ZeroCov,
        &dataset,
        &CorrelationMatrices::identity(n_m),
        &config.prior,
        config.spacing,
        cfg,
    )?;
    stage1.provenance.clone_from(&hash);
    write_stage(&out.join("stage1"), &stage1, &hash)?;
    let final_draws = if config.model == ModelKind::ZeroCov {
        stage1
    } else {
        info!("stage 2: correlation estimate");
        let (_, estimated, rho) = correlations_from_stage1(&stage1, &dataset, config.mask)?;
        write_csv_file(&out.join("rho_estimated.csv"), &hash, |w| estimated.write_csv(&dataset.methods, w))?;
        write_csv_file(&out.join("rho.csv"), &hash, |w| rho.write_csv(&dataset.methods, w))?;
        drop(stage1);
        info!("stage 3: {} fit", config.model);
        let mut stage3 = fit_variant(config.model, &dataset, &rho, &config.prior, config.spacing, cfg)?;
        stage3.provenance.clone_from(&hash);
        write_stage(&out.join("stage3"), &stage3, &hash)?;
        stage3
    };
    let summaries = summarize(&final_draws)?;
    write_csv_file(&out.join("summaries.csv"), &hash, |w| write_summaries(&summaries, w))?;
    let report = diagnostics(&final_draws)?;
    write_csv_file(&out.join("diagnostics.csv"), &hash, |w| report.write_csv(w))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Reading a run directory

/// A finished run directory.
pub struct RunDir {
    pub path: PathBuf,
    pub manifest: String,
    pub draws: PosteriorDraws,
    pub dataset: Dataset,
}

impl RunDir {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let manifest_path = path.join(MANIFEST_FILE);
        if path.join(INCOMPLETE_MARKER).exists() || !manifest_path.exists() {
            return Err(Error::Validation(format!("run directory {} is incomplete", path.display())));
        }
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest = text
            .lines()
            .find_map(|l| l.strip_prefix("manifest="))
            .ok_or_else(|| Error::Validation(format!("{} has no manifest hash", manifest_path.display())))?
            .to_string();
        let stage = ["stage3", "stage1"]
            .iter()
            .map(|s| path.join(s).join("draws.bin"))
            .find(|p| p.exists())
            .ok_or_else(|| Error::Validation(format!("run directory {} has no draws", path.display())))?;
        let file = File::open(&stage).map_err(|e| Error::io(&stage, e))?;
        let draws = PosteriorDraws::read_binary(BufReader::new(file))?;
        if draws.provenance != manifest {
            return Err(Error::Validation(format!(
                "{} was written by a different run",
                stage.display()
            )));
        }
        let obs_path = path.join("observations.csv");
        let file = File::open(&obs_path).map_err(|e| Error::io(&obs_path, e))?;
        let ingest = IngestConfig {
            window: draws.spec.window,
            units: Units::Fraction,
            share_sum_tolerance: f64::INFINITY,
        };
        let dataset = parse_observations_from(file, &ingest)?;
        Ok(Self {
            path,
            manifest,
            draws,
            dataset,
        })
    }
}

// ---------------------------------------------------------------------------
// export

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExportKind {
    Summaries,
    RhoHeatmap,
    Basis,
    Draws,
}

impl std::str::FromStr for ExportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "summaries" => Ok(ExportKind::Summaries),
            "rho_heatmap" => Ok(ExportKind::RhoHeatmap),
            "basis" => Ok(ExportKind::Basis),
            "draws" => Ok(ExportKind::Draws),
            other => Err(Error::Config(format!(
                "unknown export `{other}` (expected summaries, rho_heatmap, basis or draws)"
            ))),
        }
    }
}

/// File-name-safe form of a country name.
fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// Writes plot-ready files for `run` into `out_dir`; returns the paths written.
pub fn cmd_export(run: &RunDir, what: &[ExportKind], out_dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let hash = run.manifest.as_str();
    let spec = &run.draws.spec;
    for kind in what {
        match kind {
            ExportKind::Summaries => {
                let summaries = summarize(&run.draws)?;
                for country in &spec.countries {
                    let stem = file_stem(&country.name);
                    let rows: Vec<_> = summaries.iter().filter(|s| s.country == country.name).collect();
                    let obs: Vec<_> = run
                        .dataset
                        .observations
                        .iter()
                        .filter(|o| o.country == country.name && spec.methods.contains(&o.method))
                        .collect();
                    let path = out_dir.join(format!("summaries_{stem}.csv"));
                    write_csv_file(&path, hash, |w| {
                        let mut w = csv::Writer::from_writer(w);
                        w.write_record([
                            "kind", "method", "sector", "year", "median", "lo80", "hi80", "lo95", "hi95", "observed", "se",
                        ])?;
                        for s in &rows {
                            let i = &s.interval;
                            let mut rec = vec!["estimate".to_string(), s.method.label().into(), s.sector.label().into(), s.year.to_string()];
                            rec.extend([i.median, i.lo80, i.hi80, i.lo95, i.hi95].map(|v| format!("{v:.6}")));
                            rec.extend([String::new(), String::new()]);
                            w.write_record(&rec)?;
                        }
                        for o in &obs {
                            let mut rec = vec!["observation".to_string(), o.method.label().into(), o.sector.label().into(), o.year.to_string()];
                            rec.extend(std::iter::repeat_n(String::new(), 5));
                            rec.extend([format!("{:.6}", o.proportion), format!("{:.6}", o.se)]);
                            w.write_record(&rec)?;
                        }
                        w.flush().map_err(|e| Error::io("<export csv>", e))
                    })?;
                    written.push(path);
                    if svg {
                        let mut panels = Vec::new();
                        for &method in &spec.methods {
                            for sector in crate::data::Sector::ALL {
                                panels.push(Panel {
                                    title: format!("{method} / {sector}"),
                                    estimates: rows.iter().copied().filter(|s| s.method == method && s.sector == sector).collect(),
                                    observations: obs.iter().copied().filter(|o| o.method == method && o.sector == sector).collect(),
                                });
                            }
                        }
                        let path = out_dir.join(format!("summaries_{stem}.svg"));
                        write_text(&path, &trajectory_chart(&panels, 3, spec.window, hash))?;
                        written.push(path);
                    }
                }
            }
            ExportKind::RhoHeatmap => {
                let path = out_dir.join("rho_heatmap.csv");
                write_csv_file(&path, hash, |w| run.draws.rho.write_csv(&spec.methods, w))?;
                written.push(path);
                if svg {
                    let labels: Vec<&str> = spec.methods.iter().map(|m| m.label()).collect();
                    for (s, name) in ["public", "private_medical"].iter().enumerate() {
                        let r = &run.draws.rho.rho[s];
                        let values: Vec<Vec<f64>> = (0..r.nrows()).map(|i| r.row(i).iter().copied().collect()).collect();
                        let path = out_dir.join(format!("rho_heatmap_{name}.svg"));
                        write_text(&path, &heatmap(name, &labels, &values, hash))?;
                        written.push(path);
                    }
                }
            }
            ExportKind::Basis => {
                for country in &spec.countries {
                    let basis = BasisSet::new(
                        country.name.as_str(),
                        country.recent_year,
                        spec.window,
                        spec.spacing,
                        &spec.year_grid,
                    )?;
                    let path = out_dir.join(format!("basis_{}.csv", file_stem(&country.name)));
                    write_csv_file(&path, hash, |w| basis.write_csv(w))?;
                    written.push(path);
                }
            }
            ExportKind::Draws => {
                let path = out_dir.join("draws.csv");
                write_csv_file(&path, hash, |w| run.draws.write_csv(w))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// validate

/// Holdout validation of every configured model; writes
/// `<output>/validation.csv` with one block of rows per model.
pub fn cmd_validate(config: &RunConfig) -> Result<ValidationRun> {
    let (dataset, checksum) = load_dataset(config)?;
    let out = config.output_path()?;
    let hash = manifest_hash(config, &checksum);
    let run = validate(
        &dataset,
        &config.validation_models,
        &config.prior,
        config.spacing,
        &config.sampler,
        config.mask,
        config.interval,
    )?;
    let path = out.join("validation.csv");
    write_csv_file(&path, &hash, |w| {
        writeln!(w, "# n_train={}, n_test={}", run.split.train.len(), run.split.test.len())
            .map_err(|e| Error::io(&path, e))?;
        write_reports(&run.reports, w)
    })?;
    Ok(run)
}

// ---------------------------------------------------------------------------
// emu-adjust and summarize-se

/// Adjusts service statistics with the shares of a finished run.
pub fn cmd_emu_adjust(run: &RunDir, stats: &Path, mode: AdjustMode, out: &Path) -> Result<()> {
    let file = File::open(stats).map_err(|e| Error::io(stats, e))?;
    let records = parse_service_stats(BufReader::new(file))?;
    let (results, emu) = adjust_records(&records, &run.draws, mode, &run.dataset.observations)?;
    write_csv_file(out, &run.manifest, |w| write_adjustments(&results, &emu, w))
}

pub fn cmd_summarize_se(config: &RunConfig) -> Result<SeSummary> {
    let (dataset, _) = load_dataset(config)?;
    summarize_se(&dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_merge_into_sections() {
        let file = ConfigFile::parse("model = \"linear\"\n[sampler]\nchains = 2\n").unwrap();
        let file = file
            .with_overrides(&["sampler.seed=9", "correlation.mask=country_method", "window_start = 1995"])
            .unwrap();
        let cfg = RunConfig::from_file(&file).unwrap();
        assert_eq!(cfg.model, ModelKind::Linear);
        assert_eq!(cfg.sampler.n_chains, 2);
        assert_eq!(cfg.sampler.seed, 9);
        assert_eq!(cfg.mask, MaskMode::CountryMethod);
        assert_eq!(cfg.ingest.window.0, 1995.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ConfigFile::parse("chains = 2").is_err());
        assert!(ConfigFile::default().with_overrides(&["sampler.chain=2"]).is_err());
        assert!(ConfigFile::default().with_overrides(&["model"]).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.sampler.seed = 42;
        cfg.validation_models = vec![ModelKind::Full];
        let back = RunConfig::from_file(&ConfigFile::parse(&cfg.to_toml()).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn manifest_ignores_threads_and_output_but_not_seed() {
        let mut a = RunConfig::default();
        a.sampler.seed = 1;
        let mut b = a.clone();
        b.sampler.n_threads = Some(3);
        b.output = Some("elsewhere".into());
        assert_eq!(manifest_hash(&a, "x"), manifest_hash(&b, "x"));
        b.sampler.seed = 2;
        assert_ne!(manifest_hash(&a, "x"), manifest_hash(&b, "x"));
        assert_ne!(manifest_hash(&a, "x"), manifest_hash(&a, "y"));
    }
}
