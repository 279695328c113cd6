use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use supplyshare::app::{
    cmd_emu_adjust, cmd_export, cmd_fit, cmd_summarize_se, cmd_validate, ConfigFile, ExportKind, RunConfig, RunDir,
};
use supplyshare::emu::AdjustMode;
use supplyshare::{Error, Result};

#[derive(Parser)]
#[command(name = "supplyshare", version, about = "Contraceptive supply-share estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by the commands that read a configuration.
#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Observation CSV
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    output: Option<PathBuf>,
    /// full, zero_cov or linear
    #[arg(long)]
    model: Option<String>,
    /// fraction or percent
    #[arg(long)]
    units: Option<String>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Any configuration key, e.g. `--set prior.half_cauchy_scale=2`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self, seed: Option<u64>) -> Result<RunConfig> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let mut overrides = Vec::new();
        let quoted = |p: &PathBuf| format!("{:?}", p.display().to_string());
        if let Some(p) = &self.data {
            overrides.push(format!("data={}", quoted(p)));
        }
        if let Some(p) = &self.output {
            overrides.push(format!("output={}", quoted(p)));
        }
        if let Some(m) = &self.model {
            overrides.push(format!("model={m:?}"));
        }
        if let Some(u) = &self.units {
            overrides.push(format!("units={u:?}"));
        }
        let numeric = [
            ("sampler.chains", self.chains),
            ("sampler.warmup", self.warmup),
            ("sampler.samples", self.samples),
            ("sampler.threads", self.threads),
        ];
        for (key, v) in numeric {
            if let Some(v) = v {
                overrides.push(format!("{key}={v}"));
            }
        }
        if let Some(seed) = seed {
            overrides.push(format!("sampler.seed={seed}"));
        }
        overrides.extend(self.set.iter().cloned());
        RunConfig::from_file(&file.with_overrides(&overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write a run directory
    Fit {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        seed: u64,
    },
    /// Hold out each country's latest survey and report errors and coverage
    Validate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write plot-ready files from a finished run directory
    Export {
        run: PathBuf,
        /// summaries, rho_heatmap, basis or draws (repeatable)
        #[arg(long = "what", required = true)]
        what: Vec<String>,
        /// Destination directory (default: <run>/export)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: bool,
    },
    /// Scale service statistics by posterior supply shares and compute EMU
    EmuAdjust {
        run: PathBuf,
        /// CSV with country,method,sector,year,y_raw,wra
        #[arg(long)]
        stats: PathBuf,
        /// posterior or latest_survey
        #[arg(long, default_value = "posterior")]
        mode: String,
        /// Destination CSV (default: <run>/emu.csv)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the range, median and per-method mean of the standard errors
    SummarizeSe {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { config, seed } => {
            let cfg = config.resolve(Some(seed))?;
            let dir = cmd_fit(&cfg)?;
            println!("{}", dir.display());
        }
        Command::Validate { config, seed } => {
            let cfg = config.resolve(seed)?;
            let run = cmd_validate(&cfg)?;
            for r in &run.reports {
                println!("{r}");
            }
        }
        Command::Export { run, what, out, svg } => {
            let kinds = what.iter().map(|w| w.parse()).collect::<Result<Vec<ExportKind>>>()?;
            let dir = RunDir::open(&run)?;
            let out = out.unwrap_or_else(|| run.join("export"));
            for path in cmd_export(&dir, &kinds, &out, svg)? {
                println!("{}", path.display());
            }
        }
        Command::EmuAdjust { run, stats, mode, out } => {
            let mode: AdjustMode = mode.parse()?;
            let dir = RunDir::open(&run)?;
            let out = out.unwrap_or_else(|| run.join("emu.csv"));
            cmd_emu_adjust(&dir, &stats, mode, &out)?;
            println!("{}", out.display());
        }
        Command::SummarizeSe { config } => {
            let cfg = config.resolve(None)?;
            let s = cmd_summarize_se(&cfg)?;
            println!("min {:.3}%  max {:.3}%  median {:.3}%", 100.0 * s.min, 100.0 * s.max, 100.0 * s.median);
            for (m, mean) in s.per_method_mean {
                println!("{:<22}{:.3}%", m.label(), 100.0 * mean);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
