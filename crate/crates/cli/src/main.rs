use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use filica_cli::config::{ConfigError, ExperimentConfig};
use filica_cli::{fuse, gen, runner};
use filica_core::matrixio::load_results;
use filica_core::{FiLicaConfig, Method};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "filica", version, about = "Multimodal fusion with missing modalities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Comma-separated, e.g. `filica,replace0`.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
}

impl Overrides {
    fn load(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.base_seed = s;
        }
        if let Some(r) = self.replicates {
            cfg.n_replicates = r;
        }
        if let Some(p) = self.parallelism {
            cfg.parallelism = p;
        }
        if let Some(m) = &self.methods {
            cfg.methods = m.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated replicates as datasets plus their ground truth.
    Gen(Overrides),
    /// Run the simulation grid and write summaries and boxplots.
    Run {
        #[command(flatten)]
        overrides: Overrides,
        /// Reuse finished cells from an earlier run in the same directory.
        #[arg(long)]
        resume: bool,
    },
    /// Fit one method to a dataset manifest.
    Fuse {
        manifest: PathBuf,
        #[arg(long, default_value = "filica")]
        method: Method,
        #[arg(long, default_value_t = 5)]
        components: usize,
        #[arg(long, default_value_t = 1000)]
        lica_iters: usize,
        #[arg(long, default_value_t = 20)]
        fi_updates: usize,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "fuse_out")]
        out: PathBuf,
    },
    /// Rebuild CSV tables and boxplots from the replicate JSON in a directory.
    Report {
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
}

fn execute(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Gen(o) => {
            let cfg = o.load()?;
            let written = gen::generate(&cfg)?;
            println!("wrote {} datasets under {}", written.len(), cfg.out_dir.display());
        }
        Command::Run { overrides, resume } => {
            let cfg = overrides.load()?;
            let summary = runner::run_experiment(&cfg, resume)?;
            println!(
                "{} cells computed, {} reused, {} failed; results in {}",
                summary.computed,
                summary.reused,
                summary.failures.len(),
                cfg.out_dir.display()
            );
            if !summary.failures.is_empty() {
                for f in &summary.failures {
                    eprintln!(
                        "failed: {} pct {} {} replicate {}: {}",
                        f.setting, f.missing_pct, f.method, f.replicate, f.error
                    );
                }
                return Ok(ExitCode::from(3));
            }
        }
        Command::Fuse {
            manifest,
            method,
            components,
            lica_iters,
            fi_updates,
            tol,
            seed,
            out,
        } => {
            let cfg = FiLicaConfig {
                n_components: components,
                lica_iters,
                fi_updates,
                tol_rel: tol,
                seed,
            };
            cfg.validate().map_err(|e| ConfigError(e.to_string()))?;
            let files = fuse::fuse(&manifest, method, &cfg, &out)?;
            println!("wrote {}", files.h.display());
        }
        Command::Report { out } => {
            let report = load_results(&out).with_context(|| format!("reading results in {}", out.display()))?;
            runner::write_outputs(&out, &report)?;
            println!("{} rows, {} aggregates", report.rows.len(), report.aggregates.len());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
