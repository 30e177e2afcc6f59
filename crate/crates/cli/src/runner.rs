//! Simulation experiment runner.
//!
//! The grid is cut into (setting, replicate) work units so each replicate's
//! data are generated once and the oracle is fitted once per unit. Every
//! finished (setting, pct, method, replicate) cell is sent to a single
//! collector that persists it under `cells/`, which is what `--resume` reads.

use crate::config::ExperimentConfig;
use crate::svg;
use anyhow::Context;
use filica_core::eval::{aggregate, evaluate_fit, sort_rows, EvalReport, EvalRow, SubjectScope};
use filica_core::filica::{fit, FusionResult};
use filica_core::matrixio::{format_f64, read_json_file, save_results, write_json_file};
use filica_core::simgen::{gen_replicate, replicate_seed};
use filica_core::{Method, Setting};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub setting: Setting,
    pub missing_pct: f64,
    pub method: Method,
    pub replicate: usize,
    pub rows: Vec<EvalRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub setting: Setting,
    pub missing_pct: f64,
    pub method: Method,
    pub replicate: usize,
    pub error: String,
}

#[derive(Debug, Clone)]
enum Outcome {
    Done(CellRecord),
    Failed(CellFailure),
}

#[derive(Debug)]
pub struct RunSummary {
    pub report: EvalReport,
    pub failures: Vec<CellFailure>,
    /// Cells taken from a previous run's cache.
    pub reused: usize,
    pub computed: usize,
}

pub fn cell_key(setting: Setting, pct: f64, method: Method, replicate: usize) -> String {
    format!("{setting}_{}_{method}_{replicate}", format_f64(pct))
}

fn cells_dir(out: &Path) -> PathBuf {
    out.join("cells")
}

fn load_cached(out: &Path, cfg: &ExperimentConfig) -> Vec<CellRecord> {
    let mut found = Vec::new();
    for &setting in &cfg.settings {
        for pct in cfg.effective_pcts() {
            for &method in &cfg.methods {
                for rep in 0..cfg.n_replicates {
                    let key = cell_key(setting, pct, method, rep);
                    let path = cells_dir(out).join(format!("{key}.json"));
                    if let Ok(rec) = read_json_file::<CellRecord>(&path) {
                        let matches = rec.setting == setting
                            && rec.missing_pct == pct
                            && rec.method == method
                            && rec.replicate == rep
                            && !rec.rows.is_empty()
                            && rec.rows.iter().all(|r| r.value.is_finite());
                        if matches {
                            found.push(rec);
                        } else {
                            log::warn!("ignoring invalid cached cell {}", path.display());
                        }
                    }
                }
            }
        }
    }
    found
}

fn run_unit(
    cfg: &ExperimentConfig,
    setting: Setting,
    replicate: usize,
    done: &HashSet<String>,
    send: &mut dyn FnMut(Outcome),
) {
    let seed = replicate_seed(cfg.base_seed, replicate);
    let mut oracle: Option<Result<FusionResult, String>> = None;
    for pct in cfg.effective_pcts() {
        let pending: Vec<Method> = cfg
            .methods
            .iter()
            .copied()
            .filter(|&m| !done.contains(&cell_key(setting, pct, m, replicate)))
            .collect();
        if pending.is_empty() {
            continue;
        }
        let data = match gen_replicate(setting, pct, seed) {
            Ok(d) => d,
            Err(e) => {
                for method in pending {
                    send(Outcome::Failed(CellFailure {
                        setting,
                        missing_pct: pct,
                        method,
                        replicate,
                        error: format!("generation failed: {e}"),
                    }));
                }
                continue;
            }
        };
        for method in pending {
            let fitted = if method == Method::Oracle {
                oracle
                    .get_or_insert_with(|| {
                        fit(Method::Oracle, &data.full, &cfg.fit_config(method, seed)).map_err(|e| e.to_string())
                    })
                    .clone()
            } else {
                fit(method, &data.masked, &cfg.fit_config(method, seed)).map_err(|e| e.to_string())
            };
            let rows = fitted.and_then(|res| {
                let mut res = res;
                res.method = method;
                evaluate_fit(&data.truth, &res, replicate, SubjectScope::All).map_err(|e| e.to_string())
            });
            send(match rows {
                Ok(rows) => Outcome::Done(CellRecord {
                    setting,
                    missing_pct: pct,
                    method,
                    replicate,
                    rows,
                }),
                Err(error) => {
                    log::warn!("{} failed: {error}", cell_key(setting, pct, method, replicate));
                    Outcome::Failed(CellFailure {
                        setting,
                        missing_pct: pct,
                        method,
                        replicate,
                        error,
                    })
                }
            });
        }
    }
}

fn write_atomic_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let tmp = path.with_extension("json.tmp");
    write_json_file(&tmp, value)?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {}", tmp.display()))?;
    Ok(())
}

/// Run every cell of the experiment and write all outputs to `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, resume: bool) -> anyhow::Result<RunSummary> {
    let out = &cfg.out_dir;
    fs::create_dir_all(cells_dir(out)).with_context(|| format!("creating {}", out.display()))?;

    let cached = if resume { load_cached(out, cfg) } else { Vec::new() };
    let done: HashSet<String> = cached
        .iter()
        .map(|c| cell_key(c.setting, c.missing_pct, c.method, c.replicate))
        .collect();
    let reused = cached.len();

    let units: Vec<(Setting, usize)> = cfg
        .settings
        .iter()
        .flat_map(|&s| (0..cfg.n_replicates).map(move |r| (s, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .context("building worker pool")?;

    let mut records = cached;
    let mut failures = Vec::new();
    let mut write_error = None;
    let (tx, rx) = mpsc::channel::<Outcome>();
    std::thread::scope(|scope| {
        let done = &done;
        let units = &units;
        let pool = &pool;
        scope.spawn(move || {
            pool.install(|| {
                units.par_iter().for_each_with(tx, |tx, &(setting, rep)| {
                    run_unit(cfg, setting, rep, done, &mut |o| {
                        let _ = tx.send(o);
                    });
                });
            });
        });
        for outcome in rx {
            match outcome {
                Outcome::Done(rec) => {
                    let key = cell_key(rec.setting, rec.missing_pct, rec.method, rec.replicate);
                    let path = cells_dir(out).join(format!("{key}.json"));
                    if let Err(e) = write_atomic_json(&path, &rec) {
                        write_error.get_or_insert(e);
                    }
                    log::info!("finished {key}");
                    records.push(rec);
                }
                Outcome::Failed(f) => failures.push(f),
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    let computed = records.len() - reused;

    let mut rows: Vec<EvalRow> = records.into_iter().flat_map(|r| r.rows).collect();
    sort_rows(&mut rows);
    failures.sort_by(|a, b| {
        (a.setting, a.method, a.replicate)
            .cmp(&(b.setting, b.method, b.replicate))
            .then(a.missing_pct.total_cmp(&b.missing_pct))
    });
    let report = aggregate(rows)?;
    write_outputs(out, &report)?;
    write_json_file(&out.join("failures.json"), &failures)?;
    Ok(RunSummary {
        report,
        failures,
        reused,
        computed,
    })
}

/// Write per-replicate JSON, `summary.csv`, `aggregates.csv` and the SVG
/// boxplots for a report, replacing earlier ones.
pub fn write_outputs(out: &Path, report: &EvalReport) -> anyhow::Result<()> {
    fs::create_dir_all(out)?;
    for entry in fs::read_dir(out)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let stale = (name.starts_with("replicate_") && name.ends_with(".json"))
            || (name.starts_with("boxplot_") && name.ends_with(".svg"));
        if stale {
            fs::remove_file(&path)?;
        }
    }
    save_results(out, report)?;
    fs::write(out.join("aggregates.csv"), aggregates_csv(report))?;
    for (name, text) in svg::report_boxplots(report) {
        fs::write(out.join(name), text)?;
    }
    Ok(())
}

pub fn aggregates_csv(report: &EvalReport) -> String {
    let mut s = String::from("setting,missing_pct,method,metric,component,n,mean,sd,median,q1,q3\n");
    for a in &report.aggregates {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            a.setting,
            format_f64(a.missing_pct),
            a.method,
            a.metric,
            a.component,
            a.n,
            format_f64(a.mean),
            format_f64(a.sd),
            format_f64(a.median),
            format_f64(a.q1),
            format_f64(a.q3)
        ));
    }
    s
}
