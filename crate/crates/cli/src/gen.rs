//! Write simulated replicates to disk in the dataset format.

use crate::config::ExperimentConfig;
use anyhow::Context;
use filica_core::matrixio::{format_f64, save_dataset, write_json_file};
use filica_core::simgen::{gen_replicate, replicate_seed};
use std::path::PathBuf;

/// One directory per (setting, pct, replicate):
/// `<out>/<setting>/pct_<pct>/rep_<i>/` holding the manifest, one CSV per
/// modality and `truth.json`. Returns the manifest paths.
pub fn generate(cfg: &ExperimentConfig) -> anyhow::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for &setting in &cfg.settings {
        for pct in cfg.effective_pcts() {
            for rep in 0..cfg.n_replicates {
                let seed = replicate_seed(cfg.base_seed, rep);
                let data = gen_replicate(setting, pct, seed)
                    .with_context(|| format!("generating {setting} pct {pct} replicate {rep}"))?;
                let dir = cfg
                    .out_dir
                    .join(setting.as_str())
                    .join(format!("pct_{}", format_f64(pct)))
                    .join(format!("rep_{rep}"));
                let ids: Vec<String> = (1..=data.truth.h_true.ncols()).map(|j| format!("sub{j:03}")).collect();
                let manifest = save_dataset(&dir, &ids, &data.masked)?;
                write_json_file(&dir.join("truth.json"), &data.truth)?;
                written.push(manifest);
            }
        }
    }
    Ok(written)
}
