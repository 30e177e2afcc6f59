//! Fit one method to an external dataset described by a manifest.

use anyhow::Context;
use filica_core::filica::fit;
use filica_core::matrixio::{format_f64, load_dataset, write_json_file, write_matrix_csv};
use filica_core::{FiLicaConfig, FiDelta, Method};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Serialize)]
struct FuseMetadata<'a> {
    method: Method,
    #[serde(rename = "L")]
    n_components: usize,
    n_subjects_fitted: usize,
    subject_ids: Vec<&'a str>,
    modalities: Vec<&'a str>,
    weights: &'a [Vec<f64>],
    noise_var: &'a [f64],
    objective_trace: &'a [f64],
    engine_converged: bool,
    fi_converged: bool,
    fi_updates_run: usize,
    effective_iters: usize,
    config: &'a FiLicaConfig,
}

/// Files written by [`fuse`].
#[derive(Debug, Clone)]
pub struct FuseOutputs {
    pub h: PathBuf,
    pub xw: Vec<PathBuf>,
    pub deltas: PathBuf,
    pub metadata: PathBuf,
}

pub fn fuse(manifest: &Path, method: Method, cfg: &FiLicaConfig, out: &Path) -> anyhow::Result<FuseOutputs> {
    let (manifest_data, modalities) =
        load_dataset(manifest).with_context(|| format!("loading {}", manifest.display()))?;
    let res = fit(method, &modalities, cfg).with_context(|| format!("fitting {method}"))?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let d = &res.decomposition;

    let ids: Vec<&str> = res.subjects.iter().map(|&j| manifest_data.subject_ids[j].as_str()).collect();
    let mut h_text = ids.join(",");
    h_text.push('\n');
    for r in 0..d.h.nrows() {
        let line: Vec<String> = (0..d.h.ncols()).map(|c| format_f64(d.h[(r, c)])).collect();
        h_text.push_str(&line.join(","));
        h_text.push('\n');
    }
    let h_path = out.join("h.csv");
    fs::write(&h_path, h_text).with_context(|| format!("writing {}", h_path.display()))?;

    let mut xw = Vec::new();
    for (m, x) in modalities.iter().zip(&d.xw) {
        let p = out.join(format!("xw_{}.csv", m.name));
        write_matrix_csv(&p, x)?;
        xw.push(p);
    }

    let deltas = out.join("deltas.csv");
    fs::write(&deltas, deltas_csv(&res.fi_deltas)).with_context(|| format!("writing {}", deltas.display()))?;

    let meta = FuseMetadata {
        method,
        n_components: d.n_components,
        n_subjects_fitted: d.h.ncols(),
        subject_ids: ids,
        modalities: modalities.iter().map(|m| m.name.as_str()).collect(),
        weights: &d.weights,
        noise_var: &d.noise_var,
        objective_trace: &d.objective_trace,
        engine_converged: d.converged,
        fi_converged: res.fi_converged,
        fi_updates_run: res.fi_deltas.len(),
        effective_iters: res.effective_iters,
        config: cfg,
    };
    let metadata = out.join("metadata.json");
    write_json_file(&metadata, &meta)?;
    Ok(FuseOutputs {
        h: h_path,
        xw,
        deltas,
        metadata,
    })
}

fn deltas_csv(deltas: &[FiDelta]) -> String {
    let mut s = String::from("dXw,dH\n");
    for d in deltas {
        s.push_str(&format!("{},{}\n", format_f64(d.d_xw), format_f64(d.d_h)));
    }
    s
}
