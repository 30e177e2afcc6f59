//! Full-information linked ICA and the comparison strategies.
//!
//! [`fit_filica`] fits the complete cases, recovers loadings for the other
//! subjects from the modalities they do have, imputes their missing
//! modalities from the model and then alternates warm-started refits with
//! re-imputation until the maps and loadings stop moving.

use crate::lica::{Decomposition, Engine, EngineOptions, ReferenceEngine};
use crate::linalg::{all_finite, pinv, select_columns, vstack};
use crate::matrixio::MaskedModality;
use crate::{Error, Matrix, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Filica,
    Completer,
    Replace0,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Oracle, Method::Filica, Method::Replace0, Method::Completer];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Filica => "filica",
            Method::Completer => "completer",
            Method::Replace0 => "replace0",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiLicaConfig {
    #[serde(rename = "L")]
    pub n_components: usize,
    pub lica_iters: usize,
    pub fi_updates: usize,
    pub tol_rel: f64,
    pub seed: u64,
}

impl Default for FiLicaConfig {
    fn default() -> Self {
        FiLicaConfig {
            n_components: 5,
            lica_iters: 1000,
            fi_updates: 20,
            tol_rel: 1e-3,
            seed: 0,
        }
    }
}

impl FiLicaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_components == 0 || self.lica_iters == 0 || self.fi_updates == 0 {
            return Err(Error::InvalidArgument(
                "L, lica_iters and fi_updates must be positive".into(),
            ));
        }
        if !(self.tol_rel > 0.0 && self.tol_rel < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tol_rel must lie in (0, 1), got {}",
                self.tol_rel
            )));
        }
        Ok(())
    }

    fn engine_options(&self, iters: usize) -> EngineOptions {
        EngineOptions::new(self.n_components, iters, self.seed)
    }
}

/// Frobenius change of the stacked maps and of the loadings in one update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiDelta {
    #[serde(rename = "dXw")]
    pub d_xw: f64,
    #[serde(rename = "dH")]
    pub d_h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult {
    pub decomposition: Decomposition,
    pub method: Method,
    pub fi_deltas: Vec<FiDelta>,
    pub fi_converged: bool,
    /// Modalities with missing subjects filled in (full-information fits only).
    pub imputed: Vec<MaskedModality>,
    /// Subject index of each column of `decomposition.h`.
    pub subjects: Vec<usize>,
    /// Iteration budget of the successful engine call.
    pub effective_iters: usize,
}

/// Centre each voxel over the observed subjects and divide by the root mean
/// square of the centred values. Constant rows become zero.
pub fn standardize(m: &MaskedModality) -> Result<MaskedModality> {
    let obs = m.observed_subjects();
    let mut values = m.values.clone();
    for i in 0..m.n_voxels() {
        if obs.len() < 2 {
            return Err(Error::TooFewObserved {
                modality: m.name.clone(),
                row: i,
            });
        }
        let cells: Vec<f64> = obs.iter().map(|&j| m.values[(i, j)]).collect();
        if cells.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("modality {:?}, row {i}", m.name)));
        }
        let mean = cells.iter().sum::<f64>() / cells.len() as f64;
        let ss: f64 = cells.iter().map(|v| (v - mean) * (v - mean)).sum();
        let rms = (ss / cells.len() as f64).sqrt();
        for (&j, &v) in obs.iter().zip(&cells) {
            values[(i, j)] = if rms > 0.0 { (v - mean) / rms } else { 0.0 };
        }
    }
    Ok(MaskedModality {
        name: m.name.clone(),
        values,
        observed: m.observed.clone(),
    })
}

/// Least-squares loadings of the given subjects on stacked maps,
/// `pinv(xw_others) * y_others[:, missing_subjects]`.
pub fn crude_h(xw_others: &Matrix, y_others: &Matrix, missing_subjects: &[usize]) -> Result<Matrix> {
    if xw_others.nrows() != y_others.nrows() {
        return Err(Error::Shape(format!(
            "maps have {} rows, data has {}",
            xw_others.nrows(),
            y_others.nrows()
        )));
    }
    if xw_others.nrows() < xw_others.ncols() {
        return Err(Error::Shape(format!(
            "{} stacked rows cannot determine {} loadings",
            xw_others.nrows(),
            xw_others.ncols()
        )));
    }
    for &j in missing_subjects {
        if j >= y_others.ncols() {
            return Err(Error::Shape(format!("subject {j} out of range")));
        }
        if y_others.column(j).iter().any(|v| !v.is_finite()) {
            return Err(Error::SubjectUnobserved(j));
        }
    }
    Ok(pinv(xw_others) * select_columns(y_others, missing_subjects))
}

/// Replace the missing columns of `m` by `xw_k * h_cols`.
pub fn impute_missing(m: &MaskedModality, xw_k: &Matrix, h_cols: &Matrix) -> Result<MaskedModality> {
    let missing = m.missing_subjects();
    if h_cols.ncols() != missing.len() || xw_k.nrows() != m.n_voxels() || xw_k.ncols() != h_cols.nrows() {
        return Err(Error::Shape(format!(
            "imputing {} missing subjects of a {}-voxel modality from {}x{} maps and {}x{} loadings",
            missing.len(),
            m.n_voxels(),
            xw_k.nrows(),
            xw_k.ncols(),
            h_cols.nrows(),
            h_cols.ncols()
        )));
    }
    let mut out = m.clone();
    if !missing.is_empty() {
        let pred = xw_k * h_cols;
        for (c, &j) in missing.iter().enumerate() {
            out.values.set_column(j, &pred.column(c));
        }
    }
    Ok(out)
}

/// Scale every loading row to unit sample standard deviation, absorbing the
/// inverse scale into the matching map columns.
pub fn rescale_h(d: &Decomposition) -> Result<Decomposition> {
    let mut out = d.clone();
    for r in 0..d.h.nrows() {
        let row: Vec<f64> = d.h.row(r).iter().copied().collect();
        let sd = crate::stats::sd(&row);
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::ZeroVariance(format!("loading row {r}")));
        }
        out.h.row_mut(r).scale_mut(1.0 / sd);
        for (k, x) in out.xw.iter_mut().enumerate() {
            x.column_mut(r).scale_mut(sd);
            out.weights[k][r] *= sd;
        }
    }
    Ok(out)
}

fn check_subjects(modalities: &[MaskedModality]) -> Result<usize> {
    let n = modalities
        .first()
        .ok_or_else(|| Error::InvalidArgument("no modalities".into()))?
        .n_subjects();
    for m in modalities {
        if m.n_subjects() != n || m.observed.len() != n {
            return Err(Error::Shape(format!(
                "modality {:?} has {} subjects, expected {n}",
                m.name,
                m.n_subjects()
            )));
        }
    }
    Ok(n)
}

fn completers(modalities: &[MaskedModality], n: usize) -> Vec<usize> {
    (0..n).filter(|&j| modalities.iter().all(|m| m.observed[j])).collect()
}

fn restrict(m: &MaskedModality, cols: &[usize]) -> MaskedModality {
    MaskedModality {
        name: m.name.clone(),
        values: select_columns(&m.values, cols),
        observed: vec![true; cols.len()],
    }
}

fn values_of(modalities: &[MaskedModality]) -> Vec<Matrix> {
    modalities.iter().map(|m| m.values.clone()).collect()
}

fn complete_case_fit(
    engine: &dyn Engine,
    standardized: &[MaskedModality],
    cfg: &FiLicaConfig,
    n: usize,
) -> Result<(Decomposition, Vec<usize>)> {
    let comp = completers(standardized, n);
    if comp.len() < cfg.n_components.max(2) {
        return Err(Error::TooFewCompleters {
            found: comp.len(),
            required: cfg.n_components.max(2),
        });
    }
    let data: Vec<Matrix> = standardized.iter().map(|m| select_columns(&m.values, &comp)).collect();
    let d = engine.decompose(&data, &cfg.engine_options(cfg.lica_iters), None)?;
    Ok((rescale_h(&d)?, comp))
}

/// Complete-case analysis: standardize and fit using only subjects observed
/// in every modality.
pub fn fit_complete_case(modalities: &[MaskedModality], cfg: &FiLicaConfig) -> Result<FusionResult> {
    fit_complete_case_with(&ReferenceEngine, modalities, cfg)
}

pub fn fit_complete_case_with(
    engine: &dyn Engine,
    modalities: &[MaskedModality],
    cfg: &FiLicaConfig,
) -> Result<FusionResult> {
    cfg.validate()?;
    let n = check_subjects(modalities)?;
    let comp = completers(modalities, n);
    if comp.len() < cfg.n_components.max(2) {
        return Err(Error::TooFewCompleters {
            found: comp.len(),
            required: cfg.n_components.max(2),
        });
    }
    let standardized = modalities
        .iter()
        .map(|m| standardize(&restrict(m, &comp)))
        .collect::<Result<Vec<_>>>()?;
    let (decomposition, _) = complete_case_fit(engine, &standardized, cfg, comp.len())?;
    Ok(FusionResult {
        decomposition,
        method: Method::Completer,
        fi_deltas: Vec::new(),
        fi_converged: false,
        imputed: Vec::new(),
        subjects: comp,
        effective_iters: cfg.lica_iters,
    })
}

/// Initial loadings for every subject outside the complete cases, from the
/// modalities each subject does have. Subjects sharing an observation
/// pattern are solved together.
fn recover_loadings(
    standardized: &[MaskedModality],
    xw: &[Matrix],
    h: &mut Matrix,
    comp: &[usize],
) -> Result<()> {
    let n = h.ncols();
    let mut patterns: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
    for j in 0..n {
        if comp.binary_search(&j).is_err() {
            let pattern: Vec<bool> = standardized.iter().map(|m| m.observed[j]).collect();
            if !pattern.iter().any(|&o| o) {
                return Err(Error::SubjectUnobserved(j));
            }
            patterns.entry(pattern).or_default().push(j);
        }
    }
    for (pattern, subjects) in patterns {
        let present: Vec<usize> = (0..pattern.len()).filter(|&k| pattern[k]).collect();
        let maps: Vec<&Matrix> = present.iter().map(|&k| &xw[k]).collect();
        let data: Vec<Matrix> = present
            .iter()
            .map(|&k| select_columns(&standardized[k].values, &subjects))
            .collect();
        let data_refs: Vec<&Matrix> = data.iter().collect();
        let local: Vec<usize> = (0..subjects.len()).collect();
        let est = crude_h(&vstack(&maps), &vstack(&data_refs), &local)?;
        for (c, &j) in subjects.iter().enumerate() {
            h.set_column(j, &est.column(c));
        }
    }
    Ok(())
}

fn impute_all(
    standardized: &[MaskedModality],
    d: &Decomposition,
) -> Result<Vec<MaskedModality>> {
    standardized
        .iter()
        .zip(&d.xw)
        .map(|(m, xw)| {
            let cols = select_columns(&d.h, &m.missing_subjects());
            impute_missing(m, xw, &cols)
        })
        .collect()
}

/// Full-information linked ICA.
pub fn fit_filica(modalities: &[MaskedModality], cfg: &FiLicaConfig) -> Result<FusionResult> {
    fit_filica_with(&ReferenceEngine, modalities, cfg)
}

pub fn fit_filica_with(
    engine: &dyn Engine,
    modalities: &[MaskedModality],
    cfg: &FiLicaConfig,
) -> Result<FusionResult> {
    cfg.validate()?;
    let n = check_subjects(modalities)?;
    for j in 0..n {
        if modalities.iter().all(|m| !m.observed[j]) {
            return Err(Error::SubjectUnobserved(j));
        }
    }
    let standardized = modalities.iter().map(standardize).collect::<Result<Vec<_>>>()?;

    let (cc, comp) = complete_case_fit(engine, &standardized, cfg, n)?;
    let mut h0 = Matrix::zeros(cfg.n_components, n);
    for (c, &j) in comp.iter().enumerate() {
        h0.set_column(j, &cc.h.column(c));
    }
    recover_loadings(&standardized, &cc.xw, &mut h0, &comp)?;
    if !all_finite(&h0) {
        return Err(Error::NonFinite("recovered loadings".into()));
    }
    let start = Decomposition { h: h0, ..cc };
    let mut imputed = impute_all(&standardized, &start)?;
    let mut prev = rescale_h(&start)?;

    let opts = cfg.engine_options(cfg.lica_iters);
    let mut deltas = Vec::with_capacity(cfg.fi_updates);
    let mut converged = false;
    for s in 1..=cfg.fi_updates {
        let fitted = engine.decompose(&values_of(&imputed), &opts, Some(&prev.h))?;
        let next = rescale_h(&fitted)?;
        imputed = impute_all(&standardized, &next)?;
        let (x_new, x_old) = (next.stacked_xw(), prev.stacked_xw());
        let delta = FiDelta {
            d_xw: (&x_new - &x_old).norm(),
            d_h: (&next.h - &prev.h).norm(),
        };
        deltas.push(delta);
        converged = delta.d_xw < cfg.tol_rel * x_new.norm() && delta.d_h < cfg.tol_rel * next.h.norm();
        log::debug!("fi update {s}: dXw={:.3e} dH={:.3e}", delta.d_xw, delta.d_h);
        prev = next;
        if converged {
            break;
        }
    }

    Ok(FusionResult {
        decomposition: prev,
        method: Method::Filica,
        fi_deltas: deltas,
        fi_converged: converged,
        imputed,
        subjects: (0..n).collect(),
        effective_iters: cfg.lica_iters,
    })
}

/// Next budget after a failed attempt: a quarter less, rounded up, and
/// always strictly smaller so the retry loop terminates.
pub fn reduced_budget(budget: usize) -> usize {
    let three_quarters = (3 * budget).div_ceil(4);
    three_quarters.min(budget.saturating_sub(1))
}

/// Zero-fill baseline: standardize over observed subjects, set missing
/// columns to zero and fit.
pub fn fit_replace0(modalities: &[MaskedModality], cfg: &FiLicaConfig) -> Result<FusionResult> {
    fit_replace0_with(&ReferenceEngine, modalities, cfg)
}

pub fn fit_replace0_with(
    engine: &dyn Engine,
    modalities: &[MaskedModality],
    cfg: &FiLicaConfig,
) -> Result<FusionResult> {
    cfg.validate()?;
    let n = check_subjects(modalities)?;
    let data = modalities
        .iter()
        .map(|m| {
            let mut z = standardize(m)?;
            for j in z.missing_subjects() {
                z.values.column_mut(j).fill(0.0);
            }
            Ok(z.values)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut budget = cfg.lica_iters;
    let mut attempts = 0;
    loop {
        attempts += 1;
        match engine.decompose(&data, &cfg.engine_options(budget), None) {
            Ok(d) => {
                return Ok(FusionResult {
                    decomposition: rescale_h(&d)?,
                    method: Method::Replace0,
                    fi_deltas: Vec::new(),
                    fi_converged: false,
                    imputed: Vec::new(),
                    subjects: (0..n).collect(),
                    effective_iters: budget,
                })
            }
            Err(Error::EngineFailure(msg)) => {
                let next = reduced_budget(budget);
                log::warn!("replace0 fit failed with {budget} iterations ({msg}); retrying with {next}");
                if next < 1 {
                    return Err(Error::BudgetExhausted { attempts });
                }
                budget = next;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Fit on data without missing subjects.
pub fn fit_oracle(full_modalities: &[MaskedModality], cfg: &FiLicaConfig) -> Result<FusionResult> {
    fit_oracle_with(&ReferenceEngine, full_modalities, cfg)
}

pub fn fit_oracle_with(
    engine: &dyn Engine,
    full_modalities: &[MaskedModality],
    cfg: &FiLicaConfig,
) -> Result<FusionResult> {
    cfg.validate()?;
    let n = check_subjects(full_modalities)?;
    for m in full_modalities {
        if !m.is_complete() || m.values.iter().any(|v| v.is_nan()) {
            return Err(Error::MissingData(format!("modality {:?}", m.name)));
        }
    }
    let data = full_modalities
        .iter()
        .map(|m| standardize(m).map(|z| z.values))
        .collect::<Result<Vec<_>>>()?;
    let d = engine.decompose(&data, &cfg.engine_options(cfg.lica_iters), None)?;
    Ok(FusionResult {
        decomposition: rescale_h(&d)?,
        method: Method::Oracle,
        fi_deltas: Vec::new(),
        fi_converged: false,
        imputed: Vec::new(),
        subjects: (0..n).collect(),
        effective_iters: cfg.lica_iters,
    })
}

/// Dispatch on `method`. The oracle expects fully observed modalities.
pub fn fit(method: Method, modalities: &[MaskedModality], cfg: &FiLicaConfig) -> Result<FusionResult> {
    match method {
        Method::Filica => fit_filica(modalities, cfg),
        Method::Completer => fit_complete_case(modalities, cfg),
        Method::Replace0 => fit_replace0(modalities, cfg),
        Method::Oracle => fit_oracle(modalities, cfg),
    }
}
