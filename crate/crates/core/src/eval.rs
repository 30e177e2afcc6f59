//! Scoring fits against simulated ground truth.
//!
//! Each true component is matched to the estimated component whose stacked
//! spatial map correlates with it most strongly in absolute value. Loadings
//! and covariate associations are then read off the matched rows, with the
//! sign taken from the correlation of matched and true loadings.

use crate::filica::{FusionResult, Method};
use crate::simgen::{Setting, SimTruth, C1_TRUTH, C2_COHENS_D_TRUTH, C2_CORR_TRUTH};
use crate::stats::{mean, pearson, quantile_sorted, sd};
use crate::{Error, Matrix, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const XW_ABS_CORR: &str = "xw_abs_corr";
pub const H_ABS_CORR: &str = "h_abs_corr";
pub const C1_CORR_BIAS: &str = "c1_corr_bias";
pub const C2_CORR_BIAS: &str = "c2_corr_bias";
pub const C2_COHENS_D_BIAS: &str = "c2_cohens_d_bias";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Estimated component index for each true component.
    pub mapping: Vec<usize>,
    /// Sign of corr(matched loading row, true loading row); +1 until set.
    pub sign: Vec<f64>,
    pub xw_abs_corr: Vec<f64>,
    pub h_abs_corr: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasKind {
    Correlation,
    CohensD,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub setting: String,
    pub missing_pct: f64,
    pub method: String,
    pub replicate: usize,
    pub metric: String,
    pub component: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub setting: String,
    pub missing_pct: f64,
    pub method: String,
    pub metric: String,
    pub component: usize,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub aggregates: Vec<Aggregate>,
}

impl EvalReport {
    pub fn find(&self, setting: &str, missing_pct: f64, method: &str, metric: &str, component: usize) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| {
            a.setting == setting
                && (a.missing_pct - missing_pct).abs() < 1e-12
                && a.method == method
                && a.metric == metric
                && a.component == component
        })
    }
}

fn column(m: &Matrix, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

fn row(m: &Matrix, r: usize) -> Vec<f64> {
    m.row(r).iter().copied().collect()
}

/// Match each true map to the estimated map of largest |corr|. Constant
/// estimated columns are skipped.
pub fn best_match(xw_est_stacked: &Matrix, xw_true_stacked: &Matrix) -> Result<MatchResult> {
    if xw_est_stacked.nrows() != xw_true_stacked.nrows() {
        return Err(Error::Shape(format!(
            "estimated maps have {} voxels, true maps {}",
            xw_est_stacked.nrows(),
            xw_true_stacked.nrows()
        )));
    }
    if xw_est_stacked.ncols() < 2 {
        return Err(Error::InvalidArgument("need at least two estimated components".into()));
    }
    let est: Vec<Vec<f64>> = (0..xw_est_stacked.ncols()).map(|c| column(xw_est_stacked, c)).collect();
    let mut mapping = Vec::new();
    let mut xw_abs_corr = Vec::new();
    for t in 0..xw_true_stacked.ncols() {
        let truth = column(xw_true_stacked, t);
        let mut best: Option<(usize, f64)> = None;
        for (c, e) in est.iter().enumerate() {
            if let Some(r) = pearson(e, &truth) {
                if best.is_none_or(|(_, b)| r.abs() > b) {
                    best = Some((c, r.abs()));
                }
            }
        }
        let (c, r) = best.ok_or_else(|| {
            Error::ZeroVariance(format!("no estimated map has variance to match true component {}", t + 1))
        })?;
        mapping.push(c);
        xw_abs_corr.push(r);
    }
    for a in 0..mapping.len() {
        if mapping[a + 1..].contains(&mapping[a]) {
            log::warn!("several true components share best match {}", mapping[a]);
        }
    }
    let k = mapping.len();
    Ok(MatchResult {
        mapping,
        sign: vec![1.0; k],
        xw_abs_corr,
        h_abs_corr: Vec::new(),
    })
}

/// Estimated and true loading rows restricted to the subjects compared.
/// `h_est` either covers every subject or exactly `subset`.
fn paired_rows(
    h_est: &Matrix,
    h_true: &Matrix,
    est_row: usize,
    true_row: usize,
    subset: Option<&[usize]>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = h_true.ncols();
    let cols: Vec<usize> = subset.map_or_else(|| (0..n).collect(), <[usize]>::to_vec);
    if cols.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "{} subjects are too few to correlate",
            cols.len()
        )));
    }
    let t: Vec<f64> = cols.iter().map(|&j| h_true[(true_row, j)]).collect();
    let e: Vec<f64> = if h_est.ncols() == n {
        cols.iter().map(|&j| h_est[(est_row, j)]).collect()
    } else if h_est.ncols() == cols.len() {
        row(h_est, est_row)
    } else {
        return Err(Error::Shape(format!(
            "estimated loadings have {} columns; expected {n} or {}",
            h_est.ncols(),
            cols.len()
        )));
    };
    Ok((e, t))
}

/// |corr| between matched and true loading rows over `subject_subset`.
pub fn h_metrics(
    h_est: &Matrix,
    h_true: &Matrix,
    m: &MatchResult,
    subject_subset: Option<&[usize]>,
) -> Result<Vec<f64>> {
    Ok(h_signed_corr(h_est, h_true, m, subject_subset)?
        .into_iter()
        .map(f64::abs)
        .collect())
}

fn h_signed_corr(
    h_est: &Matrix,
    h_true: &Matrix,
    m: &MatchResult,
    subset: Option<&[usize]>,
) -> Result<Vec<f64>> {
    m.mapping
        .iter()
        .enumerate()
        .map(|(t, &e)| {
            let (est, truth) = paired_rows(h_est, h_true, e, t, subset)?;
            pearson(&est, &truth).ok_or_else(|| Error::ZeroVariance(format!("loading row {e}")))
        })
        .collect()
}

/// Fill in `sign` and `h_abs_corr` of a match.
pub fn complete_match(
    h_est: &Matrix,
    h_true: &Matrix,
    m: &mut MatchResult,
    subject_subset: Option<&[usize]>,
) -> Result<()> {
    let r = h_signed_corr(h_est, h_true, m, subject_subset)?;
    m.sign = r.iter().map(|v| if *v < 0.0 { -1.0 } else { 1.0 }).collect();
    m.h_abs_corr = r.iter().map(|v| v.abs()).collect();
    Ok(())
}

/// Cohen's d of `values` between `group == 1` and `group == 0`, pooled sd.
pub fn cohens_d(values: &[f64], group: &[f64]) -> Result<f64> {
    if values.len() != group.len() {
        return Err(Error::Shape("values and groups differ in length".into()));
    }
    let mut g1 = Vec::new();
    let mut g0 = Vec::new();
    for (&v, &g) in values.iter().zip(group) {
        match g {
            1.0 => g1.push(v),
            0.0 => g0.push(v),
            other => {
                return Err(Error::InvalidArgument(format!("covariate value {other} is not binary")))
            }
        }
    }
    if g1.is_empty() || g0.is_empty() || g1.len() + g0.len() < 3 {
        return Err(Error::InvalidArgument("binary covariate needs both groups".into()));
    }
    let (n1, n0) = (g1.len() as f64, g0.len() as f64);
    let pooled = (((n1 - 1.0) * sd(&g1).powi(2) + (n0 - 1.0) * sd(&g0).powi(2)) / (n1 + n0 - 2.0)).sqrt();
    if pooled == 0.0 {
        return Err(Error::ZeroVariance("pooled standard deviation".into()));
    }
    Ok((mean(&g1) - mean(&g0)) / pooled)
}

/// Statistic of `sign * h_est_matched` against a covariate, minus `truth`.
pub fn covariate_bias(h_est_matched: &[f64], sign: f64, covariate: &[f64], truth: f64, kind: BiasKind) -> Result<f64> {
    if h_est_matched.len() != covariate.len() {
        return Err(Error::Shape(format!(
            "{} loadings against {} covariate values",
            h_est_matched.len(),
            covariate.len()
        )));
    }
    let h: Vec<f64> = h_est_matched.iter().map(|v| sign * v).collect();
    let stat = match kind {
        BiasKind::Correlation => {
            pearson(covariate, &h).ok_or_else(|| Error::ZeroVariance("covariate or loading".into()))?
        }
        BiasKind::CohensD => cohens_d(&h, covariate)?,
    };
    Ok(stat - truth)
}

/// Which subjects enter the loading and covariate metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SubjectScope {
    /// Every subject the method estimated (completers for complete-case).
    #[default]
    All,
    /// Only subjects missing from some modality. A diagnostic for the
    /// loadings; covariate metrics are skipped because under MAR the
    /// missing subjects can all fall in one covariate group.
    MissingOnly,
}

/// Score one fitted replicate. Rows come out in (metric, component) order.
pub fn evaluate_fit(
    truth: &SimTruth,
    result: &FusionResult,
    replicate: usize,
    scope: SubjectScope,
) -> Result<Vec<EvalRow>> {
    let d = &result.decomposition;
    let mut m = best_match(&d.stacked_xw(), &truth.stacked_xw())?;
    let n = truth.h_true.ncols();

    let mut subset: Option<Vec<usize>> = (result.method == Method::Completer).then(|| result.subjects.clone());
    if scope == SubjectScope::MissingOnly {
        let mut miss: Vec<usize> = truth.missing_assign.iter().flatten().copied().collect();
        miss.sort_unstable();
        miss.dedup();
        if d.h.ncols() != n {
            miss.retain(|j| result.subjects.contains(j));
        }
        subset = Some(miss);
    }
    complete_match(&d.h, &truth.h_true, &mut m, subset.as_deref())?;

    let row = |metric: &str, component: usize, value: f64| EvalRow {
        setting: truth.setting.as_str().to_string(),
        missing_pct: truth.missing_pct,
        method: result.method.as_str().to_string(),
        replicate,
        metric: metric.to_string(),
        component,
        value,
    };
    let mut rows = Vec::new();
    for (t, v) in m.xw_abs_corr.iter().enumerate() {
        rows.push(row(XW_ABS_CORR, t + 1, *v));
    }
    for (t, v) in m.h_abs_corr.iter().enumerate() {
        rows.push(row(H_ABS_CORR, t + 1, *v));
    }

    if truth.setting.has_covariates() && scope == SubjectScope::All {
        let cols: Vec<usize> = subset.clone().unwrap_or_else(|| (0..n).collect());
        let pick = |cov: &[f64]| -> Vec<f64> { cols.iter().map(|&j| cov[j]).collect() };
        let (h1, _) = paired_rows(&d.h, &truth.h_true, m.mapping[0], 0, subset.as_deref())?;
        let (h2, _) = paired_rows(&d.h, &truth.h_true, m.mapping[1], 1, subset.as_deref())?;
        let b1 = covariate_bias(&h1, m.sign[0], &pick(&truth.c1), C1_TRUTH, BiasKind::Correlation)?;
        rows.push(row(C1_CORR_BIAS, 1, b1));
        if truth.setting == Setting::MarMixed {
            let b2 = covariate_bias(&h2, m.sign[1], &pick(&truth.c2), C2_COHENS_D_TRUTH, BiasKind::CohensD)?;
            rows.push(row(C2_COHENS_D_BIAS, 2, b2));
        } else {
            let b2 = covariate_bias(&h2, m.sign[1], &pick(&truth.c2), C2_CORR_TRUTH, BiasKind::Correlation)?;
            rows.push(row(C2_CORR_BIAS, 2, b2));
        }
    }
    Ok(rows)
}

fn rank_of(name: &str, known: &[&str]) -> usize {
    known.iter().position(|k| *k == name).unwrap_or(known.len())
}

fn setting_rank(s: &str) -> usize {
    rank_of(s, &Setting::ALL.map(Setting::as_str))
}

fn method_rank(s: &str) -> usize {
    rank_of(s, &Method::ALL.map(Method::as_str))
}

const METRIC_ORDER: [&str; 5] = [XW_ABS_CORR, H_ABS_CORR, C1_CORR_BIAS, C2_CORR_BIAS, C2_COHENS_D_BIAS];

/// Canonical row order: setting, missing %, method, replicate, metric, component.
pub fn sort_rows(rows: &mut [EvalRow]) {
    rows.sort_by(|a, b| {
        (setting_rank(&a.setting), &a.setting)
            .cmp(&(setting_rank(&b.setting), &b.setting))
            .then(a.missing_pct.total_cmp(&b.missing_pct))
            .then((method_rank(&a.method), &a.method).cmp(&(method_rank(&b.method), &b.method)))
            .then(a.replicate.cmp(&b.replicate))
            .then((rank_of(&a.metric, &METRIC_ORDER), &a.metric).cmp(&(rank_of(&b.metric, &METRIC_ORDER), &b.metric)))
            .then(a.component.cmp(&b.component))
    });
}

type GroupKey = (usize, String, u64, usize, String, usize, String, usize);

fn group_key(r: &EvalRow) -> GroupKey {
    (
        setting_rank(&r.setting),
        r.setting.clone(),
        r.missing_pct.to_bits(),
        method_rank(&r.method),
        r.method.clone(),
        rank_of(&r.metric, &METRIC_ORDER),
        r.metric.clone(),
        r.component,
    )
}

/// Summary statistics for one group of values.
pub fn summarize(values: &[f64]) -> Result<(f64, f64, f64, f64, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("empty group".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((
        mean(values),
        sd(values),
        quantile_sorted(&sorted, 0.5),
        quantile_sorted(&sorted, 0.25),
        quantile_sorted(&sorted, 0.75),
    ))
}

/// Group rows by (setting, missing %, method, metric, component) and
/// summarise each group. Sample sd; a single value has sd 0.
pub fn aggregate(rows: Vec<EvalRow>) -> Result<EvalReport> {
    let mut groups: BTreeMap<GroupKey, (EvalRow, Vec<f64>)> = BTreeMap::new();
    for r in &rows {
        groups
            .entry(group_key(r))
            .or_insert_with(|| (r.clone(), Vec::new()))
            .1
            .push(r.value);
    }
    let mut aggregates = Vec::with_capacity(groups.len());
    for (first, values) in groups.into_values() {
        let (mean, sd, median, q1, q3) = summarize(&values)?;
        aggregates.push(Aggregate {
            setting: first.setting,
            missing_pct: first.missing_pct,
            method: first.method,
            metric: first.metric,
            component: first.component,
            n: values.len(),
            mean,
            sd,
            median,
            q1,
            q3,
        });
    }
    Ok(EvalReport { rows, aggregates })
}
