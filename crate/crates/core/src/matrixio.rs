//! Dataset and result persistence.
//!
//! A dataset is a JSON manifest next to one headerless CSV per modality
//! (rows are voxels, columns subjects, `NA` marks a missing cell). Numbers
//! are written in shortest round-trip form so reloading is exact.

use crate::eval::{EvalReport, EvalRow};
use crate::{Error, Matrix, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

pub const MISSING_TOKEN: &str = "NA";
pub const SUMMARY_HEADER: [&str; 7] = [
    "setting",
    "missing_pct",
    "method",
    "replicate",
    "metric",
    "component",
    "value",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityEntry {
    pub name: String,
    pub n_voxels: usize,
    pub data_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub n_subjects: usize,
    pub modalities: Vec<ModalityEntry>,
    pub subject_ids: Vec<String>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 {
            return Err(Error::Shape("manifest has zero subjects".into()));
        }
        if self.subject_ids.len() != self.n_subjects {
            return Err(Error::Shape(format!(
                "{} subject ids for {} subjects",
                self.subject_ids.len(),
                self.n_subjects
            )));
        }
        if self.modalities.is_empty() {
            return Err(Error::Shape("manifest lists no modalities".into()));
        }
        let mut seen = HashSet::new();
        for m in &self.modalities {
            if !seen.insert(m.name.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate modality name {:?}", m.name)));
            }
            if m.n_voxels == 0 {
                return Err(Error::Shape(format!("modality {:?} has zero voxels", m.name)));
            }
        }
        Ok(())
    }
}

/// One modality's voxel x subject matrix. Missing subjects are whole
/// columns of NaN with `observed[j] == false`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedModality {
    pub name: String,
    pub values: Matrix,
    pub observed: Vec<bool>,
}

impl MaskedModality {
    /// Derive the mask from NaN cells, rejecting partially missing columns.
    pub fn from_values(name: impl Into<String>, values: Matrix) -> Result<Self> {
        let name = name.into();
        let mut observed = Vec::with_capacity(values.ncols());
        for j in 0..values.ncols() {
            let col = values.column(j);
            let missing = col.iter().filter(|v| v.is_nan()).count();
            if missing != 0 && missing != col.len() {
                return Err(Error::PartialMissing {
                    modality: name,
                    subject: j,
                });
            }
            if col.iter().any(|v| v.is_infinite()) {
                return Err(Error::NonFinite(format!("modality {name:?}, subject {j}")));
            }
            observed.push(missing == 0 || col.is_empty());
        }
        Ok(MaskedModality {
            name,
            values,
            observed,
        })
    }

    /// Blank out the given subjects of a fully observed matrix.
    pub fn with_missing(name: impl Into<String>, mut values: Matrix, missing: &[usize]) -> Self {
        let mut observed = vec![true; values.ncols()];
        for &j in missing {
            observed[j] = false;
            values.column_mut(j).fill(f64::NAN);
        }
        MaskedModality {
            name: name.into(),
            values,
            observed,
        }
    }

    pub fn n_voxels(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_subjects(&self) -> usize {
        self.values.ncols()
    }

    pub fn missing_subjects(&self) -> Vec<usize> {
        (0..self.observed.len()).filter(|&j| !self.observed[j]).collect()
    }

    pub fn observed_subjects(&self) -> Vec<usize> {
        (0..self.observed.len()).filter(|&j| self.observed[j]).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

fn parse_cell(token: &str, path: &Path, line: usize, column: usize) -> Result<f64> {
    let t = token.trim();
    if t == MISSING_TOKEN {
        return Ok(f64::NAN);
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            column,
            token: token.to_string(),
        }),
    }
}

/// Read a headerless numeric CSV into a matrix, `NA` becoming NaN.
pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, tok)| parse_cell(tok, path, i + 1, j + 1))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Shape(format!(
                    "{}: line {} has {} cells, expected {}",
                    path.display(),
                    i + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Shape(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = String::with_capacity(m.nrows() * m.ncols() * 20);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            let v = m[(i, j)];
            if v.is_nan() {
                out.push_str(MISSING_TOKEN);
            } else {
                out.push_str(&format_f64(v));
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Load a manifest and its modality files.
pub fn load_dataset(manifest_path: &Path) -> Result<(DatasetManifest, Vec<MaskedModality>)> {
    let manifest: DatasetManifest = read_json(manifest_path)?;
    manifest.validate()?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut modalities = Vec::with_capacity(manifest.modalities.len());
    for entry in &manifest.modalities {
        let path = base.join(&entry.data_path);
        let values = read_matrix_csv(&path)?;
        if values.nrows() != entry.n_voxels || values.ncols() != manifest.n_subjects {
            return Err(Error::Shape(format!(
                "{}: {}x{} matrix, manifest says {}x{}",
                path.display(),
                values.nrows(),
                values.ncols(),
                entry.n_voxels,
                manifest.n_subjects
            )));
        }
        modalities.push(MaskedModality::from_values(entry.name.clone(), values)?);
    }
    for j in 0..manifest.n_subjects {
        if modalities.iter().all(|m| !m.observed[j]) {
            return Err(Error::SubjectUnobserved(j));
        }
    }
    Ok((manifest, modalities))
}

/// Write `manifest.json` plus one `<name>.csv` per modality into `dir`.
pub fn save_dataset(
    dir: &Path,
    subject_ids: &[String],
    modalities: &[MaskedModality],
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = modalities.first().map_or(subject_ids.len(), |m| m.n_subjects());
    if subject_ids.len() != n {
        return Err(Error::Shape(format!("{} subject ids for {n} subjects", subject_ids.len())));
    }
    let mut entries = Vec::with_capacity(modalities.len());
    for m in modalities {
        let file = format!("{}.csv", m.name);
        write_matrix_csv(&dir.join(&file), &m.values)?;
        entries.push(ModalityEntry {
            name: m.name.clone(),
            n_voxels: m.n_voxels(),
            data_path: file,
        });
    }
    let manifest = DatasetManifest {
        n_subjects: n,
        modalities: entries,
        subject_ids: subject_ids.to_vec(),
    };
    manifest.validate()?;
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub rows: Vec<EvalRow>,
}

fn summary_line(r: &EvalRow) -> String {
    format!(
        "{},{},{},{},{},{},{}\n",
        r.setting,
        format_f64(r.missing_pct),
        r.method,
        r.replicate,
        r.metric,
        r.component,
        format_f64(r.value)
    )
}

/// Render rows as the summary CSV text (header plus one line per row).
pub fn summary_csv(rows: &[EvalRow]) -> String {
    let mut out = SUMMARY_HEADER.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&summary_line(r));
    }
    out
}

/// Write `replicate_<i>.json` for every replicate index present and a
/// `summary.csv` with one line per row.
pub fn save_results(out_dir: &Path, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut by_rep: BTreeMap<usize, Vec<EvalRow>> = BTreeMap::new();
    for r in &report.rows {
        by_rep.entry(r.replicate).or_default().push(r.clone());
    }
    for (replicate, rows) in by_rep {
        let record = ReplicateRecord { replicate, rows };
        write_json(&out_dir.join(format!("replicate_{replicate}.json")), &record)?;
    }
    let path = out_dir.join("summary.csv");
    fs::write(&path, summary_csv(&report.rows)).map_err(|e| Error::io(&path, e))
}

/// Rebuild a report from the `replicate_<i>.json` files in `out_dir`.
pub fn load_results(out_dir: &Path) -> Result<EvalReport> {
    let mut records: Vec<ReplicateRecord> = Vec::new();
    let entries = fs::read_dir(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(out_dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("replicate_") && name.ends_with(".json") {
            records.push(read_json(&path)?);
        }
    }
    records.sort_by_key(|r| r.replicate);
    let mut rows: Vec<EvalRow> = records.into_iter().flat_map(|r| r.rows).collect();
    crate::eval::sort_rows(&mut rows);
    crate::eval::aggregate(rows)
}

/// Parse a summary CSV written by [`save_results`].
pub fn read_summary_csv(path: &Path) -> Result<Vec<EvalRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let bad = |j: usize| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            column: j + 1,
            token: field(j).to_string(),
        };
        rows.push(EvalRow {
            setting: field(0).to_string(),
            missing_pct: field(1).parse().map_err(|_| bad(1))?,
            method: field(2).to_string(),
            replicate: field(3).parse().map_err(|_| bad(3))?,
            metric: field(4).to_string(),
            component: field(5).parse().map_err(|_| bad(5))?,
            value: field(6).parse().map_err(|_| bad(6))?,
        });
    }
    Ok(rows)
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value)
}

pub fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    read_json(path)
}
