//! Linked ICA decomposition `Y^(k) = X_W^(k) H + E^(k)` on fully observed data.
//!
//! The reference engine works on the stacked, voxel-balanced data matrix. A
//! truncated eigendecomposition of the subject Gram matrix gives whitened
//! spatial maps. Within each group of components whose energies are within
//! `cluster_ratio` of each other, the maps are then rotated by Jacobi sweeps
//! to maximise the summed absolute third moment, an uncentered skewness
//! contrast over voxels. Rotation between energy groups is never attempted,
//! so well-separated signal and noise subspaces stay apart. `H` is the
//! least-squares loading of the data on the rotated maps, and each `X_W^(k)`
//! the least-squares map of modality `k` given `H`.

use crate::linalg::{all_finite, pinv, polar_factor, sym_eigen_desc};
use crate::{Error, Matrix, Result};
use serde::{Deserialize, Serialize};

/// Angles tried per Jacobi pair. The contrast has period pi/2, so the grid
/// spans [-pi/4, pi/4); centring it on zero keeps small corrections small
/// instead of turning them into a swap plus sign flip.
const ANGLE_GRID: usize = 720;
/// Eigenvalues below this fraction of the leading one count as zero.
const RANK_TOL: f64 = 1e-12;
/// Convergence threshold on the final objective change.
pub const DF_TOL: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// Weighted spatial maps, one `voxels x L` matrix per modality.
    pub xw: Vec<Matrix>,
    /// Column root-mean-square of each `xw[k]`.
    pub weights: Vec<Vec<f64>>,
    /// Shared subject loadings, `L x n_subjects`.
    pub h: Matrix,
    pub noise_var: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub n_components: usize,
}

impl Decomposition {
    pub fn n_subjects(&self) -> usize {
        self.h.ncols()
    }

    /// All modality maps stacked row-wise.
    pub fn stacked_xw(&self) -> Matrix {
        let parts: Vec<&Matrix> = self.xw.iter().collect();
        crate::linalg::vstack(&parts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineOptions {
    pub n_components: usize,
    /// Cap on Jacobi sweeps.
    pub max_iters: usize,
    /// Carried for reproducibility records. The reference engine starts
    /// from the principal basis and draws no random numbers.
    pub seed: u64,
    /// Consecutive component energies within this ratio share a rotation group.
    pub cluster_ratio: f64,
}

impl EngineOptions {
    pub fn new(n_components: usize, max_iters: usize, seed: u64) -> Self {
        EngineOptions {
            n_components,
            max_iters,
            seed,
            cluster_ratio: 2.0,
        }
    }
}

/// Anything that can fit the linked model. The fusion strategies are generic
/// over this so tests can inject failing engines.
pub trait Engine: Sync {
    fn decompose(
        &self,
        modalities: &[Matrix],
        opts: &EngineOptions,
        init_h: Option<&Matrix>,
    ) -> Result<Decomposition>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceEngine;

impl Engine for ReferenceEngine {
    fn decompose(
        &self,
        modalities: &[Matrix],
        opts: &EngineOptions,
        init_h: Option<&Matrix>,
    ) -> Result<Decomposition> {
        decompose(modalities, opts, init_h)
    }
}

/// Noise-free model prediction `xw[k] * h`.
pub fn reconstruct(d: &Decomposition, k: usize) -> Result<Matrix> {
    let xw = d.xw.get(k).ok_or_else(|| {
        Error::InvalidArgument(format!("modality index {k} out of range ({})", d.xw.len()))
    })?;
    Ok(xw * &d.h)
}

fn validate(modalities: &[Matrix], opts: &EngineOptions, init_h: Option<&Matrix>) -> Result<usize> {
    let first = modalities
        .first()
        .ok_or_else(|| Error::InvalidArgument("no modalities".into()))?;
    let n = first.ncols();
    let l = opts.n_components;
    if l == 0 || opts.max_iters == 0 {
        return Err(Error::InvalidArgument(
            "n_components and max_iters must be positive".into(),
        ));
    }
    let mut voxels = 0;
    for (k, m) in modalities.iter().enumerate() {
        if m.ncols() != n {
            return Err(Error::Shape(format!(
                "modality {k} has {} subjects, expected {n}",
                m.ncols()
            )));
        }
        if !all_finite(m) {
            return Err(Error::NonFinite(format!("modality {k}")));
        }
        if m.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateModality(format!("{k}")));
        }
        voxels += m.nrows();
    }
    if l > n.min(voxels) {
        return Err(Error::RankBudget {
            requested: l,
            available: n.min(voxels),
        });
    }
    if let Some(h0) = init_h {
        if h0.shape() != (l, n) {
            return Err(Error::Shape(format!(
                "init_h is {}x{}, expected {l}x{n}",
                h0.nrows(),
                h0.ncols()
            )));
        }
        if !all_finite(h0) {
            return Err(Error::NonFinite("init_h".into()));
        }
        for r in 0..l {
            let row: Vec<f64> = h0.row(r).iter().copied().collect();
            if crate::stats::sd(&row) == 0.0 {
                return Err(Error::ZeroVariance(format!("init_h row {r}")));
            }
        }
    }
    Ok(n)
}

/// Groups of consecutive component indices with comparable energy.
fn energy_groups(eigenvalues: &[f64], ratio: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = vec![vec![0]];
    for i in 1..eigenvalues.len() {
        if eigenvalues[i - 1] / eigenvalues[i] <= ratio {
            groups.last_mut().unwrap().push(i);
        } else {
            groups.push(vec![i]);
        }
    }
    groups
}

/// Rotation from the principal basis towards `init_h`, restricted to the
/// energy groups. Returns the rotation and, per group, the rows it occupies.
fn warm_rotation(
    init_h: &Matrix,
    v: &Matrix,
    sigma: &[f64],
    groups: &[Vec<usize>],
) -> (Matrix, Vec<Vec<usize>>) {
    let l = sigma.len();
    // Coordinates of the init rows in the principal score basis.
    let proj = init_h * v;
    let mut rot = Matrix::zeros(l, l);
    let mut free: Vec<usize> = (0..l).collect();
    let mut rows_of = Vec::with_capacity(groups.len());
    for g in groups {
        let mut energy: Vec<(usize, f64)> = free
            .iter()
            .map(|&r| (r, g.iter().map(|&c| proj[(r, c)].powi(2)).sum()))
            .collect();
        energy.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut pick: Vec<usize> = energy[..g.len()].iter().map(|e| e.0).collect();
        pick.sort_unstable();
        let b = Matrix::from_fn(pick.len(), g.len(), |i, j| proj[(pick[i], g[j])] / sigma[g[j]]);
        let rc = polar_factor(&b);
        for (a, &r) in pick.iter().enumerate() {
            for (j, &c) in g.iter().enumerate() {
                rot[(r, c)] = rc[(a, j)];
            }
        }
        free.retain(|r| !pick.contains(r));
        rows_of.push(pick);
    }
    (rot, rows_of)
}

struct AngleTable {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl AngleTable {
    /// Index 0 is the identity; the rest alternate +step, -step, +2 step, ...
    fn new() -> Self {
        let (cos, sin) = (0..ANGLE_GRID).map(|i| {
            let t = Self::angle(i);
            (t.cos(), t.sin())
        })
        .unzip();
        AngleTable { cos, sin }
    }

    fn angle(i: usize) -> f64 {
        let step = std::f64::consts::FRAC_PI_2 / ANGLE_GRID as f64;
        let k = i.div_ceil(2) as f64;
        if i % 2 == 1 {
            k * step
        } else {
            -k * step
        }
    }
}

fn third_moment(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v * v).sum::<f64>() / x.len() as f64
}

/// Sum of absolute third moments of the map rows, scaled to voxel count.
fn contrast(maps: &[Vec<f64>]) -> f64 {
    maps.iter()
        .map(|m| third_moment(m).abs() * m.len() as f64)
        .sum()
}

/// Best rotation angle index for a pair of maps, or `None` to leave them.
fn best_pair_angle(x: &[f64], y: &[f64], angles: &AngleTable) -> Option<usize> {
    let (mut m30, mut m21, mut m12, mut m03) = (0.0, 0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        m30 += a * a * a;
        m21 += a * a * b;
        m12 += a * b * b;
        m03 += b * b * b;
    }
    let value = |k: usize| {
        let (c, s) = (angles.cos[k], angles.sin[k]);
        let a3 = c * c * c * m30 - 3.0 * c * c * s * m21 + 3.0 * c * s * s * m12 - s * s * s * m03;
        let b3 = s * s * s * m30 + 3.0 * s * s * c * m21 + 3.0 * s * c * c * m12 + c * c * c * m03;
        a3.abs() + b3.abs()
    };
    let base = value(0);
    let mut best = 0;
    let mut best_v = base;
    for k in 1..ANGLE_GRID {
        let v = value(k);
        if v > best_v {
            best = k;
            best_v = v;
        }
    }
    (best != 0 && best_v > base * (1.0 + 1e-12)).then_some(best)
}

/// Fit the linked model with the reference engine.
pub fn decompose(
    modalities: &[Matrix],
    opts: &EngineOptions,
    init_h: Option<&Matrix>,
) -> Result<Decomposition> {
    let n = validate(modalities, opts, init_h)?;
    let l = opts.n_components;

    // Voxel-balanced stack: each modality contributes equal total weight.
    let total: usize = modalities.iter().map(|m| m.nrows()).sum();
    let mut s = Matrix::zeros(total, n);
    let mut at = 0;
    for m in modalities {
        let w = 1.0 / (m.nrows() as f64).sqrt();
        s.view_mut((at, 0), m.shape()).copy_from(&(m * w));
        at += m.nrows();
    }

    let gram = s.tr_mul(&s);
    let (eigenvalues, eigenvectors) = sym_eigen_desc(&gram);
    let lead = eigenvalues[0];
    let available = eigenvalues
        .iter()
        .take_while(|&&e| lead > 0.0 && e > RANK_TOL * lead)
        .count();
    if available < l {
        return Err(Error::RankBudget {
            requested: l,
            available,
        });
    }
    let lambda = &eigenvalues[..l];
    let sigma: Vec<f64> = lambda.iter().map(|e| e.sqrt()).collect();
    let v = eigenvectors.columns(0, l).clone_owned();

    // Whitened maps: rows of sqrt(N) * U^T with U = S V / sigma.
    let root_n = (total as f64).sqrt();
    let mut scaled_v = v.clone();
    for (j, sj) in sigma.iter().enumerate() {
        scaled_v.column_mut(j).scale_mut(root_n / sj);
    }
    let m0 = (&s * scaled_v).transpose();

    let groups = energy_groups(lambda, opts.cluster_ratio);
    let (rot, rows_of) = match init_h {
        Some(h0) => warm_rotation(h0, &v, &sigma, &groups),
        None => (Matrix::identity(l, l), groups.clone()),
    };
    let m = rot * m0;
    let mut maps: Vec<Vec<f64>> = (0..l).map(|r| m.row(r).iter().copied().collect()).collect();

    let angles = AngleTable::new();
    let mut trace = vec![contrast(&maps)];
    for _ in 0..opts.max_iters {
        let mut changed = false;
        for rows in &rows_of {
            for a in 0..rows.len() {
                for b in a + 1..rows.len() {
                    let (i, j) = (rows[a], rows[b]);
                    if let Some(k) = best_pair_angle(&maps[i], &maps[j], &angles) {
                        let (c, sn) = (angles.cos[k], angles.sin[k]);
                        #[allow(clippy::needless_range_loop)]
                        for t in 0..total {
                            let (x, y) = (maps[i][t], maps[j][t]);
                            maps[i][t] = c * x - sn * y;
                            maps[j][t] = sn * x + c * y;
                        }
                        changed = true;
                    }
                }
            }
        }
        trace.push(contrast(&maps));
        if !changed {
            break;
        }
    }

    if init_h.is_none() {
        // Positive skew as the sign convention for cold starts; warm starts
        // keep the orientation of init_h so refits stay aligned.
        for map in maps.iter_mut() {
            if third_moment(map) < 0.0 {
                map.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }

    let mut rotated = Matrix::zeros(l, total);
    for (r, map) in maps.iter().enumerate() {
        if map.iter().any(|v| !v.is_finite()) {
            return Err(Error::EngineFailure(format!("map {r} is not finite")));
        }
        rotated.row_mut(r).copy_from_slice(map);
    }

    let mut h = (&rotated * &s) / total as f64;
    for r in 0..l {
        let row: Vec<f64> = h.row(r).iter().copied().collect();
        let sd = crate::stats::sd(&row);
        if !(sd.is_finite() && sd > 0.0) {
            return Err(Error::EngineFailure(format!("loading row {r} is degenerate")));
        }
        h.row_mut(r).scale_mut(1.0 / sd);
    }

    let h_pinv = pinv(&h);
    let mut xw = Vec::with_capacity(modalities.len());
    let mut weights = Vec::with_capacity(modalities.len());
    let mut noise_var = Vec::with_capacity(modalities.len());
    for y in modalities {
        let x = y * &h_pinv;
        let resid = y - &x * &h;
        noise_var.push(resid.norm_squared() / (y.nrows() * y.ncols()) as f64);
        weights.push(
            (0..l)
                .map(|c| (x.column(c).norm_squared() / x.nrows() as f64).sqrt())
                .collect(),
        );
        xw.push(x);
    }
    if xw.iter().any(|x| !all_finite(x)) {
        return Err(Error::EngineFailure("non-finite spatial maps".into()));
    }

    let df = match trace.as_slice() {
        [.., prev, last] => (last - prev).abs(),
        _ => 0.0,
    };
    Ok(Decomposition {
        xw,
        weights,
        h,
        noise_var,
        objective_trace: trace,
        converged: df < DF_TOL,
        n_components: l,
    })
}
