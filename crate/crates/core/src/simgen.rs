//! Simulated two-modality replicates with known ground truth.
//!
//! Three settings share the spatial design (two components, template blocks
//! on voxels 1-100 and 101-200 plus unit Gaussian noise) and differ in how
//! the loadings and missingness are generated:
//!
//! * `mcar`: Gaussian loadings, subjects removed completely at random.
//! * `mar_continuous`: loadings correlated with two Gaussian covariates that
//!   drive a logistic missingness score.
//! * `mar_mixed`: as above but the second covariate is binary and shifts the
//!   second loading.
//!
//! Every replicate draws from ChaCha8 streams keyed by `(seed, setting)`, so
//! a replicate is identical whatever order or thread it is generated on, and
//! the data of a replicate do not depend on the missing percentage.

use crate::matrixio::MaskedModality;
use crate::{Error, Matrix, Result};
use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const N_SUBJECTS: usize = 100;
pub const VOXELS: [usize; 2] = [1000, 3000];
pub const N_TRUE: usize = 2;
pub const BLOCK: usize = 100;
pub const ALLOWED_PCTS: [f64; 4] = [0.0, 0.05, 0.10, 0.20];

/// True correlation of C1 with the first loading (settings 2 and 3).
pub const C1_TRUTH: f64 = 0.5;
/// True correlation of C2 with the second loading (setting 2).
pub const C2_CORR_TRUTH: f64 = 0.3;
/// Nominal Cohen's d of the second loading between C2 groups (setting 3).
pub const C2_COHENS_D_TRUTH: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Mcar,
    MarContinuous,
    MarMixed,
}

impl Setting {
    pub const ALL: [Setting; 3] = [Setting::Mcar, Setting::MarContinuous, Setting::MarMixed];

    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Mcar => "mcar",
            Setting::MarContinuous => "mar_continuous",
            Setting::MarMixed => "mar_mixed",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Setting::Mcar => 1,
            Setting::MarContinuous => 2,
            Setting::MarMixed => 3,
        }
    }

    pub fn has_covariates(self) -> bool {
        self != Setting::Mcar
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Setting::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown setting {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub setting: Setting,
    pub missing_pct: f64,
    pub seed: u64,
    pub xw_true: Vec<Matrix>,
    pub h_true: Matrix,
    /// Empty in the MCAR setting.
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub missing_assign: Vec<Vec<usize>>,
}

impl SimTruth {
    pub fn stacked_xw(&self) -> Matrix {
        let parts: Vec<&Matrix> = self.xw_true.iter().collect();
        crate::linalg::vstack(&parts)
    }
}

#[derive(Debug, Clone)]
pub struct SimReplicate {
    pub truth: SimTruth,
    /// Data with the missing subjects blanked.
    pub masked: Vec<MaskedModality>,
    /// The same data before masking, for the oracle.
    pub full: Vec<MaskedModality>,
}

/// Seed of replicate `i` in a run with `base_seed` (SplitMix64 finaliser).
pub fn replicate_seed(base_seed: u64, replicate: usize) -> u64 {
    let mut z = base_seed ^ (replicate as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Template maps plus `noise_scale` times standard normal noise.
pub fn spatial_maps_with_noise(n_voxels: usize, noise_scale: f64, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    if n_voxels < 2 * BLOCK {
        return Err(Error::InvalidArgument(format!(
            "need at least {} voxels, got {n_voxels}",
            2 * BLOCK
        )));
    }
    let mut x = Matrix::zeros(n_voxels, N_TRUE);
    for c in 0..N_TRUE {
        for i in 0..n_voxels {
            let template = if i / BLOCK == c { 1.0 } else { 0.0 };
            x[(i, c)] = template + noise_scale * normal(rng);
        }
    }
    Ok(x)
}

pub fn gen_spatial_maps(n_voxels: usize, seed: u64) -> Result<Matrix> {
    spatial_maps_with_noise(n_voxels, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn logistic_missing_prob(c1: f64, c2: f64) -> f64 {
    1.0 / (1.0 + (0.6 - 0.5 * c1 - 1.2 * c2).exp())
}

fn standardize_rows(h: &mut Matrix) {
    for r in 0..h.nrows() {
        let row: Vec<f64> = h.row(r).iter().copied().collect();
        let m = crate::stats::mean(&row);
        let s = crate::stats::sd(&row);
        for v in h.row_mut(r).iter_mut() {
            *v = (*v - m) / s;
        }
    }
}

fn missing_count(missing_pct: f64) -> Result<usize> {
    if !ALLOWED_PCTS.iter().any(|p| (p - missing_pct).abs() < 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "missing_pct must be one of {ALLOWED_PCTS:?}, got {missing_pct}"
        )));
    }
    Ok((missing_pct * N_SUBJECTS as f64).round() as usize)
}

/// Rank subjects by missingness probability and deal the top `2 * count`
/// alternately to modality 1 and modality 2.
pub fn assign_by_rank(prob: &[f64], count: usize) -> Result<Vec<Vec<usize>>> {
    if 2 * count > prob.len() {
        return Err(Error::InvalidArgument(format!(
            "{} subjects cannot supply {count} missing per modality",
            prob.len()
        )));
    }
    let mut order: Vec<usize> = (0..prob.len()).collect();
    order.sort_by(|&a, &b| prob[b].total_cmp(&prob[a]).then(a.cmp(&b)));
    let mut out = vec![Vec::with_capacity(count), Vec::with_capacity(count)];
    for (rank, &j) in order[..2 * count].iter().enumerate() {
        out[rank % 2].push(j);
    }
    out.iter_mut().for_each(|v| v.sort_unstable());
    Ok(out)
}

/// Generate one replicate of `setting` with `missing_pct` of subjects
/// missing from each modality (disjointly).
pub fn gen_replicate(setting: Setting, missing_pct: f64, seed: u64) -> Result<SimReplicate> {
    let count = missing_count(missing_pct)?;
    let n = N_SUBJECTS;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(setting.stream());

    let xw_true = VOXELS
        .iter()
        .map(|&nv| spatial_maps_with_noise(nv, 1.0, &mut rng))
        .collect::<Result<Vec<_>>>()?;

    let mut h = Matrix::zeros(N_TRUE, n);
    let (mut c1, mut c2) = (Vec::new(), Vec::new());
    match setting {
        Setting::Mcar => {
            for j in 0..n {
                for r in 0..N_TRUE {
                    h[(r, j)] = normal(&mut rng);
                }
            }
        }
        Setting::MarContinuous => {
            // (C1, C2, H1, H2) jointly normal.
            #[rustfmt::skip]
            let corr = Matrix4::new(
                1.0, 0.0, C1_TRUTH, 0.0,
                0.0, 1.0, 0.0, C2_CORR_TRUTH,
                C1_TRUTH, 0.0, 1.0, 0.0,
                0.0, C2_CORR_TRUTH, 0.0, 1.0,
            );
            let chol = corr.cholesky().expect("correlation matrix is positive definite").l();
            for j in 0..n {
                let z = nalgebra::Vector4::from_fn(|_, _| normal(&mut rng));
                let v = chol * z;
                c1.push(v[0]);
                c2.push(v[1]);
                h[(0, j)] = v[2];
                h[(1, j)] = v[3];
            }
            standardize_rows(&mut h);
        }
        Setting::MarMixed => {
            let rho = C1_TRUTH;
            let tail = (1.0 - rho * rho).sqrt();
            for j in 0..n {
                let z1 = normal(&mut rng);
                let z2 = normal(&mut rng);
                let group = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
                let e = normal(&mut rng);
                c1.push(z1);
                c2.push(group);
                h[(0, j)] = rho * z1 + tail * z2;
                h[(1, j)] = 0.5 * group + e;
            }
            standardize_rows(&mut h);
        }
    }

    let mut full = Vec::with_capacity(VOXELS.len());
    for (k, x) in xw_true.iter().enumerate() {
        let mut y = x * &h;
        for i in 0..y.nrows() {
            for j in 0..n {
                y[(i, j)] += normal(&mut rng);
            }
        }
        full.push(MaskedModality {
            name: format!("modality_{}", k + 1),
            values: y,
            observed: vec![true; n],
        });
    }

    let missing_assign = match setting {
        Setting::Mcar => {
            let mut mrng = ChaCha8Rng::seed_from_u64(seed);
            mrng.set_stream(100 + setting.stream());
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut mrng);
            let mut a = perm[..count].to_vec();
            let mut b = perm[count..2 * count].to_vec();
            a.sort_unstable();
            b.sort_unstable();
            vec![a, b]
        }
        _ => {
            let prob: Vec<f64> = c1.iter().zip(&c2).map(|(&a, &b)| logistic_missing_prob(a, b)).collect();
            assign_by_rank(&prob, count)?
        }
    };

    let masked = full
        .iter()
        .zip(&missing_assign)
        .map(|(m, miss)| MaskedModality::with_missing(m.name.clone(), m.values.clone(), miss))
        .collect();

    Ok(SimReplicate {
        truth: SimTruth {
            setting,
            missing_pct,
            seed,
            xw_true,
            h_true: h,
            c1,
            c2,
            missing_assign,
        },
        masked,
        full,
    })
}
