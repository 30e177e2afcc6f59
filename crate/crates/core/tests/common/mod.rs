#![allow(dead_code, clippy::needless_range_loop)]

use filica_core::lica::Decomposition;
use filica_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Plain Pearson correlation written out longhand.
pub fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for i in 0..a.len() {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma).powi(2);
        db += (b[i] - mb).powi(2);
    }
    num / (da * db).sqrt()
}

pub fn row(m: &Matrix, r: usize) -> Vec<f64> {
    m.row(r).iter().copied().collect()
}

pub fn col(m: &Matrix, c: usize) -> Vec<f64> {
    m.column(c).iter().copied().collect()
}

/// Best |corr| of each row of `truth` against any row of `est`.
pub fn best_row_corr(est: &Matrix, truth: &Matrix) -> Vec<f64> {
    (0..truth.nrows())
        .map(|t| {
            (0..est.nrows())
                .map(|e| corr(&row(est, e), &row(truth, t)).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Solve a small dense system by Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &v)| {
        let mut r = r.clone();
        r.push(v);
        r
    }).collect();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs())).unwrap();
        m.swap(k, p);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            for j in k..=n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[k][j] * x[j]).sum();
        x[k] = (m[k][n] - s) / m[k][k];
    }
    x
}

pub fn random_decomposition(seed: u64, voxels: &[usize], l: usize, n: usize) -> Decomposition {
    let mut g = rng(seed);
    let xw: Vec<Matrix> = voxels.iter().map(|&v| randn(&mut g, v, l)).collect();
    let h = randn(&mut g, l, n) * 3.0;
    Decomposition {
        weights: xw
            .iter()
            .map(|x| (0..l).map(|c| (x.column(c).norm_squared() / x.nrows() as f64).sqrt()).collect())
            .collect(),
        xw,
        h,
        noise_var: vec![1.0; voxels.len()],
        objective_trace: vec![0.0],
        converged: true,
        n_components: l,
    }
}
