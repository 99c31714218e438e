//! Small dense linear-algebra helpers shared by the BSS and ICA stages.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Below this eigenvalue ratio a covariance is treated as rank-deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Rows of `rows` stacked into a channels × samples matrix.
pub fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j])
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn row_means(x: &DMatrix<f64>) -> Vec<f64> {
    let t = x.ncols().max(1) as f64;
    (0..x.nrows()).map(|i| x.row(i).sum() / t).collect()
}

pub fn subtract_row_means(x: &DMatrix<f64>, means: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - means[i])
}

/// Population covariance (divides by T) of already-centered rows.
pub fn covariance(centered: &DMatrix<f64>) -> DMatrix<f64> {
    let t = centered.ncols().max(1) as f64;
    let mut c = centered * centered.transpose() / t;
    symmetrize(&mut c);
    c
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Symmetric inverse square root `C^{-1/2}` and square root `C^{1/2}`.
pub fn sym_inv_sqrt(c: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::new(c.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio = if max > 0.0 { min / max } else { 0.0 };
    if !(ratio > RANK_TOLERANCE) {
        return Err(Error::RankDeficient { ratio });
    }
    let v = &eig.eigenvectors;
    let inv = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let mut inv_sqrt = v * inv * v.transpose();
    let mut root = v * sqrt * v.transpose();
    symmetrize(&mut inv_sqrt);
    symmetrize(&mut root);
    Ok((inv_sqrt, root))
}

/// 2-norm condition number via singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian
/// method with potentials). Returns `assignment[row] = column`.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment needs a square cost matrix");
    // 1-based arrays; index 0 is the virtual start column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a[..n].iter().zip(&b[..n]) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}
