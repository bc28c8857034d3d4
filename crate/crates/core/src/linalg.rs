//! Householder QR least squares that processes columns in their given order
//! and drops a column when it is (numerically) spanned by the earlier ones.

/// Relative pivot tolerance below which a column counts as aliased.
pub const ALIAS_TOL: f64 = 1e-10;

/// Column-major dense matrix, just enough for least squares.
#[derive(Debug, Clone)]
pub struct ColMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub data: Vec<f64>,
}

impl ColMatrix {
    pub fn from_columns(nrows: usize, columns: &[&[f64]]) -> Self {
        let mut data = Vec::with_capacity(nrows * columns.len());
        for c in columns {
            debug_assert_eq!(c.len(), nrows);
            data.extend_from_slice(c);
        }
        ColMatrix {
            nrows,
            ncols: columns.len(),
            data,
        }
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.nrows..(j + 1) * self.nrows]
    }
}

/// Result of an in-order QR least-squares solve.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    /// Indices of retained columns, ascending.
    pub kept: Vec<usize>,
    /// Coefficients for the retained columns (same order as `kept`).
    pub coef: Vec<f64>,
    /// Upper-triangular R (kept x kept), row-major.
    pub r: Vec<f64>,
    pub rss: f64,
}

impl LeastSquares {
    pub fn rank(&self) -> usize {
        self.kept.len()
    }

    /// (R^T R)^{-1}, row-major, computed from R^{-1} without forming R^T R.
    pub fn unscaled_covariance(&self) -> Vec<f64> {
        let k = self.rank();
        // R^{-1} by back substitution, column by column
        let mut rinv = vec![0.0; k * k];
        for col in 0..k {
            for i in (0..=col).rev() {
                let mut s = if i == col { 1.0 } else { 0.0 };
                for j in i + 1..=col {
                    s -= self.r[i * k + j] * rinv[j * k + col];
                }
                rinv[i * k + col] = s / self.r[i * k + i];
            }
        }
        let mut cov = vec![0.0; k * k];
        for i in 0..k {
            for j in i..k {
                let mut s = 0.0;
                for l in j..k {
                    s += rinv[i * k + l] * rinv[j * k + l];
                }
                cov[i * k + j] = s;
                cov[j * k + i] = s;
            }
        }
        cov
    }
}

/// Solve min ||y - X b|| restricted to columns not flagged in `skip`.
///
/// When `detect` is true, a column whose residual norm after projection on the
/// retained columns falls below `ALIAS_TOL` times its original norm is dropped.
pub fn least_squares(x: &ColMatrix, y: &[f64], skip: &[bool], detect: bool) -> LeastSquares {
    let n = x.nrows;
    let mut a = x.clone();
    let mut qty = y.to_vec();
    let mut kept = Vec::with_capacity(x.ncols);
    let mut diag = Vec::with_capacity(x.ncols);
    let mut rank = 0;
    let mut v = vec![0.0; n];

    for j in 0..x.ncols {
        if skip.get(j).copied().unwrap_or(false) || rank >= n {
            continue;
        }
        let orig_norm = norm(x.col(j));
        let col = a.col(j);
        let sub_norm = norm(&col[rank..]);
        if orig_norm == 0.0 || !sub_norm.is_finite() || (detect && sub_norm <= ALIAS_TOL * orig_norm) {
            continue;
        }
        // Householder vector for col[rank..]
        let alpha = if col[rank] > 0.0 { -sub_norm } else { sub_norm };
        for i in 0..n {
            v[i] = if i < rank { 0.0 } else { col[i] };
        }
        v[rank] -= alpha;
        let vnorm2: f64 = v[rank..].iter().map(|t| t * t).sum();
        if vnorm2 > 0.0 {
            for jj in j + 1..x.ncols {
                apply_reflector(&v[rank..], vnorm2, &mut a.col_mut(jj)[rank..]);
            }
            apply_reflector(&v[rank..], vnorm2, &mut qty[rank..]);
        }
        let c = a.col_mut(j);
        c[rank] = alpha;
        for t in c[rank + 1..].iter_mut() {
            *t = 0.0;
        }
        diag.push(alpha);
        kept.push(j);
        rank += 1;
    }

    let k = kept.len();
    let mut r = vec![0.0; k * k];
    for (ci, &j) in kept.iter().enumerate() {
        let col = a.col(j);
        for ri in 0..=ci {
            r[ri * k + ci] = col[ri];
        }
    }
    let mut coef = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = qty[i];
        for jj in i + 1..k {
            s -= r[i * k + jj] * coef[jj];
        }
        coef[i] = s / r[i * k + i];
    }
    let rss = qty[k..].iter().map(|t| t * t).sum();
    LeastSquares { kept, coef, r, rss }
}

fn apply_reflector(v: &[f64], vnorm2: f64, target: &mut [f64]) {
    let dot: f64 = v.iter().zip(target.iter()).map(|(a, b)| a * b).sum();
    let f = 2.0 * dot / vnorm2;
    for (t, vi) in target.iter_mut().zip(v) {
        *t -= f * vi;
    }
}

fn norm(x: &[f64]) -> f64 {
    // scaled to avoid overflow on large FP columns
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * x.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_solution_recovered() {
        let ones = vec![1.0; 5];
        let x1 = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x1.iter().map(|v| 1.0 + 2.0 * v).collect();
        let m = ColMatrix::from_columns(5, &[&ones, &x1]);
        let ls = least_squares(&m, &y, &[], true);
        assert_eq!(ls.kept, vec![0, 1]);
        assert_abs_diff_eq!(ls.coef[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ls.coef[1], 2.0, epsilon = 1e-12);
        assert!(ls.rss < 1e-20);
    }

    #[test]
    fn later_collinear_column_dropped() {
        let ones = vec![1.0; 4];
        let x1 = vec![1.0, 2.0, 4.0, 7.0];
        let x2: Vec<f64> = x1.iter().map(|v| 3.0 * v - 1.0).collect();
        let x3 = vec![0.5, -1.0, 2.0, 0.0];
        let y = vec![1.0, 0.0, 3.0, 2.0];
        let m = ColMatrix::from_columns(4, &[&ones, &x1, &x2, &x3]);
        let ls = least_squares(&m, &y, &[], true);
        assert_eq!(ls.kept, vec![0, 1, 3]);
    }

    #[test]
    fn covariance_is_inverse_gram() {
        let c0 = vec![1.0; 6];
        let c1 = vec![0.3, 1.2, -0.7, 2.0, 0.1, -1.5];
        let c2 = vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let m = ColMatrix::from_columns(6, &[&c0, &c1, &c2]);
        let ls = least_squares(&m, &[0.0; 6], &[], true);
        let cov = ls.unscaled_covariance();
        let cols = [&c0, &c1, &c2];
        // (X^T X) * cov == I
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for l in 0..3 {
                    let g: f64 = cols[i].iter().zip(cols[l].iter()).map(|(a, b)| a * b).sum();
                    s += g * cov[l * 3 + j];
                }
                assert_abs_diff_eq!(s, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-10);
            }
        }
    }
}
