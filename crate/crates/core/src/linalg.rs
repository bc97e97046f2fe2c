//! Dense least squares for the small systems met by the configuration solver.

use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] += v;
    }
}

/// Minimum-residual solution of `A x ~ b` (`rows >= cols`) by Householder QR.
///
/// Columns whose pivot falls below `rank_tol * max|R_ii|` are treated as
/// rank deficient and get a zero coefficient.
pub fn least_squares<S: Scalar>(a: &Matrix<S>, b: &[S], rank_tol: S) -> Vec<S> {
    assert!(a.rows >= a.cols && b.len() == a.rows);
    let (m, n) = (a.rows, a.cols);
    let mut r = a.clone();
    let mut rhs = b.to_vec();
    for j in 0..n {
        let col_norm = (j..m).map(|i| r.get(i, j) * r.get(i, j)).sum::<S>().sqrt();
        if col_norm == S::zero() {
            continue;
        }
        let alpha = if r.get(j, j) > S::zero() { -col_norm } else { col_norm };
        let mut v: Vec<S> = (j..m).map(|i| r.get(i, j)).collect();
        v[0] -= alpha;
        let vnorm2: S = v.iter().map(|&x| x * x).sum();
        if vnorm2 == S::zero() {
            continue;
        }
        for c in j..n {
            let dot: S = (j..m).map(|i| v[i - j] * r.get(i, c)).sum();
            let f = S::two() * dot / vnorm2;
            for i in j..m {
                r.add(i, c, -f * v[i - j]);
            }
        }
        let dot: S = (j..m).map(|i| v[i - j] * rhs[i]).sum();
        let f = S::two() * dot / vnorm2;
        for i in j..m {
            rhs[i] -= f * v[i - j];
        }
    }
    let max_diag = (0..n).map(|i| r.get(i, i).abs()).fold(S::zero(), S::max);
    let cutoff = rank_tol * max_diag;
    let mut x = vec![S::zero(); n];
    for i in (0..n).rev() {
        let d = r.get(i, i);
        if d.abs() <= cutoff {
            continue;
        }
        let s: S = (i + 1..n).map(|c| r.get(i, c) * x[c]).sum();
        x[i] = (rhs[i] - s) / d;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_square_system() {
        let mut a = Matrix::zeros(3, 3);
        let vals = [4.0, 1.0, 2.0, 1.0, 3.0, 0.0, 2.0, 0.0, 5.0];
        a.data.copy_from_slice(&vals);
        let x_true = [1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3)
            .map(|r| (0..3).map(|c| a.get(r, c) * x_true[c]).sum())
            .collect();
        let x = least_squares(&a, &b, 1e-14);
        for (xi, ti) in x.iter().zip(x_true) {
            assert!((xi - ti).abs() < 1e-14);
        }
    }

    #[test]
    fn overdetermined_line_fit() {
        // y = 2 + 3 t sampled exactly at four points.
        let ts = [0.0f64, 1.0, 2.0, 3.0];
        let mut a = Matrix::<f64>::zeros(4, 2);
        let mut b = vec![0.0; 4];
        for (i, t) in ts.iter().enumerate() {
            a.set(i, 0, 1.0);
            a.set(i, 1, *t);
            b[i] = 2.0 + 3.0 * t;
        }
        let x = least_squares(&a, &b, 1e-14);
        assert!((x[0] - 2.0).abs() < 1e-13 && (x[1] - 3.0).abs() < 1e-13);
    }

    #[test]
    fn rank_deficient_column_gets_zero() {
        let mut a = Matrix::zeros(3, 2);
        for i in 0..3 {
            a.set(i, 0, 1.0 + i as f64);
        }
        let x = least_squares(&a, &[1.0, 2.0, 3.0], 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert_eq!(x[1], 0.0);
    }
}
