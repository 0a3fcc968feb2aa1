//! Dense real linear algebra: row-major matrices and LU factorization.
//!
//! The systems solved here are small (tens to a few hundred unknowns), so a
//! dense factorization with partial pivoting is both fast enough and exactly
//! reproducible across runs.

use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    /// Zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds a matrix from rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self {
            rows: r,
            cols: c,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Resets every entry to zero, keeping the allocation.
    pub fn fill_zero(&mut self) {
        self.data.fill(T::zero());
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Matrix-vector product.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols, "dimension mismatch");
        (0..self.rows)
            .map(|i| {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                row.iter().zip(x).map(|(&a, &b)| a * b).sum()
            })
            .collect()
    }

    /// Row slice access.
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

impl<T> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// The factored matrix was singular to working precision.
#[derive(Debug, Clone, thiserror::Error)]
#[error("matrix is singular at elimination column {column}")]
pub struct SingularMatrix {
    pub column: usize,
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Mat<T>,
    pivots: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    /// Factors a square matrix, consuming it.
    pub fn factor(mut a: Mat<T>) -> Result<Self, SingularMatrix> {
        assert_eq!(a.rows, a.cols, "LU requires a square matrix");
        let n = a.rows;
        let mut pivots = Vec::with_capacity(n);
        for k in 0..n {
            let mut p = k;
            let mut best = a[(k, k)].abs();
            for i in k + 1..n {
                let v = a[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == T::zero() || !best.is_finite() {
                return Err(SingularMatrix { column: k });
            }
            pivots.push(p);
            if p != k {
                for j in 0..n {
                    let tmp = a[(k, j)];
                    a[(k, j)] = a[(p, j)];
                    a[(p, j)] = tmp;
                }
            }
            let inv = T::one() / a[(k, k)];
            for i in k + 1..n {
                let factor = a[(i, k)] * inv;
                a[(i, k)] = factor;
                if factor != T::zero() {
                    let (upper, lower) = a.data.split_at_mut(i * n);
                    let row_k = &upper[k * n..k * n + n];
                    let row_i = &mut lower[..n];
                    for j in k + 1..n {
                        row_i[j] -= factor * row_k[j];
                    }
                }
            }
        }
        Ok(Self { lu: a, pivots })
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.lu.rows;
        assert_eq!(b.len(), n, "dimension mismatch");
        for k in 0..n {
            b.swap(k, self.pivots[k]);
        }
        // Forward substitution L y = P b (unit lower triangular).
        for i in 1..n {
            let row = self.lu.row(i);
            let mut acc = b[i];
            for (j, &lij) in row.iter().enumerate().take(i) {
                acc -= lij * b[j];
            }
            b[i] = acc;
        }
        // Back substitution U x = y.
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let mut acc = b[i];
            for (j, &uij) in row.iter().enumerate().skip(i + 1) {
                acc -= uij * b[j];
            }
            b[i] = acc / row[i];
        }
    }

    /// Solves `A x = b`, returning a fresh vector.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solves_small_system() {
        let a = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let lu = Lu::factor(a).unwrap();
        let x = lu.solve(&[5.0, 10.0]);
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let a = Mat::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let lu = Lu::factor(a).unwrap();
        let x = lu.solve(&[2.0, 3.0]);
        assert_relative_eq!(x[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        let err = Lu::factor(a).unwrap_err();
        assert_eq!(err.column, 1);
    }

    #[test]
    fn random_system_roundtrips() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 25;
        let mut a = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = rng.gen_range(-1.0..1.0);
            }
            a[(i, i)] += 4.0;
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64) - 10.0).collect();
        let b = a.matvec(&x_true);
        let lu = Lu::factor(a).unwrap();
        let x = lu.solve(&b);
        for (xi, ti) in x.iter().zip(&x_true) {
            assert_relative_eq!(xi, ti, epsilon = 1e-9);
        }
    }

    #[test]
    fn matvec_matches_by_hand() {
        let a = Mat::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        assert_eq!(a.matvec(&[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
    }
}
