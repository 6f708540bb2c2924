//! Dense LU factorization with partial pivoting for the small (L x L)
//! interaction matrix. Team counts are tiny, so no blocking or external
//! BLAS is warranted.

use crate::scalar::Scalar;

/// LU factors of a square matrix, stored packed with the pivot permutation.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Vec<Vec<T>>,
    perm: Vec<usize>,
    n: usize,
}

impl<T: Scalar> Lu<T> {
    /// Factor `a` as P*A = L*U. Returns `None` when a pivot is exactly zero
    /// (structurally singular matrix).
    pub fn factor(a: &[Vec<T>]) -> Option<Self> {
        let n = a.len();
        let mut lu: Vec<Vec<T>> = a.iter().map(|r| r.clone()).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let mut pivot_row = col;
            let mut pivot_mag = lu[col][col].abs();
            for row in col + 1..n {
                let mag = lu[row][col].abs();
                if mag > pivot_mag {
                    pivot_mag = mag;
                    pivot_row = row;
                }
            }
            if pivot_mag == T::zero() || !pivot_mag.is_finite() {
                return None;
            }
            lu.swap(col, pivot_row);
            perm.swap(col, pivot_row);
            let pivot = lu[col][col];
            for row in col + 1..n {
                let factor = lu[row][col] / pivot;
                lu[row][col] = factor;
                for k in col + 1..n {
                    let upper = lu[col][k];
                    lu[row][k] = lu[row][k] - factor * upper;
                }
            }
        }
        Some(Lu { lu, perm, n })
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        debug_assert_eq!(b.len(), self.n);
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        // forward substitution (unit lower triangle)
        for i in 0..self.n {
            for k in 0..i {
                let l = self.lu[i][k];
                let xk = x[k];
                x[i] = x[i] - l * xk;
            }
        }
        // back substitution
        for i in (0..self.n).rev() {
            for k in i + 1..self.n {
                let u = self.lu[i][k];
                let xk = x[k];
                x[i] = x[i] - u * xk;
            }
            x[i] = x[i] / self.lu[i][i];
        }
        x
    }

    /// Dense inverse, column by column.
    pub fn inverse(&self) -> Vec<Vec<T>> {
        let n = self.n;
        let mut inv = vec![vec![T::zero(); n]; n];
        let mut e = vec![T::zero(); n];
        for col in 0..n {
            e[col] = T::one();
            let x = self.solve(&e);
            for row in 0..n {
                inv[row][col] = x[row];
            }
            e[col] = T::zero();
        }
        inv
    }
}

/// Maximum absolute column sum.
pub fn one_norm<T: Scalar>(a: &[Vec<T>]) -> T {
    let n = a.len();
    let mut best = T::zero();
    for col in 0..n {
        let mut sum = T::zero();
        for row in a.iter() {
            sum = sum + row[col].abs();
        }
        best = best.max(sum);
    }
    best
}

/// 1-norm condition number estimate `||A||_1 * ||A^-1||_1`, or `None` when
/// the matrix is exactly singular.
pub fn condition_estimate<T: Scalar>(a: &[Vec<T>]) -> Option<T> {
    let lu = Lu::factor(a)?;
    let inv = lu.inverse();
    let cond = one_norm(a) * one_norm(&inv);
    if cond.is_finite() {
        Some(cond)
    } else {
        None
    }
}

/// y = M x for a dense square matrix.
pub fn mat_vec<T: Scalar>(m: &[Vec<T>], x: &[T]) -> Vec<T> {
    m.iter()
        .map(|row| row.iter().zip(x).map(|(&a, &b)| a * b).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn inverse_of_known_matrix() {
        // [[3,2],[2,3]]^-1 = 1/5 [[3,-2],[-2,3]]
        let a = vec![vec![3.0, 2.0], vec![2.0, 3.0]];
        let inv = Lu::factor(&a).unwrap().inverse();
        assert!(approx(inv[0][0], 0.6, 1e-14));
        assert!(approx(inv[0][1], -0.4, 1e-14));
        assert!(approx(inv[1][0], -0.4, 1e-14));
        assert!(approx(inv[1][1], 0.6, 1e-14));
    }

    #[test]
    fn solve_matches_inverse_on_random_systems() {
        let mut state = 0x1234_5678_u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..20 {
            let n = 4;
            let mut a = vec![vec![0.0; n]; n];
            for (i, row) in a.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = next() + if i == j { 4.0 } else { 0.0 };
                }
            }
            let lu = Lu::factor(&a).unwrap();
            let inv = lu.inverse();
            // A * A^-1 ~ I
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += a[i][k] * inv[k][j];
                    }
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!(approx(s, expect, 1e-12), "A*inv mismatch at ({i},{j}): {s}");
                }
            }
            let b: Vec<f64> = (0..n).map(|_| next()).collect();
            let x = lu.solve(&b);
            for i in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += a[i][k] * x[k];
                }
                assert!(approx(s, b[i], 1e-12));
            }
        }
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert!(Lu::<f64>::factor(&a).is_none());
    }

    #[test]
    fn condition_estimate_identity_is_small() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let c = condition_estimate(&a).unwrap();
        assert!(approx(c, 1.0, 1e-15));
    }

    #[test]
    fn condition_estimate_blows_up_near_singularity() {
        let a = vec![vec![1.0, 1.0], vec![1.0, 1.0 + 1e-14]];
        let c = condition_estimate(&a).unwrap();
        assert!(c > 1e12);
    }
}
