//! Tridiagonal elimination for `T + diag(c)` where `T` has zero row sums.
//!
//! Storing the row sums `c` instead of the diagonal lets the elimination run
//! without cancellation whenever `T` has nonpositive off-diagonals and
//! `c ≥ 0` (the Grassmann–Taksar–Heyman trick): every pivot is then a sum of
//! nonnegative terms. A positive pivot sequence is equivalent to the matrix
//! being a nonsingular M-matrix.

use crate::error::{Error, Result};

/// LU factors of a tridiagonal matrix given as (sub, super, row-sum).
#[derive(Debug, Clone)]
pub struct Factorization {
    lower: Vec<f64>,
    upper: Vec<f64>,
    pivots: Vec<f64>,
}

impl Factorization {
    /// Factor the `n × n` matrix with sub-diagonal `lower[1..]`, super-diagonal
    /// `upper[..n-1]` and full row sums `rowsum`. `upper[n-1]` is the coupling
    /// to an eliminated Dirichlet unknown and enters only the row sum.
    pub fn new(lower: &[f64], upper: &[f64], rowsum: &[f64]) -> Result<Self> {
        let n = rowsum.len();
        assert!(lower.len() == n && upper.len() == n, "band lengths must match");
        let mut pivots = vec![0.0; n];
        let mut s_prev = 0.0;
        let mut p_prev = 1.0;
        for i in 0..n {
            let s = if i == 0 {
                rowsum[0]
            } else {
                rowsum[i] - lower[i] * (s_prev / p_prev)
            };
            let p = s - upper[i];
            if p == 0.0 || !p.is_finite() {
                return Err(Error::SingularMatrix { row: i });
            }
            pivots[i] = p;
            s_prev = s;
            p_prev = p;
        }
        Ok(Factorization {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            pivots,
        })
    }

    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }

    /// `true` when every pivot is positive, i.e. the matrix is a nonsingular M-matrix.
    pub fn is_m_matrix(&self) -> bool {
        self.pivots.iter().all(|&p| p > 0.0)
    }

    pub fn len(&self) -> usize {
        self.pivots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivots.is_empty()
    }

    /// Solve `A x = rhs` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(x.len(), n);
        x[0] /= self.pivots[0];
        for i in 1..n {
            x[i] = (x[i] - self.lower[i] * x[i - 1]) / self.pivots[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.upper[i] / self.pivots[i] * x[i + 1];
        }
    }

    /// Solve `Aᵀ x = rhs` in place, reusing the same pivots.
    pub fn solve_transpose_in_place(&self, x: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(x.len(), n);
        // Uᵀ z = b, U = bidiag(p, upper).
        x[0] /= self.pivots[0];
        for i in 1..n {
            x[i] = (x[i] - self.upper[i - 1] * x[i - 1]) / self.pivots[i];
        }
        // Lᵀ x = z, L unit lower with multipliers lower[i] / p[i-1].
        for i in (0..n - 1).rev() {
            x[i] -= self.lower[i + 1] / self.pivots[i] * x[i + 1];
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
