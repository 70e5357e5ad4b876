//! Uniform radial grids, the discrete operator, branch solvers and principal
//! eigenvalues.

mod branch;
mod eigen;
mod operator;
mod tridiag;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use branch::{
    discrete_torsion, invariant_counters, minimal_solution, newton_existence, BranchPoint, DivergenceReason,
    InvariantCounters, NewtonOptions, NewtonOutcome, NoConvergence, SolveOptions, SolveOutcome,
};
pub use eigen::{adjoint_mu1, linearized_kappa1, mu1, principal_eigenvalue, EigenEstimate, EigenOptions};
pub use operator::{assemble, DiscreteOperator, Stencil};
pub use tridiag::Factorization;

/// Uniform grid `r_i = i/M`, `i = 0..=M`, for the radial problem in dimension `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RadialGrid {
    dim: usize,
    cells: usize,
}

impl RadialGrid {
    pub fn new(dim: usize, cells: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::config("N", format!("dimension must be >= 2, got {dim}")));
        }
        if cells < 16 {
            return Err(Error::Mesh(format!("grid needs M >= 16 cells, got {cells}")));
        }
        Ok(RadialGrid { dim, cells })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of cells `M`.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.cells as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.cells).map(|i| self.node(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        for m in [16usize, 100, 1000, 4096, 12345] {
            let g = RadialGrid::new(2, m).unwrap();
            let nodes = g.nodes();
            assert_eq!(nodes[0], 0.0);
            assert_eq!(nodes[m], 1.0);
            assert!((g.h() * m as f64 - 1.0).abs() <= f64::EPSILON);
        }
        assert!(RadialGrid::new(1, 64).is_err());
        assert!(matches!(RadialGrid::new(2, 8), Err(Error::Mesh(_))));
    }
}
