//! Finite-difference assembly of the radial operator
//! `L_A u = -u'' - ((N-1)/r + A r ρ(r)) u'` on `r_i = i h`.

use serde::{Deserialize, Serialize};

use super::tridiag::Factorization;
use super::RadialGrid;
use crate::error::{Error, Result};
use crate::flow::FlowProfile;

/// Interior stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stencil {
    /// Conservative form `-(w u')'/w` with `w = r^{N-1} g^A`, evaluated at
    /// half nodes. Always an M-matrix.
    #[default]
    Flux,
    /// Central differences, upwinded row by row where the mesh Péclet number
    /// breaks the M-matrix sign pattern.
    Central,
}

/// Tridiagonal discretization of `L_A` on the unknowns `u_0, …, u_{M-1}`; the
/// Dirichlet value `u_M = 0` is eliminated.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    grid: RadialGrid,
    amplitude: f64,
    stencil: Stencil,
    /// Coefficient on `u_{i-1}` in row `i` (`lower[0] = 0`).
    lower: Vec<f64>,
    /// Coefficient on `u_{i+1}` in row `i`; `upper[M-1]` couples to the boundary.
    upper: Vec<f64>,
    upwinded_rows: usize,
}

/// Assemble `L_A` for `profile` on `grid`.
pub fn assemble(profile: &FlowProfile, amplitude: f64, grid: &RadialGrid, stencil: Stencil) -> Result<DiscreteOperator> {
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::config("A", format!("amplitude must be finite and >= 0, got {amplitude}")));
    }
    let m = grid.cells();
    let n = grid.dim();
    let h = grid.h();
    let inv_h2 = 1.0 / (h * h);
    let mut lower = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut upwinded_rows = 0;

    // Δu(0) = N u''(0) ≈ 2N (u_1 - u_0) / h².
    upper[0] = -2.0 * n as f64 * inv_h2;

    match stencil {
        Stencil::Flux => {
            let pow = (n - 1) as i32;
            for i in 1..m {
                let r = grid.node(i);
                let lg = profile.ln_g(r);
                let (rm, rp) = (r - 0.5 * h, r + 0.5 * h);
                let ratio_m = (rm / r).powi(pow) * (amplitude * (profile.ln_g(rm) - lg)).exp();
                let ratio_p = (rp / r).powi(pow) * (amplitude * (profile.ln_g(rp) - lg)).exp();
                lower[i] = -ratio_m * inv_h2;
                upper[i] = -ratio_p * inv_h2;
            }
        }
        Stencil::Central => {
            for i in 1..m {
                let r = grid.node(i);
                let b = (n - 1) as f64 / r + amplitude * r * profile.rho(r);
                let (mut lo, mut up) = (inv_h2 - 0.5 * b / h, inv_h2 + 0.5 * b / h);
                if lo < 0.0 || up < 0.0 {
                    upwinded_rows += 1;
                    if b > 0.0 {
                        lo = inv_h2;
                        up = inv_h2 + b / h;
                    } else {
                        lo = inv_h2 - b / h;
                        up = inv_h2;
                    }
                }
                lower[i] = -lo;
                upper[i] = -up;
            }
        }
    }

    for (i, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
        if !l.is_finite() || !u.is_finite() || l > 0.0 || u > 0.0 {
            return Err(Error::Mesh(format!(
                "row {i} has coefficients ({l}, {u}) outside the M-matrix sign pattern"
            )));
        }
    }
    if upwinded_rows > 0 {
        log::debug!("central stencil upwinded {upwinded_rows} of {m} rows");
    }

    Ok(DiscreteOperator {
        grid: *grid,
        amplitude,
        stencil,
        lower,
        upper,
        upwinded_rows,
    })
}

impl DiscreteOperator {
    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn stencil(&self) -> Stencil {
        self.stencil
    }

    /// Number of unknowns `M`.
    pub fn unknowns(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Diagonal; every row of `L` sums to zero when the boundary column is included.
    pub fn diag(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| -l - u).collect()
    }

    /// Rows switched to one-sided differences by the central stencil.
    pub fn upwinded_rows(&self) -> usize {
        self.upwinded_rows
    }

    /// `L u` at rows `0..M`, for a grid function of length `M + 1`. The last
    /// entry is the Dirichlet row `u_M`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let m = self.unknowns();
        assert_eq!(u.len(), m + 1, "grid function must have M + 1 entries");
        let mut out = vec![0.0; m + 1];
        for i in 0..m {
            let left = if i == 0 { 0.0 } else { self.lower[i] * (u[i - 1] - u[i]) };
            out[i] = left + self.upper[i] * (u[i + 1] - u[i]);
        }
        out[m] = u[m];
        out
    }

    /// Factor `L + diag(reaction)` on the unknowns.
    pub fn factor_shifted(&self, reaction: &[f64]) -> Result<Factorization> {
        Factorization::new(&self.lower, &self.upper, reaction)
    }

    pub fn factor(&self) -> Result<Factorization> {
        self.factor_shifted(&vec![0.0; self.unknowns()])
    }

    /// Solve `L u = rhs` with `u(1) = 0`; `rhs[M]` is ignored.
    pub fn solve_linear(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let m = self.unknowns();
        assert_eq!(rhs.len(), m + 1, "grid function must have M + 1 entries");
        let f = self.factor()?;
        let mut u = rhs.to_vec();
        f.solve_in_place(&mut u[..m]);
        u[m] = 0.0;
        Ok(u)
    }

    /// Discrete radial volume weights `|B(r_i)|`-style: `r_i^{N-1} h` with
    /// `(h/2)^N / N` at the origin.
    pub fn volume_weights(&self) -> Vec<f64> {
        let h = self.grid.h();
        let n = self.grid.dim();
        (0..self.unknowns())
            .map(|i| {
                if i == 0 {
                    (0.5 * h).powi(n as i32) / n as f64
                } else {
                    self.grid.node(i).powi(n as i32 - 1) * h
                }
            })
            .collect()
    }
}
