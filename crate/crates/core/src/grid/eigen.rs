//! Principal eigenvalues of `L + diag(c)` by shifted inverse iteration with
//! Collatz–Wielandt brackets.

use serde::{Deserialize, Serialize};

use super::operator::DiscreteOperator;
use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Stop once the bracket width is below `rel_tol` times the eigenvalue magnitude.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            rel_tol: 1e-12,
            max_iter: 500,
        }
    }
}

const NEGLIGIBLE: f64 = 1e-30;

/// Principal eigenvalue with a rigorous (up to roundoff) bracket.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenEstimate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    /// Positive eigenvector on the unknowns, scaled to unit maximum.
    pub vector: Vec<f64>,
}

/// Smallest real eigenvalue of `L + diag(reaction)` (or of its adjoint with
/// respect to `Σ u_i v_i W_i` when `weights` is given).
///
/// The shift starts at the Gershgorin lower bound and follows the lower
/// Collatz–Wielandt bound, so `L + diag(reaction) - σ` stays an M-matrix and
/// its inverse stays positive.
pub fn principal_eigenvalue(
    op: &DiscreteOperator,
    reaction: &[f64],
    weights: Option<&[f64]>,
    opts: EigenOptions,
) -> Result<EigenEstimate> {
    let m = op.unknowns();
    assert_eq!(reaction.len(), m);
    let (lower, upper) = (op.lower(), op.upper());

    let mut diag_scale = 0.0f64;
    let mut sigma = f64::INFINITY;
    for i in 0..m {
        let off = if i + 1 == m { lower[i] } else { lower[i] + upper[i] };
        // Row i of L + diag(c): diag = c - lower - upper; Gershgorin disc left end.
        let left = reaction[i] - lower[i] - upper[i] + off;
        sigma = sigma.min(left);
        diag_scale = diag_scale.max((reaction[i] - lower[i] - upper[i]).abs());
    }
    let abs_floor = 1e-14 * diag_scale;

    let shifted = |s: f64| -> Vec<f64> { reaction.iter().map(|c| c - s).collect() };
    let mut fac = op.factor_shifted(&shifted(sigma))?;
    let mut x = vec![1.0; m];
    let mut y = vec![0.0; m];
    let mut best_lo = f64::NEG_INFINITY;
    let mut best_hi = f64::INFINITY;

    for it in 1..=opts.max_iter {
        match weights {
            None => {
                y.copy_from_slice(&x);
                fac.solve_in_place(&mut y);
            }
            Some(w) => {
                for i in 0..m {
                    y[i] = w[i] * x[i];
                }
                fac.solve_transpose_in_place(&mut y);
                for i in 0..m {
                    y[i] /= w[i];
                }
            }
        }
        let (mut rmin, mut rmax) = (f64::INFINITY, 0.0f64);
        for i in 0..m {
            // Components that have decayed away belong to a decoupled block
            // (the central stencil can zero a coupling next to the origin).
            if x[i] < NEGLIGIBLE {
                continue;
            }
            let ratio = y[i] / x[i];
            if ratio.is_finite() {
                rmin = rmin.min(ratio);
                rmax = rmax.max(ratio);
            }
        }
        if !(rmin > 0.0) || !rmax.is_finite() {
            return Err(Error::EigenIteration {
                iterations: it,
                width: f64::NAN,
            });
        }
        best_lo = best_lo.max(sigma + 1.0 / rmax);
        best_hi = best_hi.min(sigma + 1.0 / rmin);
        let width = best_hi - best_lo;
        let ymax = y.iter().fold(0.0f64, |a, &b| a.max(b));
        for i in 0..m {
            x[i] = y[i] / ymax;
        }
        if width <= opts.rel_tol * best_lo.abs().max(best_hi.abs()) || width <= abs_floor {
            return Ok(EigenEstimate {
                value: 0.5 * (best_lo + best_hi),
                lower: best_lo,
                upper: best_hi,
                iterations: it,
                vector: x,
            });
        }
        let next = best_lo - width;
        if next > sigma {
            sigma = next;
            fac = op.factor_shifted(&shifted(sigma))?;
        }
    }
    Err(Error::EigenIteration {
        iterations: opts.max_iter,
        width: best_hi - best_lo,
    })
}

/// Principal eigenvalue of `L` itself.
pub fn mu1(op: &DiscreteOperator) -> Result<f64> {
    principal_eigenvalue(op, &vec![0.0; op.unknowns()], None, EigenOptions::default()).map(|e| e.value)
}

/// Principal eigenvalue of the adjoint `W⁻¹ Lᵀ W` under the radial volume
/// weights; equal to [`mu1`] in exact arithmetic.
pub fn adjoint_mu1(op: &DiscreteOperator) -> Result<f64> {
    let w = op.volume_weights();
    principal_eigenvalue(op, &vec![0.0; op.unknowns()], Some(&w), EigenOptions::default()).map(|e| e.value)
}

/// `κ₁`, the principal eigenvalue of `L - λ f'(u)`; positive means linearly stable.
pub fn linearized_kappa1(op: &DiscreteOperator, nl: &Nonlinearity, lambda: f64, u: &[f64]) -> Result<f64> {
    let m = op.unknowns();
    let reaction: Vec<f64> = u[..m].iter().map(|&v| -lambda * nl.fprime_unchecked(v)).collect();
    if reaction.iter().any(|c| !c.is_finite()) {
        return Err(Error::domain("f'(u) is not finite on the branch point"));
    }
    principal_eigenvalue(op, &reaction, None, EigenOptions::default()).map(|e| e.value)
}

#[cfg(test)]
mod tests {
    use super::super::{assemble, RadialGrid, Stencil};
    use super::*;
    use crate::flow::FlowProfile;
    use crate::quadrature::bisect_sign;
    use approx::assert_relative_eq;

    /// Sturm-sequence count of eigenvalues below `x` for the symmetrized
    /// tridiagonal matrix (similar to `L + diag(c)` since `lower[i+1] upper[i] > 0`).
    fn sturm_count(op: &DiscreteOperator, reaction: &[f64], x: f64) -> usize {
        let (l, u) = (op.lower(), op.upper());
        let m = op.unknowns();
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..m {
            let d = reaction[i] - l[i] - u[i];
            let off2 = if i == 0 { 0.0 } else { l[i] * u[i - 1] };
            q = d - x - if i == 0 { 0.0 } else { off2 / q };
            if q == 0.0 {
                q = 1e-300;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn sturm_lowest(op: &DiscreteOperator, reaction: &[f64]) -> f64 {
        let hi = reaction.iter().zip(op.lower().iter().zip(op.upper())).map(|(c, (l, u))| c - 2.0 * l - 2.0 * u).fold(0.0, f64::max);
        let lo = reaction.iter().fold(0.0f64, |a, &b| a.min(b)) - 1.0;
        bisect_sign(|x| if sturm_count(op, reaction, x) >= 1 { 1.0 } else { -1.0 }, hi, lo, 1e-15).unwrap()
    }

    /// Radial shooting oracle for the first Dirichlet eigenvalue of `-Δ` on
    /// the unit ball: bisection on the sign of the RK4 solution at `r = 1`.
    fn shooting_mu1(n: usize, lo: f64, hi: f64) -> f64 {
        let end_value = |mu: f64| {
            // u'' = -(N-1)/r u' - mu u, started from the series u ≈ 1 - mu r²/(2N).
            let r0 = 1e-6;
            let mut y = [1.0 - mu * r0 * r0 / (2.0 * n as f64), -mu * r0 / n as f64];
            let steps = 20_000;
            let h = (1.0 - r0) / steps as f64;
            let rhs = |r: f64, y: [f64; 2]| [y[1], -(n as f64 - 1.0) / r * y[1] - mu * y[0]];
            let mut r = r0;
            for _ in 0..steps {
                let k1 = rhs(r, y);
                let k2 = rhs(r + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
                let k3 = rhs(r + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
                let k4 = rhs(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
                y[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
                y[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
                r += h;
            }
            y[0]
        };
        bisect_sign(end_value, lo, hi, 1e-12).unwrap()
    }

    #[test]
    fn shooting_oracle_values() {
        assert_relative_eq!(shooting_mu1(3, 5.0, 15.0), std::f64::consts::PI.powi(2), max_relative = 1e-9);
        assert_relative_eq!(shooting_mu1(2, 3.0, 10.0), 5.783_185_962_946_7, max_relative = 1e-9);
        assert_relative_eq!(shooting_mu1(10, 40.0, 70.0), 7.588_342_434_503_804f64.powi(2), max_relative = 1e-9);
    }

    #[test]
    fn laplacian_mu1_matches_continuum() {
        for (n, exact) in [
            (2usize, 5.783_185_962_946_7),
            (3, std::f64::consts::PI.powi(2)),
            (10, 7.588_342_434_503_804f64.powi(2)),
        ] {
            let grid = RadialGrid::new(n, 2048).unwrap();
            let op = assemble(&FlowProfile::constant(0.0), 0.0, &grid, Stencil::Flux).unwrap();
            let v = mu1(&op).unwrap();
            assert_relative_eq!(v, exact, max_relative = 1e-5);
        }
    }

    #[test]
    fn inverse_iteration_matches_sturm() {
        for (profile, a) in [
            (FlowProfile::constant(0.0), 0.0),
            (FlowProfile::InverseQuadratic, 3.0),
            (FlowProfile::constant(-4.0), 10.0),
            (FlowProfile::constant(1.0), 50.0),
        ] {
            for stencil in [Stencil::Flux, Stencil::Central] {
                let grid = RadialGrid::new(3, 256).unwrap();
                let op = assemble(&profile, a, &grid, stencil).unwrap();
                let zero = vec![0.0; 256];
                let sturm = sturm_lowest(&op, &zero);
                let inv = mu1(&op).unwrap();
                let adj = adjoint_mu1(&op).unwrap();
                // Sturm counts on the symmetrized matrix are only accurate to
                // roundoff in the largest diagonal entry.
                let scale = op.diag().iter().fold(0.0f64, |a, &b| a.max(b));
                assert!((inv - sturm).abs() <= 1e-9 * sturm.abs() + 1e-14 * scale, "{inv} vs {sturm}");
                assert_relative_eq!(adj, inv, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn tiny_principal_eigenvalue_keeps_relative_accuracy() {
        let grid = RadialGrid::new(2, 1024).unwrap();
        let op = assemble(&FlowProfile::constant(-4.0), 100.0, &grid, Stencil::Flux).unwrap();
        let v = mu1(&op).unwrap();
        let adj = adjoint_mu1(&op).unwrap();
        assert!(v > 0.0 && v < 1e-60, "{v:e}");
        assert_relative_eq!(adj, v, max_relative = 1e-8);
    }

    #[test]
    fn scaling_and_shift() {
        let grid = RadialGrid::new(3, 128).unwrap();
        let op = assemble(&FlowProfile::InverseQuadratic, 1.0, &grid, Stencil::Flux).unwrap();
        let base = mu1(&op).unwrap();
        let shifted = principal_eigenvalue(&op, &vec![-3.0; 128], None, EigenOptions::default()).unwrap();
        assert_relative_eq!(shifted.value, base - 3.0, max_relative = 1e-10);
        assert!(shifted.lower <= shifted.value && shifted.value <= shifted.upper);
        assert!(shifted.vector.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn kappa1_sign_at_zero_state() {
        let grid = RadialGrid::new(2, 256).unwrap();
        let op = assemble(&FlowProfile::constant(0.0), 0.0, &grid, Stencil::Flux).unwrap();
        let nl = Nonlinearity::exponential();
        let mu = mu1(&op).unwrap();
        let zero = vec![0.0; 257];
        let small = linearized_kappa1(&op, &nl, 1e-8, &zero).unwrap();
        assert_relative_eq!(small, mu, max_relative = 1e-7);
        assert!(linearized_kappa1(&op, &nl, mu + 1.0, &zero).unwrap() < 0.0);
    }
}
