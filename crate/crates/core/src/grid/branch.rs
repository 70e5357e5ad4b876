//! Minimal solutions of `L u = λ f(u)`, `u(1) = 0`: the monotone (Picard)
//! iteration from `u ≡ 0`, and a Newton existence test used for bisection.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::eigen::linearized_kappa1;
use super::operator::DiscreteOperator;
use crate::error::Result;
use crate::nonlinearity::Nonlinearity;

static SOLVES: AtomicU64 = AtomicU64::new(0);
static ITERATES: AtomicU64 = AtomicU64::new(0);
static MONOTONE_VIOLATIONS: AtomicU64 = AtomicU64::new(0);
static DOMINATED_ITERATES: AtomicU64 = AtomicU64::new(0);
static DOMINATION_VIOLATIONS: AtomicU64 = AtomicU64::new(0);

/// Process-wide tallies of the invariant checks made by [`minimal_solution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InvariantCounters {
    pub solves: u64,
    pub iterates: u64,
    pub monotone_violations: u64,
    pub dominated_iterates: u64,
    pub domination_violations: u64,
}

pub fn invariant_counters() -> InvariantCounters {
    InvariantCounters {
        solves: SOLVES.load(Ordering::Relaxed),
        iterates: ITERATES.load(Ordering::Relaxed),
        monotone_violations: MONOTONE_VIOLATIONS.load(Ordering::Relaxed),
        dominated_iterates: DOMINATED_ITERATES.load(Ordering::Relaxed),
        domination_violations: DOMINATION_VIOLATIONS.load(Ordering::Relaxed),
    }
}

/// Iterates may not exceed this when `f` is singular at `a_f`.
pub const SINGULAR_ITERATE_CAP: f64 = 1e-9;

const MONOTONE_SLACK: f64 = 1e-13;
const DOMINATION_REL_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Sup-norm increment at which the iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Consecutive steps with increment ratio above `stall_ratio` that count as a stall.
    pub stall_window: usize,
    pub stall_ratio: f64,
    pub compute_kappa1: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: 100_000,
            stall_window: 500,
            stall_ratio: 0.999,
            compute_kappa1: true,
        }
    }
}

/// A converged minimal solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub lambda: f64,
    /// Nodal values on `r_0..=r_M`, with `u[M] = 0`.
    pub u: Vec<f64>,
    pub iterations: usize,
    /// `‖L u - λ f(u)‖∞` over the unknowns.
    pub residual: f64,
    /// `‖L⁻¹(λ f(u)) - u‖∞`, the residual in the norm the iteration controls.
    pub fixed_point_residual: f64,
    pub kappa1: f64,
    pub converged: bool,
    pub monotone_violations: u64,
    pub domination_violations: u64,
    /// Whether the super-solution bound `u ≤ α̂ ψ_h` applied at this `λ`.
    pub domination_checked: bool,
}

impl BranchPoint {
    pub fn u_max(&self) -> f64 {
        self.u.iter().fold(0.0, |a: f64, &b| a.max(b))
    }

    /// Assemble diagnostics for an already converged `u`.
    pub fn from_solution(
        op: &DiscreteOperator,
        nl: &Nonlinearity,
        lambda: f64,
        u: Vec<f64>,
        iterations: usize,
        compute_kappa1: bool,
    ) -> Result<Self> {
        let m = op.unknowns();
        let lu = op.apply(&u);
        let mut rhs: Vec<f64> = u.iter().map(|&v| lambda * nl.f_unchecked(v)).collect();
        rhs[m] = 0.0;
        let residual = (0..m).map(|i| (lu[i] - rhs[i]).abs()).fold(0.0, f64::max);
        let next = op.solve_linear(&rhs)?;
        let fixed_point_residual = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let kappa1 = if compute_kappa1 {
            linearized_kappa1(op, nl, lambda, &u).unwrap_or_else(|e| {
                log::warn!("kappa1 unavailable at lambda={lambda}: {e}");
                f64::NAN
            })
        } else {
            f64::NAN
        };
        Ok(BranchPoint {
            lambda,
            u,
            iterations,
            residual,
            fixed_point_residual,
            kappa1,
            converged: true,
            monotone_violations: 0,
            domination_violations: 0,
            domination_checked: false,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceReason {
    /// `‖u‖∞` passed the divergence ceiling of a regular nonlinearity.
    ExceededCeiling,
    /// An iterate reached `a_f - cap` for a singular nonlinearity.
    SingularGuard,
    /// Increments stopped shrinking.
    Stalled,
    MaxIterations,
    NonFinite,
    /// The linearization lost its M-matrix property (Newton only).
    Unstable,
    /// Newton iterates decreased by more than roundoff (Newton only).
    NonMonotone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoConvergence {
    pub lambda: f64,
    pub reason: DivergenceReason,
    pub iterations: usize,
    pub last_increment: f64,
    pub u_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveOutcome {
    Converged(BranchPoint),
    NoConvergence(NoConvergence),
}

impl SolveOutcome {
    pub fn converged(&self) -> Option<&BranchPoint> {
        match self {
            SolveOutcome::Converged(bp) => Some(bp),
            SolveOutcome::NoConvergence(_) => None,
        }
    }

    pub fn is_converged(&self) -> bool {
        matches!(self, SolveOutcome::Converged(_))
    }
}

/// Largest admissible iterate for the monotone iteration.
fn picard_ceiling(nl: &Nonlinearity) -> f64 {
    if nl.is_singular() {
        nl.a_f() - SINGULAR_ITERATE_CAP
    } else if nl.f_total().is_finite() {
        nl.primitive_inv(0.999_999 * nl.f_total())
    } else {
        1e6
    }
}

/// Largest admissible iterate for the Newton existence test.
fn newton_ceiling(nl: &Nonlinearity) -> f64 {
    if nl.is_singular() {
        nl.a_f() - SINGULAR_ITERATE_CAP
    } else {
        nl.primitive_inv((1.0 - 1e-12) * nl.f_total())
    }
}

fn overflow_reason(nl: &Nonlinearity) -> DivergenceReason {
    if nl.is_singular() {
        DivergenceReason::SingularGuard
    } else {
        DivergenceReason::ExceededCeiling
    }
}

/// Discrete torsion `ψ_h = L⁻¹ 1`.
pub fn discrete_torsion(op: &DiscreteOperator) -> Result<Vec<f64>> {
    op.solve_linear(&vec![1.0; op.unknowns() + 1])
}

/// Monotone iteration `u_{n+1} = L⁻¹ λ f(u_n)` from `u_0 = 0`.
///
/// Every iterate is checked for monotonicity, and for `λ ≤ sup(t/f)/ψ_h,max`
/// against the super-solution `α̂ ψ_h` with `α̂ ψ_h,max = t̂`; violations are
/// recorded on the branch point and in [`invariant_counters`].
pub fn minimal_solution(op: &DiscreteOperator, nl: &Nonlinearity, lambda: f64, opts: SolveOptions) -> Result<SolveOutcome> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(crate::Error::domain(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let m = op.unknowns();
    let fac = op.factor()?;
    let ceiling = picard_ceiling(nl);

    let psi_h = discrete_torsion(op)?;
    let sup = nl.sup_ratio();
    let dominated = lambda <= sup.value / psi_h[0];
    let alpha_hat = sup.argmax / psi_h[0];

    SOLVES.fetch_add(1, Ordering::Relaxed);
    let mut u = vec![0.0; m + 1];
    let mut next = vec![0.0; m + 1];
    let mut prev_inc = f64::INFINITY;
    let mut stall = 0;
    let mut mono = 0u64;
    let mut dom = 0u64;
    let mut last_inc = f64::NAN;

    let fail = |reason, iterations, last_increment, u: &[f64]| {
        Ok(SolveOutcome::NoConvergence(NoConvergence {
            lambda,
            reason,
            iterations,
            last_increment,
            u_max: u.iter().fold(0.0, |a: f64, &b| a.max(b)),
        }))
    };

    for it in 1..=opts.max_iter {
        for i in 0..m {
            next[i] = lambda * nl.f_unchecked(u[i]);
        }
        fac.solve_in_place(&mut next[..m]);
        next[m] = 0.0;
        ITERATES.fetch_add(1, Ordering::Relaxed);

        if next.iter().any(|v| !v.is_finite()) {
            return fail(DivergenceReason::NonFinite, it, last_inc, &u);
        }
        let mut inc = 0.0f64;
        let mut step_mono = false;
        let mut step_dom = false;
        let mut top = 0.0f64;
        for i in 0..m {
            let d = next[i] - u[i];
            inc = inc.max(d.abs());
            top = top.max(next[i]);
            if d < -MONOTONE_SLACK {
                step_mono = true;
            }
            if dominated && next[i] > alpha_hat * psi_h[i] * (1.0 + DOMINATION_REL_SLACK) {
                step_dom = true;
            }
        }
        if step_mono {
            mono += 1;
            MONOTONE_VIOLATIONS.fetch_add(1, Ordering::Relaxed);
        }
        if dominated {
            DOMINATED_ITERATES.fetch_add(1, Ordering::Relaxed);
            if step_dom {
                dom += 1;
                DOMINATION_VIOLATIONS.fetch_add(1, Ordering::Relaxed);
            }
        }
        if top > ceiling {
            return fail(overflow_reason(nl), it, inc, &next);
        }
        std::mem::swap(&mut u, &mut next);
        last_inc = inc;

        if inc <= opts.tol {
            let mut bp = BranchPoint::from_solution(op, nl, lambda, u, it, opts.compute_kappa1)?;
            bp.monotone_violations = mono;
            bp.domination_violations = dom;
            bp.domination_checked = dominated;
            return Ok(SolveOutcome::Converged(bp));
        }
        if inc > opts.stall_ratio * prev_inc {
            stall += 1;
            if stall >= opts.stall_window {
                return fail(DivergenceReason::Stalled, it, inc, &u);
            }
        } else {
            stall = 0;
        }
        prev_inc = inc;
    }
    fail(DivergenceReason::MaxIterations, opts.max_iter, last_inc, &u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Converged once the update is below `conv_tol · (1 + ‖u‖∞)`.
    pub conv_tol: f64,
    /// Non-monotone updates smaller than `noise_tol · (1 + ‖u‖∞)` count as roundoff.
    pub noise_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iter: 200,
            conv_tol: 1e-13,
            noise_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NewtonOutcome {
    Exists { u: Vec<f64>, iterations: usize },
    Fails { reason: DivergenceReason, iterations: usize },
}

impl NewtonOutcome {
    pub fn exists(&self) -> bool {
        matches!(self, NewtonOutcome::Exists { .. })
    }
}

/// Newton's method from `u = 0` with the monotone form
/// `(L - λ f'(u)) u_new = λ (f(u) - f'(u) u)`.
///
/// For convex `f` the iterates increase to the minimal solution while the
/// Jacobian stays a nonsingular M-matrix, which is exactly the discrete
/// stability of the branch. Failure of either certifies nonexistence at grid
/// resolution, up to the noise floor near the fold.
pub fn newton_existence(op: &DiscreteOperator, nl: &Nonlinearity, lambda: f64, opts: NewtonOptions) -> Result<NewtonOutcome> {
    let m = op.unknowns();
    let ceiling = newton_ceiling(nl);
    let mut u = vec![0.0; m + 1];
    let mut reaction = vec![0.0; m];
    let mut next = vec![0.0; m + 1];
    for it in 1..=opts.max_iter {
        for i in 0..m {
            let f = nl.f_unchecked(u[i]);
            let fp = nl.fprime_unchecked(u[i]);
            reaction[i] = -lambda * fp;
            next[i] = lambda * (f - fp * u[i]);
        }
        let fac = match op.factor_shifted(&reaction) {
            Ok(f) if f.is_m_matrix() => f,
            _ => {
                return Ok(NewtonOutcome::Fails {
                    reason: DivergenceReason::Unstable,
                    iterations: it,
                })
            }
        };
        fac.solve_in_place(&mut next[..m]);
        next[m] = 0.0;
        if next.iter().any(|v| !v.is_finite()) {
            return Ok(NewtonOutcome::Fails {
                reason: DivergenceReason::NonFinite,
                iterations: it,
            });
        }
        let (mut dmax, mut dmin, mut top) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..m {
            let d = next[i] - u[i];
            dmax = dmax.max(d.abs());
            dmin = dmin.min(d);
            top = top.max(next[i]);
        }
        if top > ceiling {
            return Ok(NewtonOutcome::Fails {
                reason: overflow_reason(nl),
                iterations: it,
            });
        }
        std::mem::swap(&mut u, &mut next);
        let scale = 1.0 + top;
        if dmax <= opts.conv_tol * scale {
            return Ok(NewtonOutcome::Exists { u, iterations: it });
        }
        if dmin < -0.5 * dmax {
            return Ok(if dmax <= opts.noise_tol * scale {
                NewtonOutcome::Exists { u, iterations: it }
            } else {
                NewtonOutcome::Fails {
                    reason: DivergenceReason::NonMonotone,
                    iterations: it,
                }
            });
        }
    }
    Ok(NewtonOutcome::Fails {
        reason: DivergenceReason::MaxIterations,
        iterations: opts.max_iter,
    })
}
