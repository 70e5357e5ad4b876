//! Bisection for the extremal parameter `λ*` and the closed-form bounds that
//! sandwich it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{beta_of_alpha, torsion, FlowProfile, TorsionProfile};
use crate::grid::{
    assemble, discrete_torsion, newton_existence, principal_eigenvalue, BranchPoint, DiscreteOperator,
    DivergenceReason, EigenOptions, NewtonOptions, NewtonOutcome, RadialGrid, Stencil,
};
use crate::nonlinearity::Nonlinearity;
use crate::quadrature::{bisect_sign, golden_section_max};

/// Slack allowed in the sandwich inequalities, relative to the larger side.
pub const SANDWICH_SLACK: f64 = 1e-6;

/// Absolute slack of the pointwise inequalities.
pub const POINTWISE_SLACK: f64 = 1e-8;

/// Smallest admissible α grid size for [`bounds_report`].
pub const MIN_ALPHA_POINTS: usize = 64;

/// A fully specified radial problem `L_A u = λ f(u)` on a grid.
#[derive(Debug, Clone)]
pub struct ProblemSetup {
    pub profile: FlowProfile,
    pub amplitude: f64,
    pub dim: usize,
    pub nl: Nonlinearity,
    pub cells: usize,
    pub stencil: Stencil,
}

impl ProblemSetup {
    pub fn new(profile: FlowProfile, amplitude: f64, dim: usize, nl: Nonlinearity, cells: usize) -> Self {
        ProblemSetup {
            profile,
            amplitude,
            dim,
            nl,
            cells,
            stencil: Stencil::default(),
        }
    }

    pub fn with_cells(&self, cells: usize) -> Self {
        ProblemSetup { cells, ..self.clone() }
    }

    pub fn grid(&self) -> Result<RadialGrid> {
        RadialGrid::new(self.dim, self.cells)
    }

    pub fn operator(&self) -> Result<DiscreteOperator> {
        assemble(&self.profile, self.amplitude, &self.grid()?, self.stencil)
    }

    /// Quadrature torsion on the setup's grid nodes.
    pub fn torsion(&self) -> Result<TorsionProfile> {
        torsion(&self.profile, self.amplitude, self.dim, self.cells)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Sup-norm increment that ends the monotone iteration.
    pub iteration: f64,
    /// Width of the final `λ*` bracket.
    pub bisection: f64,
    /// Relative bracket width for principal eigenvalues.
    pub eigen: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            iteration: 1e-10,
            bisection: 1e-10,
            eigen: 1e-12,
        }
    }
}

/// Bracket `[lo, hi]` on the discrete extremal parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaStar {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
    /// Minimal solution at `lo`.
    pub witness: BranchPoint,
    /// Why no solution was found at `hi`.
    pub certificate: DivergenceReason,
    /// `max ψ_h` of the discrete operator used for the initial bracket.
    pub psi_h_max: f64,
}

impl LambdaStar {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Bisection on `λ` with the Newton existence test, from the bracket
/// `[sup(t/f)/ψ_h,max, F(a_f)/ψ_h,max]`.
///
/// Both ends of that bracket are exact for the discrete problem: `α̂ ψ_h` is a
/// discrete super-solution at the left end, and concavity of `F` gives
/// `F(u) ≥ λ ψ_h` node by node, which rules out the right end.
pub fn lambda_star_bisect(op: &DiscreteOperator, nl: &Nonlinearity, tol: f64) -> Result<LambdaStar> {
    if !(tol > 0.0) {
        return Err(Error::config("tol_bisect", format!("must be > 0, got {tol}")));
    }
    let psi_h = discrete_torsion(op)?;
    let psi_h_max = psi_h[0];
    let newton = NewtonOptions::default();
    let probe = |lambda: f64| newton_existence(op, nl, lambda, newton);

    let mut lo = nl.sup_ratio().value / psi_h_max;
    let mut hi = nl.f_total() / psi_h_max;
    let (mut u_lo, mut it_lo) = match probe(lo)? {
        NewtonOutcome::Exists { u, iterations } => (u, iterations),
        NewtonOutcome::Fails { reason, .. } => {
            return Err(Error::Bracket(format!(
                "no solution at the lower end lambda = {lo} ({reason:?})"
            )))
        }
    };
    let mut certificate = match probe(hi)? {
        NewtonOutcome::Fails { reason, .. } => reason,
        NewtonOutcome::Exists { .. } => {
            return Err(Error::Bracket(format!("a solution exists at the upper end lambda = {hi}")))
        }
    };

    let floor = 4.0 * f64::EPSILON * hi;
    let mut steps = 0;
    while hi - lo > tol.max(floor) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        steps += 1;
        match probe(mid)? {
            NewtonOutcome::Exists { u, iterations } => {
                lo = mid;
                u_lo = u;
                it_lo = iterations;
            }
            NewtonOutcome::Fails { reason, .. } => {
                hi = mid;
                certificate = reason;
            }
        }
    }
    let witness = BranchPoint::from_solution(op, nl, lo, u_lo, it_lo, true)?;
    Ok(LambdaStar {
        lo,
        hi,
        steps,
        witness,
        certificate,
        psi_h_max,
    })
}

/// `α − α² β(α)`, the lower bound produced by the super-solution `F⁻¹(α ψ)`.
pub fn alpha_bound(tp: &TorsionProfile, nl: &Nonlinearity, alpha: f64) -> Result<f64> {
    Ok(alpha - alpha * alpha * beta_of_alpha(tp, nl, alpha)?)
}

/// Largest `α − α² β(α)` over `[lo, hi]`: a log-uniform scan of `points`
/// values followed by golden-section refinement around the best one.
/// Returns `(value, argmax)`.
pub fn lower_alpha_on(tp: &TorsionProfile, nl: &Nonlinearity, lo: f64, hi: f64, points: usize) -> Result<(f64, f64)> {
    if !(lo > 0.0 && hi > lo) || points < 2 {
        return Err(Error::domain(format!("invalid alpha range [{lo}, {hi}] with {points} points")));
    }
    let ratio = hi / lo;
    let alphas: Vec<f64> = (0..points)
        .map(|k| {
            if k + 1 == points {
                hi
            } else {
                lo * ratio.powf(k as f64 / (points - 1) as f64)
            }
        })
        .collect();
    let values = alphas
        .par_iter()
        .map(|&a| alpha_bound(tp, nl, a))
        .collect::<Result<Vec<f64>>>()?;
    let (k, &best) = values
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .expect("at least two points");
    let a_lo = alphas[k.saturating_sub(1)];
    let a_hi = alphas[(k + 1).min(points - 1)];
    let (a_ref, v_ref) = golden_section_max(
        |a| alpha_bound(tp, nl, a).unwrap_or(f64::NEG_INFINITY),
        a_lo,
        a_hi,
        1e-12 * a_hi,
    );
    Ok(if v_ref > best { (v_ref, a_ref) } else { (best, alphas[k]) })
}

/// Full admissible α range `(0, F(a_f)/ψ_max)`, trimmed at both ends.
pub fn alpha_range(tp: &TorsionProfile, nl: &Nonlinearity) -> (f64, f64) {
    let alpha_max = nl.f_total() / tp.psi_max;
    (1e-6 * alpha_max, alpha_max * (1.0 - 1e-9))
}

/// All four bounds on `λ*` together with the bisection bracket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub lower_basic: f64,
    pub lower_alpha: f64,
    pub alpha_hat: f64,
    #[serde(rename = "upper_F")]
    pub upper_f: f64,
    pub upper_mu1: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub sandwich_ok: bool,
    /// Number of grid cells `M`.
    pub grid: usize,
    pub dim: usize,
    pub amplitude: f64,
    pub profile: String,
    pub nonlinearity: String,
    pub stencil: Stencil,
    pub psi_max: f64,
    pub psi_h_max: f64,
    pub sup_ratio: f64,
    pub sup_argmax: f64,
    pub f_total: f64,
    pub mu1: f64,
    /// Richardson estimate of the discretization error in `mu1`.
    pub mu1_bias: f64,
    pub kappa1_at_lo: f64,
    pub bisection_steps: usize,
    pub certificate: DivergenceReason,
    /// Smallest relative slack among the sandwich inequalities.
    pub sandwich_slack: f64,
}

impl BoundsReport {
    /// `max(lower_basic, lower_alpha)`.
    pub fn best_lower(&self) -> f64 {
        self.lower_basic.max(self.lower_alpha)
    }

    /// `min(upper_F, upper_mu1)`.
    pub fn best_upper(&self) -> f64 {
        self.upper_f.min(self.upper_mu1)
    }
}

fn relative_slack(small: f64, large: f64) -> f64 {
    (large - small) / small.abs().max(large.abs())
}

fn adjoint_mu1_with(op: &DiscreteOperator, rel_tol: f64) -> Result<f64> {
    let opts = EigenOptions {
        rel_tol,
        ..EigenOptions::default()
    };
    let w = op.volume_weights();
    principal_eigenvalue(op, &vec![0.0; op.unknowns()], Some(&w), opts).map(|e| e.value)
}

/// Evaluate every bound and bisect for `λ*` on the setup grid.
pub fn bounds_report(setup: &ProblemSetup, tol: &Tolerances, alpha_points: usize) -> Result<BoundsReport> {
    if alpha_points < MIN_ALPHA_POINTS {
        return Err(Error::config(
            "alpha_points",
            format!("need at least {MIN_ALPHA_POINTS}, got {alpha_points}"),
        ));
    }
    let nl = &setup.nl;
    let tp = setup.torsion()?;
    let op = setup.operator()?;
    let sup = nl.sup_ratio();

    let lower_basic = sup.value / tp.psi_max;
    let upper_f = nl.f_total() / tp.psi_max;
    let (a_lo, a_hi) = alpha_range(&tp, nl);
    let (lower_alpha, alpha_hat) = lower_alpha_on(&tp, nl, a_lo, a_hi, alpha_points)?;

    let mu1 = adjoint_mu1_with(&op, tol.eigen)?;
    let coarse = setup.with_cells(setup.cells / 2).operator()?;
    let mu1_bias = (mu1 - adjoint_mu1_with(&coarse, tol.eigen)?) / 3.0;
    let upper_mu1 = mu1 * sup.value;

    let star = lambda_star_bisect(&op, nl, tol.bisection)?;

    let slacks = [
        relative_slack(lower_basic, star.lo),
        relative_slack(lower_alpha, star.lo),
        relative_slack(star.lo, star.hi),
        relative_slack(star.hi, upper_f),
        relative_slack(star.hi, upper_mu1),
        relative_slack(lower_basic, upper_f),
    ];
    let sandwich_slack = slacks.iter().copied().fold(f64::INFINITY, f64::min);
    let sandwich_ok = sandwich_slack >= -SANDWICH_SLACK;
    if !sandwich_ok {
        log::warn!("sandwich violated for {} / {}: slacks {slacks:?}", setup.profile, nl);
    }

    Ok(BoundsReport {
        lower_basic,
        lower_alpha,
        alpha_hat,
        upper_f,
        upper_mu1,
        lambda_lo: star.lo,
        lambda_hi: star.hi,
        sandwich_ok,
        grid: setup.cells,
        dim: setup.dim,
        amplitude: setup.amplitude,
        profile: setup.profile.to_string(),
        nonlinearity: nl.to_string(),
        stencil: setup.stencil,
        psi_max: tp.psi_max,
        psi_h_max: star.psi_h_max,
        sup_ratio: sup.value,
        sup_argmax: sup.argmax,
        f_total: nl.f_total(),
        mu1,
        mu1_bias,
        kappa1_at_lo: star.witness.kappa1,
        bisection_steps: star.steps,
        certificate: star.certificate,
        sandwich_slack,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointwiseCheck {
    /// `F⁻¹(λ ψ) ≤ u`.
    TorsionLower,
    /// `u ≤ F⁻¹(α ψ)` for the α with `λ = α − α² β(α)`.
    AlphaEnvelope,
    /// `max u ≤ F⁻¹((λ/λ*) F(a_f))`.
    ExtremalCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseVerdict {
    pub check: PointwiseCheck,
    /// `false` when the inequality does not apply at this `λ`.
    pub applicable: bool,
    pub passed: bool,
    /// Node with the smallest margin.
    pub worst_node: usize,
    pub worst_r: f64,
    /// Smallest `bound − value` over the nodes.
    pub margin: f64,
    pub alpha: Option<f64>,
}

/// Smallest α in `(0, α̂]` with `α − α² β(α) = λ`, if `λ` is below the
/// α-sweep maximum.
pub fn envelope_alpha(tp: &TorsionProfile, nl: &Nonlinearity, lambda: f64) -> Result<Option<f64>> {
    let (lo, hi) = alpha_range(tp, nl);
    let (best, alpha_hat) = lower_alpha_on(tp, nl, lo, hi, 256)?;
    if lambda > best {
        return Ok(None);
    }
    let g = |a: f64| alpha_bound(tp, nl, a).map(|v| v - lambda).unwrap_or(f64::NAN);
    if g(alpha_hat) <= 0.0 {
        return Ok(Some(alpha_hat));
    }
    Ok(bisect_sign(g, lo.min(0.5 * lambda), alpha_hat, 1e-14 * alpha_hat))
}

/// Node-by-node check of the three pointwise inequalities for a branch point.
pub fn verify_pointwise(
    bp: &BranchPoint,
    tp: &TorsionProfile,
    nl: &Nonlinearity,
    lambda_star_hi: f64,
) -> Result<Vec<PointwiseVerdict>> {
    if bp.u.len() != tp.psi.len() {
        return Err(Error::domain(format!(
            "branch point has {} nodes but the torsion profile has {}",
            bp.u.len(),
            tp.psi.len()
        )));
    }
    let lambda = bp.lambda;
    let worst = |check, alpha, margins: Vec<f64>| {
        let (k, &margin) = margins
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .expect("nonempty grid");
        PointwiseVerdict {
            check,
            applicable: true,
            passed: margin >= -POINTWISE_SLACK,
            worst_node: k,
            worst_r: tp.nodes[k],
            margin,
            alpha,
        }
    };

    let lower: Vec<f64> = bp
        .u
        .iter()
        .zip(&tp.psi)
        .map(|(&u, &p)| u - nl.primitive_inv((lambda * p).min(nl.f_total())))
        .collect();
    let mut out = vec![worst(PointwiseCheck::TorsionLower, None, lower)];

    match envelope_alpha(tp, nl, lambda)? {
        Some(alpha) => {
            let env: Vec<f64> = bp
                .u
                .iter()
                .zip(&tp.psi)
                .map(|(&u, &p)| nl.primitive_inv(alpha * p) - u)
                .collect();
            out.push(worst(PointwiseCheck::AlphaEnvelope, Some(alpha), env));
        }
        None => out.push(PointwiseVerdict {
            check: PointwiseCheck::AlphaEnvelope,
            applicable: false,
            passed: true,
            worst_node: 0,
            worst_r: 0.0,
            margin: f64::NAN,
            alpha: None,
        }),
    }

    let cap = nl.primitive_inv((lambda / lambda_star_hi).min(1.0) * nl.f_total());
    let mut v = worst(PointwiseCheck::ExtremalCap, None, vec![cap - bp.u_max()]);
    v.worst_node = 0;
    v.worst_r = 0.0;
    out.push(v);
    Ok(out)
}

/// Diagnostic comparing `max f'(u)` on a near-extremal branch point with
/// `inf f(t)/t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FprimeCheck {
    pub lambda: f64,
    pub max_fprime: f64,
    pub inf_f_over_t: f64,
    pub inf_argmin: f64,
    /// `max f'(u) ≥ inf f(t)/t`.
    pub extremal_regime: bool,
}

pub fn fprime_extremal_check(bp: &BranchPoint, nl: &Nonlinearity) -> FprimeCheck {
    let max_fprime = bp.u.iter().map(|&u| nl.fprime_unchecked(u)).fold(0.0, f64::max);
    let (inf_f_over_t, inf_argmin) = nl.inf_f_over_t();
    FprimeCheck {
        lambda: bp.lambda,
        max_fprime,
        inf_f_over_t,
        inf_argmin,
        extremal_regime: max_fprime >= inf_f_over_t,
    }
}
