//! Torsion functions, extremal-parameter bounds and minimal-solution branches
//! for `L_A u = λ f(u)` on the unit ball, where
//! `L_A u = -Δu - A ρ(|x|) x·∇u` and `u = 0` on the boundary.
//!
//! Radial problems only: everything is a function of `r = |x|` on a uniform
//! grid `r_i = i/M`.

pub mod error;
pub mod experiments;
pub mod extremal;
pub mod flow;
pub mod golden;
pub mod grid;
pub mod nonlinearity;
pub mod quadrature;

pub use error::{Error, Result};
pub use experiments::{branch_scan, sweep_a, sweep_p, Axis, SweepResult, Verdict};
pub use extremal::{
    bounds_report, fprime_extremal_check, lambda_star_bisect, verify_pointwise, BoundsReport, FprimeCheck,
    LambdaStar, PointwiseCheck, PointwiseVerdict, ProblemSetup, Tolerances,
};
pub use flow::{classify, torsion, torsion_max, FlowProfile, FlowSpec, Regime, TorsionProfile};
pub use grid::{
    adjoint_mu1, assemble, linearized_kappa1, minimal_solution, BranchPoint, DiscreteOperator, RadialGrid,
    SolveOptions, SolveOutcome, Stencil,
};
pub use nonlinearity::{Kind, Nonlinearity, NonlinearitySpec, SupRatio};
