//! Parameter sweeps over the drift amplitude, the composition exponent and
//! the branch parameter, with monotonicity verdicts on the computed columns.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::extremal::{lambda_star_bisect, ProblemSetup, Tolerances};
use crate::flow::{classify, plateau_lower_constant, Regime, LOG_BUDGET};
use crate::grid::{discrete_torsion, minimal_solution, SolveOptions, SolveOutcome};

/// Slack for nodewise monotonicity of `F(u_λ)/λ` in `λ`.
const NODEWISE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    A,
    P,
    Lambda,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::A => "A",
            Axis::P => "p",
            Axis::Lambda => "lambda",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Verdict {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// A table of per-point scalars with trend verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: Axis,
    pub points: Vec<f64>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub verdicts: Vec<Verdict>,
    pub cells: usize,
    pub tolerances: Tolerances,
    /// Requested points that were dropped, with the reason.
    pub skipped: Vec<(f64, String)>,
}

impl SweepResult {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|row| row[k]).collect())
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    /// CSV with a `# config-sha256:` line hashing `config_json`, a `# config:`
    /// line embedding it, then the header and rows. Numbers use 17
    /// significant digits.
    pub fn to_csv(&self, config_json: &str) -> String {
        let mut out = String::new();
        writeln!(out, "# config-sha256: {}", config_hash(config_json)).unwrap();
        writeln!(out, "# config: {config_json}").unwrap();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_number(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// JSON object with the axis, verdicts and skipped points.
    pub fn verdict_summary(&self) -> serde_json::Value {
        serde_json::json!({
            "axis": self.axis,
            "all_passed": self.all_passed(),
            "verdicts": self.verdicts,
            "skipped": self.skipped,
        })
    }
}

/// Hex SHA-256 of a configuration string.
pub fn config_hash(config_json: &str) -> String {
    hex::encode(Sha256::digest(config_json.as_bytes()))
}

/// Round-trip representation with 17 significant digits.
pub fn format_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn strictly(values: &[f64], increasing: bool) -> bool {
    values
        .windows(2)
        .all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] })
}

fn check_increasing(points: &[f64], what: &str) -> Result<()> {
    if points.is_empty() {
        return Err(Error::config(what, "list must be nonempty"));
    }
    if !strictly(points, true) {
        return Err(Error::config(what, "list must be strictly increasing"));
    }
    Ok(())
}

fn bookkeeping(setup: &ProblemSetup, tol: &Tolerances) -> [f64; 3] {
    [setup.cells as f64, tol.iteration, tol.bisection]
}

const BOOKKEEPING: [&str; 3] = ["cells", "tol_iter", "tol_bisect"];

fn columns(names: &[&str]) -> Vec<String> {
    names.iter().chain(BOOKKEEPING.iter()).map(|s| s.to_string()).collect()
}

/// Torsion maximum, the two torsion bounds and the `λ*` bracket for each drift
/// amplitude `A`. Amplitudes beyond the log-space budget are skipped and
/// recorded.
pub fn sweep_a(setup: &ProblemSetup, a_list: &[f64], tol: &Tolerances) -> Result<SweepResult> {
    check_increasing(a_list, "A_list")?;
    let span = setup.profile.max_abs_ln_g();
    let (kept, dropped): (Vec<f64>, Vec<f64>) = a_list.iter().partition(|&&a| a * span <= LOG_BUDGET);
    let skipped: Vec<(f64, String)> = dropped
        .iter()
        .map(|&a| (a, format!("A·max|ln g| = {:.3} exceeds {LOG_BUDGET}", a * span)))
        .collect();
    for (a, why) in &skipped {
        log::warn!("sweep over A: skipping A = {a}: {why}");
    }
    if kept.is_empty() {
        return Err(Error::Overflow("every A in the sweep exceeds the log-space budget".into()));
    }

    let nl = &setup.nl;
    let sup = nl.sup_ratio().value;
    let rows = kept
        .par_iter()
        .map(|&a| {
            let point = ProblemSetup {
                amplitude: a,
                ..setup.clone()
            };
            let tp = point.torsion()?;
            let star = lambda_star_bisect(&point.operator()?, nl, tol.bisection)?;
            let mut row = vec![
                a,
                tp.psi_max,
                star.psi_h_max,
                sup / tp.psi_max,
                nl.f_total() / tp.psi_max,
                star.lo,
                star.hi,
            ];
            row.extend(bookkeeping(setup, tol));
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut result = SweepResult {
        axis: Axis::A,
        points: kept,
        columns: columns(&["A", "psi_max", "psi_h_max", "lower_basic", "upper_F", "lambda_lo", "lambda_hi"]),
        rows,
        verdicts: vec![],
        cells: setup.cells,
        tolerances: *tol,
        skipped,
    };
    let psi = result.column("psi_max").expect("column exists");
    let lo = result.column("lambda_lo").expect("column exists");
    let hi = result.column("lambda_hi").expect("column exists");
    let classification = classify(&setup.profile);
    result.verdicts = match classification.regime {
        Regime::NegativeSomewhere => vec![
            Verdict::new("psi_max increasing", strictly(&psi, true), format!("{psi:?}")),
            Verdict::new("lambda_hi decreasing", strictly(&hi, false), format!("{hi:?}")),
        ],
        Regime::PositiveNoPlateau => vec![
            Verdict::new("psi_max decreasing", strictly(&psi, false), format!("{psi:?}")),
            Verdict::new("lambda_lo increasing", strictly(&lo, true), format!("{lo:?}")),
        ],
        Regime::PositiveWithPlateau { a, b } => {
            let floor = plateau_lower_constant(a, b, setup.dim)?;
            let ceil = 1.0 / (2.0 * setup.dim as f64);
            let inside = psi.iter().all(|&p| p >= floor && p <= ceil * (1.0 + 1e-12));
            vec![Verdict::new(
                "psi_max within plateau bracket",
                inside,
                format!("bracket [{floor}, {ceil}], values {psi:?}"),
            )]
        }
    };
    if classification.ambiguous {
        result.verdicts.push(Verdict::new(
            "unambiguous regime",
            false,
            "profile is negative somewhere and also vanishes on a plateau".into(),
        ));
    }
    Ok(result)
}

/// `λ*` bracket for `f(u^p)` over the exponents `p`, with the limit target
/// `1/(f(0) ψ_max)`.
pub fn sweep_p(setup: &ProblemSetup, p_list: &[f64], tol: &Tolerances) -> Result<SweepResult> {
    check_increasing(p_list, "p_list")?;
    if p_list[0] < 1.0 {
        return Err(Error::config("p_list", "exponents must be >= 1"));
    }
    if setup.nl.is_singular() {
        return Err(Error::domain("the p sweep needs a regular base nonlinearity"));
    }
    let tp = setup.torsion()?;
    let op = setup.operator()?;
    let target = 1.0 / (setup.nl.f0() * tp.psi_max);
    let rows = p_list
        .par_iter()
        .map(|&p| {
            let nl = setup.nl.compose_power(p)?;
            let star = lambda_star_bisect(&op, &nl, tol.bisection)?;
            let mid = star.mid();
            let mut row = vec![
                p,
                star.lo,
                star.hi,
                mid,
                star.witness.u_max(),
                target,
                (mid - target).abs(),
                nl.f_total(),
            ];
            row.extend(bookkeeping(setup, tol));
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut result = SweepResult {
        axis: Axis::P,
        points: p_list.to_vec(),
        columns: columns(&["p", "lambda_lo", "lambda_hi", "lambda_mid", "u_max", "target", "error", "F_total"]),
        rows,
        verdicts: vec![],
        cells: setup.cells,
        tolerances: *tol,
        skipped: vec![],
    };
    let err = result.column("error").expect("column exists");
    let umax = result.column("u_max").expect("column exists");
    result.verdicts = vec![
        Verdict::new("error decreasing", strictly(&err, false), format!("{err:?}")),
        Verdict::new("u_max increasing", strictly(&umax, true), format!("{umax:?}")),
    ];
    Ok(result)
}

/// Minimal solutions at `λ = fraction · λ_lo` with the distance
/// `e(λ) = ‖F(u_λ)/λ − ψ_h‖∞`, nodewise monotonicity of `F(u_λ)/λ` and the
/// uniform bound `u_max ≤ F⁻¹(fraction · F(a_f))`.
pub fn branch_scan(setup: &ProblemSetup, fractions: &[f64], tol: &Tolerances) -> Result<SweepResult> {
    check_increasing(fractions, "fractions")?;
    if fractions[0] <= 0.0 || fractions[fractions.len() - 1] >= 1.0 {
        return Err(Error::config("fractions", "fractions must lie in (0, 1)"));
    }
    let nl = &setup.nl;
    let op = setup.operator()?;
    let psi_h = discrete_torsion(&op)?;
    let star = lambda_star_bisect(&op, nl, tol.bisection)?;
    let opts = SolveOptions {
        tol: tol.iteration,
        ..SolveOptions::default()
    };

    let solutions = fractions
        .par_iter()
        .map(|&frac| {
            let lambda = frac * star.lo;
            match minimal_solution(&op, nl, lambda, opts)? {
                SolveOutcome::Converged(bp) => Ok(bp),
                SolveOutcome::NoConvergence(nc) => Err(Error::domain(format!(
                    "no minimal solution at lambda = {lambda} below lambda_lo: {:?}",
                    nc.reason
                ))),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let scaled: Vec<Vec<f64>> = solutions
        .iter()
        .map(|bp| bp.u.iter().map(|&u| nl.primitive(u) / bp.lambda).collect())
        .collect();

    let mut rows = vec![];
    let mut errors = vec![];
    let mut bound_ok = true;
    for ((frac, bp), q) in fractions.iter().zip(&solutions).zip(&scaled) {
        let e = q.iter().zip(&psi_h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let cap = nl.primitive_inv(frac * nl.f_total());
        bound_ok &= bp.u_max() <= cap;
        errors.push(e);
        let mut row = vec![
            bp.lambda,
            *frac,
            bp.u_max(),
            e,
            e / bp.lambda,
            cap,
            bp.residual,
            bp.fixed_point_residual,
            bp.kappa1,
            bp.iterations as f64,
            if bp.converged { 1.0 } else { 0.0 },
            (bp.monotone_violations + bp.domination_violations) as f64,
        ];
        row.extend(bookkeeping(setup, tol));
        rows.push(row);
    }

    let mut worst_drop = 0.0f64;
    for w in scaled.windows(2) {
        for (lo, hi) in w[0].iter().zip(&w[1]) {
            worst_drop = worst_drop.max(lo - hi);
        }
    }

    let points: Vec<f64> = solutions.iter().map(|bp| bp.lambda).collect();
    Ok(SweepResult {
        axis: Axis::Lambda,
        points,
        columns: columns(&[
            "lambda",
            "fraction",
            "u_max",
            "e",
            "e_over_lambda",
            "uniform_cap",
            "residual",
            "fixed_point_residual",
            "kappa1",
            "iterations",
            "converged",
            "invariant_violations",
        ]),
        rows,
        verdicts: vec![
            Verdict::new(
                "e decreasing as lambda decreases",
                strictly(&errors, true),
                format!("{errors:?}"),
            ),
            Verdict::new(
                "F(u)/lambda nondecreasing in lambda",
                worst_drop <= NODEWISE_SLACK,
                format!("largest nodewise decrease {worst_drop:e}"),
            ),
            Verdict::new("uniform bound", bound_ok, format!("lambda_lo = {}", star.lo)),
        ],
        cells: setup.cells,
        tolerances: *tol,
        skipped: vec![],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowProfile;
    use crate::nonlinearity::Nonlinearity;

    #[test]
    fn csv_is_deterministic_and_hashed() {
        let setup = ProblemSetup::new(FlowProfile::InverseQuadratic, 1.0, 2, Nonlinearity::exponential(), 128);
        let tol = Tolerances::default();
        let a = sweep_a(&setup, &[0.0, 1.0, 5.0], &tol).unwrap();
        let b = sweep_a(&setup, &[0.0, 1.0, 5.0], &tol).unwrap();
        let ca = a.to_csv("{\"x\":1}");
        assert_eq!(ca, b.to_csv("{\"x\":1}"));
        assert!(ca.starts_with("# config-sha256: "));
        assert_eq!(ca.lines().nth(2).unwrap().split(',').count(), a.columns.len());
        assert_ne!(config_hash("a"), config_hash("b"));
        assert!(a.all_passed(), "{:?}", a.verdicts);
    }

    #[test]
    fn format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 16.000005912, 1e-300, -2.5e17] {
            assert_eq!(format_number(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn sweep_a_skips_over_budget() {
        let setup = ProblemSetup::new(FlowProfile::constant(-4.0), 0.0, 2, Nonlinearity::exponential(), 64);
        let res = sweep_a(&setup, &[0.0, 10.0, 1000.0], &Tolerances::default()).unwrap();
        assert_eq!(res.points, vec![0.0, 10.0]);
        assert_eq!(res.skipped.len(), 1);
        assert_eq!(res.skipped[0].0, 1000.0);
    }

    #[test]
    fn rejects_bad_lists() {
        let setup = ProblemSetup::new(FlowProfile::constant(0.0), 0.0, 2, Nonlinearity::exponential(), 64);
        let tol = Tolerances::default();
        assert!(sweep_a(&setup, &[], &tol).is_err());
        assert!(sweep_a(&setup, &[1.0, 0.0], &tol).is_err());
        assert!(sweep_p(&setup, &[0.5, 1.0], &tol).is_err());
        assert!(branch_scan(&setup, &[0.5, 1.5], &tol).is_err());
        let mems = ProblemSetup {
            nl: Nonlinearity::mems(2.0).unwrap(),
            ..setup
        };
        assert!(sweep_p(&mems, &[1.0, 2.0], &tol).is_err());
    }

    #[test]
    fn branch_scan_mems() {
        let setup = ProblemSetup::new(FlowProfile::constant(0.0), 0.0, 2, Nonlinearity::mems(2.0).unwrap(), 128);
        let res = branch_scan(&setup, &[0.0625, 0.125, 0.25, 0.5], &Tolerances::default()).unwrap();
        assert!(res.all_passed(), "{:?}", res.verdicts);
    }
}
