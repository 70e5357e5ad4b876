//! Radial drift profiles `ρ`, the weight `g(r) = exp(∫₀ʳ s ρ(s) ds)` and the
//! torsion function of `L_A u = -Δu - A ρ(|x|) x·∇u` on the unit ball.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::quadrature::gauss_legendre;

/// Budget for `A · max|ln g|` before `g^A` leaves the double range.
pub const LOG_BUDGET: f64 = 700.0;

/// Threshold below which `|ρ|` counts as zero during classification.
pub const PLATEAU_TOL: f64 = 1e-12;

/// Shortest run of vanishing `ρ` accepted as a plateau.
pub const PLATEAU_MIN_LENGTH: f64 = 1e-3;

const CLASSIFY_SAMPLES: usize = 10_000;

/// A piecewise-linear profile through `(r_k, ρ_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    r: Vec<f64>,
    rho: Vec<f64>,
    /// `∫₀^{r_k} s ρ(s) ds` at every knot.
    prefix: Vec<f64>,
}

impl Tabulated {
    /// Knots must start at 0, end at 1, increase strictly, and satisfy
    /// `|ρ_{k+1} - ρ_k| ≤ lipschitz · (r_{k+1} - r_k)`.
    pub fn new(r: Vec<f64>, rho: Vec<f64>, lipschitz: f64) -> Result<Self> {
        if r.len() != rho.len() || r.len() < 2 {
            return Err(Error::config("profile.r", "need at least two (r, rho) pairs of equal length"));
        }
        if r[0] != 0.0 || *r.last().unwrap() != 1.0 {
            return Err(Error::config("profile.r", "knots must start at 0 and end at 1"));
        }
        if rho.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("profile.rho", "values must be finite"));
        }
        for (k, w) in r.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::config("profile.r", format!("knots not increasing at index {}", k + 1)));
            }
            let jump = (rho[k + 1] - rho[k]).abs();
            if jump > lipschitz * (w[1] - w[0]) * (1.0 + 1e-12) {
                return Err(Error::config(
                    "profile.rho",
                    format!("jump {jump} between knots {k} and {} exceeds the Lipschitz budget {lipschitz}", k + 1),
                ));
            }
        }
        let mut prefix = vec![0.0; r.len()];
        for k in 0..r.len() - 1 {
            prefix[k + 1] = prefix[k] + segment_moment(r[k], rho[k], r[k + 1], rho[k + 1], r[k + 1]);
        }
        Ok(Tabulated { r, rho, prefix })
    }

    fn segment(&self, x: f64) -> usize {
        (self.r.partition_point(|&v| v <= x).max(1) - 1).min(self.r.len() - 2)
    }

    fn rho(&self, x: f64) -> f64 {
        let k = self.segment(x);
        let t = (x - self.r[k]) / (self.r[k + 1] - self.r[k]);
        self.rho[k] + t * (self.rho[k + 1] - self.rho[k])
    }

    fn ln_g(&self, x: f64) -> f64 {
        let k = self.segment(x);
        self.prefix[k] + segment_moment(self.r[k], self.rho[k], self.r[k + 1], self.rho[k + 1], x)
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.r, &self.rho)
    }
}

/// `∫_{r0}^{x} s ρ(s) ds` for `ρ` linear through `(r0, v0)` and `(r1, v1)`.
fn segment_moment(r0: f64, v0: f64, r1: f64, v1: f64, x: f64) -> f64 {
    let m = (v1 - v0) / (r1 - r0);
    let d = x - r0;
    // s ρ(s) = (r0 + y)(v0 + m y), y = s - r0.
    r0 * v0 * d + (r0 * m + v0) * d * d / 2.0 + m * d * d * d / 3.0
}

/// Radial drift profile `ρ` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowProfile {
    Constant { c: f64 },
    /// `ρ(r) = 2 / (1 + r²)`, so `g(r) = 1 + r²`.
    InverseQuadratic,
    /// Zero on `[a, b]`, with cubic tapers `outer (1 - r/a)³` below `a` and
    /// `outer ((r - b)/(1 - b))³` above `b`.
    Plateau { a: f64, b: f64, outer: f64 },
    Tabulated(Tabulated),
}

impl FlowProfile {
    pub fn constant(c: f64) -> Self {
        FlowProfile::Constant { c }
    }

    pub fn plateau(a: f64, b: f64, outer: f64) -> Result<Self> {
        if !(0.0 <= a && a < b && b <= 1.0) {
            return Err(Error::config("profile.plateau", format!("need 0 <= a < b <= 1, got ({a}, {b})")));
        }
        if !outer.is_finite() {
            return Err(Error::config("profile.outer", "must be finite"));
        }
        Ok(FlowProfile::Plateau { a, b, outer })
    }

    pub fn tabulated(r: Vec<f64>, rho: Vec<f64>, lipschitz: f64) -> Result<Self> {
        Tabulated::new(r, rho, lipschitz).map(FlowProfile::Tabulated)
    }

    /// `ρ(r)`.
    pub fn rho(&self, r: f64) -> f64 {
        match self {
            FlowProfile::Constant { c } => *c,
            FlowProfile::InverseQuadratic => 2.0 / (1.0 + r * r),
            FlowProfile::Plateau { a, b, outer } => {
                if r < *a {
                    outer * (1.0 - r / a).powi(3)
                } else if r > *b {
                    outer * ((r - b) / (1.0 - b)).powi(3)
                } else {
                    0.0
                }
            }
            FlowProfile::Tabulated(t) => t.rho(r),
        }
    }

    /// `ln g(r) = ∫₀ʳ s ρ(s) ds`, in closed form for every family.
    pub fn ln_g(&self, r: f64) -> f64 {
        match self {
            FlowProfile::Constant { c } => 0.5 * c * r * r,
            FlowProfile::InverseQuadratic => (r * r).ln_1p(),
            FlowProfile::Plateau { a, b, outer } => {
                let inner = |x: f64| {
                    let u = x / a;
                    a * a * (u * u / 2.0 - u.powi(3) + 0.75 * u.powi(4) - u.powi(5) / 5.0)
                };
                let mut v = if *a > 0.0 { inner(r.min(*a)) } else { 0.0 };
                if r > *b {
                    let x = r - b;
                    v += (b * x.powi(4) / 4.0 + x.powi(5) / 5.0) / (1.0 - b).powi(3);
                }
                outer * v
            }
            FlowProfile::Tabulated(t) => t.ln_g(r),
        }
    }

    /// Largest `|ln g|` over `[0, 1]`, sampled on the classification grid and
    /// at the right end point.
    pub fn max_abs_ln_g(&self) -> f64 {
        (0..=CLASSIFY_SAMPLES)
            .map(|k| self.ln_g(k as f64 / CLASSIFY_SAMPLES as f64).abs())
            .fold(0.0, f64::max)
    }

    fn describe(&self) -> String {
        match self {
            FlowProfile::Constant { c } => format!("constant({c})"),
            FlowProfile::InverseQuadratic => "inverse-quadratic".into(),
            FlowProfile::Plateau { a, b, outer } => format!("plateau({a}, {b}, outer={outer})"),
            FlowProfile::Tabulated(t) => format!("table({} knots)", t.r.len()),
        }
    }
}

impl std::fmt::Display for FlowProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.describe())
    }
}

/// `g(r) = exp(∫₀ʳ s ρ(s) ds)`.
pub fn weight_g(profile: &FlowProfile, r: f64) -> f64 {
    profile.ln_g(r).exp()
}

/// Sign classification of a profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "kebab-case")]
pub enum Regime {
    NegativeSomewhere,
    PositiveNoPlateau,
    PositiveWithPlateau { a: f64, b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub regime: Regime,
    /// Set when `ρ` dips below zero and also vanishes on a plateau.
    pub ambiguous: bool,
}

/// Classify `ρ` on a uniform sample of `[0, 1]`.
pub fn classify(profile: &FlowProfile) -> Classification {
    let n = CLASSIFY_SAMPLES;
    let rs: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    let vals: Vec<f64> = rs.iter().map(|&r| profile.rho(r)).collect();
    let negative = vals.iter().any(|&v| v < -PLATEAU_TOL);

    let mut best: Option<(usize, usize)> = None;
    let mut start: Option<usize> = None;
    for k in 0..=n + 1 {
        let zero = k <= n && vals[k].abs() <= PLATEAU_TOL;
        match (zero, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                let e = k - 1;
                if best.is_none_or(|(bs, be)| rs[e] - rs[s] > rs[be] - rs[bs]) {
                    best = Some((s, e));
                }
                start = None;
            }
            _ => {}
        }
    }
    let plateau = best.filter(|&(s, e)| rs[e] - rs[s] >= PLATEAU_MIN_LENGTH);

    match (negative, plateau) {
        (true, Some((s, e))) => {
            log::warn!(
                "ambiguous profile {profile}: negative somewhere and zero on [{}, {}]; classified as negative",
                rs[s],
                rs[e]
            );
            Classification {
                regime: Regime::NegativeSomewhere,
                ambiguous: true,
            }
        }
        (true, None) => Classification {
            regime: Regime::NegativeSomewhere,
            ambiguous: false,
        },
        (false, Some((s, e))) => Classification {
            regime: Regime::PositiveWithPlateau { a: rs[s], b: rs[e] },
            ambiguous: false,
        },
        (false, None) => Classification {
            regime: Regime::PositiveNoPlateau,
            ambiguous: false,
        },
    }
}

/// `(1/N) ∫_a^b (t^N - a^N) / t^{N-1} dt`, the lower torsion constant for a
/// profile vanishing on `[a, b]`.
pub fn plateau_lower_constant(a: f64, b: f64, n: usize) -> Result<f64> {
    if !(0.0 <= a && a < b && b <= 1.0) {
        return Err(Error::domain(format!("need 0 <= a < b <= 1, got ({a}, {b})")));
    }
    if n < 2 {
        return Err(Error::domain("dimension must be at least 2"));
    }
    let nf = n as f64;
    // a^N ∫_a^b t^{1-N} dt, which tends to 0 as a → 0.
    let tail = if a == 0.0 {
        0.0
    } else if n == 2 {
        a * a * (b / a).ln()
    } else {
        (a.powi(n as i32) * b.powf(2.0 - nf) - a * a) / (2.0 - nf)
    };
    Ok(((b * b - a * a) / 2.0 - tail) / nf)
}

/// Torsion function `ψ_A` sampled on a uniform radial grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorsionProfile {
    pub dim: usize,
    pub amplitude: f64,
    pub nodes: Vec<f64>,
    pub psi: Vec<f64>,
    pub dpsi: Vec<f64>,
    pub psi_max: f64,
}

impl TorsionProfile {
    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }
}

pub(crate) fn check_problem(a: f64, n: usize, m: usize) -> Result<()> {
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::config("A", format!("amplitude must be finite and >= 0, got {a}")));
    }
    if n < 2 {
        return Err(Error::config("N", format!("dimension must be >= 2, got {n}")));
    }
    if m < 16 {
        return Err(Error::Mesh(format!("grid needs M >= 16 cells, got {m}")));
    }
    Ok(())
}

pub(crate) fn check_log_budget(profile: &FlowProfile, a: f64) -> Result<()> {
    let span = a * profile.max_abs_ln_g();
    if span > LOG_BUDGET {
        return Err(Error::Overflow(format!(
            "A·max|ln g| = {span:.3} exceeds the log-space budget {LOG_BUDGET} for {profile}"
        )));
    }
    Ok(())
}

/// Torsion function from `ψ(r) = ∫_r^1 Q(t) dt`, with
/// `Q(t) = ∫₀ᵗ (s/t)^{N-1} g^A(s)/g^A(t) ds`.
///
/// `Q` is accumulated on the half grid `t_j = j/(2M)` by the exact recursion
/// `Q_{j+1} = Q_j (t_j/t_{j+1})^{N-1} E_j + ∫_{t_j}^{t_{j+1}} (s/t_{j+1})^{N-1} E(s) ds`
/// with Gauss-Legendre panels (exact for `A = 0`), and the outer integral uses
/// Simpson's rule on each cell.
pub fn torsion(profile: &FlowProfile, a: f64, n: usize, m: usize) -> Result<TorsionProfile> {
    check_problem(a, n, m)?;
    check_log_budget(profile, a)?;

    let half = 2 * m;
    let dt = 1.0 / half as f64;
    let t_at = |j: usize| j as f64 / half as f64;
    let lng: Vec<f64> = (0..=half).map(|j| profile.ln_g(t_at(j))).collect();

    let gl_points = ((n + 2).div_ceil(2)).max(4);
    let (gx, gw) = gauss_legendre(gl_points);
    let pow = (n - 1) as i32;

    let mut q = vec![0.0; half + 1];
    for j in 0..half {
        let (t0, t1) = (t_at(j), t_at(j + 1));
        let mut panel = 0.0;
        for (x, w) in gx.iter().zip(&gw) {
            let s = t0 + 0.5 * dt * (1.0 + x);
            panel += w * (s / t1).powi(pow) * (a * (profile.ln_g(s) - lng[j + 1])).exp();
        }
        panel *= 0.5 * dt;
        let carry = if j == 0 {
            0.0
        } else {
            q[j] * (t0 / t1).powi(pow) * (a * (lng[j] - lng[j + 1])).exp()
        };
        q[j + 1] = carry + panel;
    }

    let h = 1.0 / m as f64;
    let nodes: Vec<f64> = (0..=m).map(|i| i as f64 * h).collect();
    let mut psi = vec![0.0; m + 1];
    for i in (0..m).rev() {
        psi[i] = psi[i + 1] + h / 6.0 * (q[2 * i] + 4.0 * q[2 * i + 1] + q[2 * i + 2]);
    }
    let dpsi: Vec<f64> = (0..=m).map(|i| -q[2 * i]).collect();
    Ok(TorsionProfile {
        dim: n,
        amplitude: a,
        psi_max: psi[0],
        nodes,
        psi,
        dpsi,
    })
}

/// Grid used by [`torsion_max`].
pub const TORSION_MAX_CELLS: usize = 8192;

/// `ψ_A(0)`, the maximum of the torsion function.
pub fn torsion_max(profile: &FlowProfile, a: f64, n: usize) -> Result<f64> {
    torsion(profile, a, n, TORSION_MAX_CELLS).map(|tp| tp.psi_max)
}

/// `β(α) = max_r f'(F⁻¹(α ψ(r))) ψ'(r)²`, with parabolic refinement of an
/// interior maximum.
pub fn beta_of_alpha(tp: &TorsionProfile, nl: &Nonlinearity, alpha: f64) -> Result<f64> {
    let alpha_max = nl.f_total() / tp.psi_max;
    if !(alpha > 0.0 && alpha < alpha_max) {
        return Err(Error::domain(format!(
            "alpha = {alpha} outside (0, F_total/psi_max = {alpha_max})"
        )));
    }
    let vals: Vec<f64> = tp
        .psi
        .iter()
        .zip(&tp.dpsi)
        .map(|(&p, &d)| nl.fprime_unchecked(nl.primitive_inv(alpha * p)) * d * d)
        .collect();
    let (k, &vk) = vals
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .expect("nonempty grid");
    if k == 0 || k + 1 == vals.len() {
        return Ok(vk);
    }
    let (vl, vr) = (vals[k - 1], vals[k + 1]);
    let curv = 2.0 * vk - vl - vr;
    if curv > 0.0 {
        Ok(vk + (vr - vl) * (vr - vl) / (8.0 * curv))
    } else {
        Ok(vk)
    }
}

/// Serializable description of a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case")]
pub enum FlowSpec {
    Constant {
        c: f64,
    },
    InverseQuadratic,
    Plateau {
        a: f64,
        b: f64,
        #[serde(default = "default_outer")]
        outer: f64,
    },
    Table {
        r: Vec<f64>,
        rho: Vec<f64>,
        lipschitz: f64,
    },
}

fn default_outer() -> f64 {
    1.0
}

impl FlowSpec {
    pub fn build(&self) -> Result<FlowProfile> {
        match self {
            FlowSpec::Constant { c } => {
                if c.is_finite() {
                    Ok(FlowProfile::constant(*c))
                } else {
                    Err(Error::config("profile.c", "must be finite"))
                }
            }
            FlowSpec::InverseQuadratic => Ok(FlowProfile::InverseQuadratic),
            FlowSpec::Plateau { a, b, outer } => FlowProfile::plateau(*a, *b, *outer),
            FlowSpec::Table { r, rho, lipschitz } => FlowProfile::tabulated(r.clone(), rho.clone(), *lipschitz),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive_simpson;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ln_g_oracle(p: &FlowProfile, r: f64) -> f64 {
        // Split into pieces so the adaptive rule cannot skip a zero stretch.
        (0..64)
            .map(|k| {
                let (lo, hi) = (r * k as f64 / 64.0, r * (k + 1) as f64 / 64.0);
                adaptive_simpson(|s| s * p.rho(s), lo, hi, 1e-13).value
            })
            .sum()
    }

    fn example1_psi(n: usize, r: f64) -> f64 {
        let nf = n as f64;
        (nf * (1.0 - r * r) + 2.0 * (2.0 / (1.0 + r * r)).ln()) / (2.0 * nf * (nf + 2.0))
    }

    fn sample_table() -> FlowProfile {
        let r: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let rho: Vec<f64> = r.iter().map(|x| (3.0 * x).sin() - 0.2).collect();
        FlowProfile::tabulated(r, rho, 3.5).unwrap()
    }

    fn builtins() -> Vec<FlowProfile> {
        vec![
            FlowProfile::constant(0.0),
            FlowProfile::constant(-4.0),
            FlowProfile::constant(1.0),
            FlowProfile::InverseQuadratic,
            FlowProfile::plateau(0.5, 1.0, 1.0).unwrap(),
            FlowProfile::plateau(0.3, 0.6, 2.0).unwrap(),
            sample_table(),
        ]
    }

    #[test]
    fn weight_examples() {
        assert_eq!(weight_g(&FlowProfile::constant(0.0), 0.7), 1.0);
        assert_relative_eq!(weight_g(&FlowProfile::InverseQuadratic, 1.0), 2.0, max_relative = 1e-15);
        assert_relative_eq!(weight_g(&FlowProfile::constant(-4.0), 1.0), (-2f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn closed_form_ln_g_matches_quadrature() {
        for p in builtins() {
            for k in 0..=40 {
                let r = k as f64 / 40.0;
                let diff = (p.ln_g(r) - ln_g_oracle(&p, r)).abs();
                assert!(diff < 1e-12, "{p} r={r} diff={diff}");
            }
        }
    }

    #[test]
    fn plateau_taper_values() {
        let p = FlowProfile::plateau(0.5, 1.0, 1.0).unwrap();
        assert_relative_eq!(p.ln_g(0.5), 0.25 / 20.0, max_relative = 1e-14);
        assert_eq!(p.ln_g(0.9), p.ln_g(0.5));
        assert_eq!(p.rho(0.75), 0.0);
        assert_relative_eq!(p.rho(0.0), 1.0);
    }

    #[test]
    fn laplacian_torsion_is_exact() {
        for n in [2usize, 3, 5, 10] {
            let tp = torsion(&FlowProfile::constant(0.0), 7.0, n, 1024).unwrap();
            assert!((tp.psi_max - 0.5 / n as f64).abs() < 1e-13);
            for (r, p) in tp.nodes.iter().zip(&tp.psi) {
                assert!((p - (1.0 - r * r) / (2.0 * n as f64)).abs() < 1e-13);
            }
        }
        assert!((torsion_max(&FlowProfile::constant(0.0), 3.0, 5).unwrap() - 0.1).abs() < 1e-13);
    }

    #[test]
    fn example1_torsion() {
        for n in [2usize, 3, 10] {
            let tp = torsion(&FlowProfile::InverseQuadratic, 1.0, n, 4096).unwrap();
            let nf = n as f64;
            let exact_max = (nf + 4f64.ln()) / (2.0 * nf * (nf + 2.0));
            assert_relative_eq!(tp.psi_max, exact_max, max_relative = 1e-10);
            for (i, (&r, &p)) in tp.nodes.iter().zip(&tp.psi).enumerate().take(4096) {
                assert_relative_eq!(p, example1_psi(n, r), max_relative = 1e-9);
                let exact_d = -(r / (nf + 2.0) + 2.0 * r / (1.0 + r * r) / (nf * (nf + 2.0)));
                let err = (tp.dpsi[i] - exact_d).abs();
                assert!(err < 1e-10, "N={n} r={r} err={err:e}");
            }
            assert_eq!(tp.psi[4096], 0.0);
        }
        assert_relative_eq!(
            torsion_max(&FlowProfile::InverseQuadratic, 1.0, 10).unwrap(),
            (10.0 + 4f64.ln()) / 240.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn strong_positive_flow_shrinks_torsion() {
        let v = torsion_max(&FlowProfile::constant(1.0), 100.0, 2).unwrap();
        assert!(v < 0.05);
        // Direct fine-grid oracle: nested adaptive quadrature.
        let p = FlowProfile::constant(1.0);
        let q = |t: f64| {
            if t == 0.0 {
                return 0.0;
            }
            let lt = p.ln_g(t);
            adaptive_simpson(|s| (s / t) * (100.0 * (p.ln_g(s) - lt)).exp(), 0.0, t, 1e-12).value
        };
        let oracle = adaptive_simpson(q, 0.0, 1.0, 1e-11).value;
        assert_relative_eq!(v, oracle, max_relative = 1e-8);
    }

    #[test]
    fn overflow_guard() {
        let err = torsion(&FlowProfile::constant(-4.0), 400.0, 2, 64).unwrap_err();
        assert!(matches!(err, Error::Overflow(_)));
        assert!(torsion(&FlowProfile::constant(-4.0), 300.0, 2, 64).is_ok());
        assert!(matches!(torsion(&FlowProfile::constant(0.0), 1.0, 2, 8), Err(Error::Mesh(_))));
        assert!(matches!(torsion(&FlowProfile::constant(0.0), 1.0, 1, 64), Err(Error::Config { .. })));
    }

    #[test]
    fn torsion_shape_invariants() {
        for p in builtins() {
            for a in [0.0, 1.0, 10.0] {
                for n in [2usize, 3, 10] {
                    let tp = torsion(&p, a, n, 256).unwrap();
                    assert_eq!(tp.psi[256], 0.0);
                    assert_eq!(tp.dpsi[0], 0.0);
                    assert_eq!(tp.psi_max, tp.psi[0]);
                    assert!(tp.psi.windows(2).all(|w| w[0] >= w[1]), "{p} A={a} N={n}");
                    assert!(tp.psi.iter().all(|&v| v >= 0.0));
                }
            }
        }
    }

    #[test]
    fn grid_convergence_of_psi_max() {
        // The quadrature is fourth order, so successive differences shrink at
        // least like M^-2 (they reach roundoff quickly).
        for p in builtins() {
            let v: Vec<f64> = [256usize, 512, 1024]
                .iter()
                .map(|&m| torsion(&p, 10.0, 3, m).unwrap().psi_max)
                .collect();
            let d1 = (v[0] - v[1]).abs();
            let d2 = (v[1] - v[2]).abs();
            assert!(d2 <= d1 / 2f64.powf(1.8) + 1e-15 * v[2], "{p}: {d1:e} {d2:e}");
        }
    }

    #[test]
    fn trichotomy_trends() {
        let neg = FlowProfile::constant(-4.0);
        let vals: Vec<f64> = [0.0, 10.0, 50.0, 100.0]
            .iter()
            .map(|&a| torsion(&neg, a, 2, 2048).unwrap().psi_max)
            .collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
        assert!(vals[3] / vals[1] > 10.0);
        for p in [FlowProfile::constant(1.0), FlowProfile::InverseQuadratic] {
            let vals: Vec<f64> = [0.0, 1.0, 10.0, 100.0]
                .iter()
                .map(|&a| torsion(&p, a, 2, 2048).unwrap().psi_max)
                .collect();
            assert!(vals.windows(2).all(|w| w[1] < w[0]));
            assert!(vals[3] < 0.1 * vals[0]);
        }
        let plat = FlowProfile::plateau(0.5, 1.0, 1.0).unwrap();
        let lo = plateau_lower_constant(0.5, 1.0, 2).unwrap();
        for a in [0.0, 1.0, 10.0, 100.0] {
            let v = torsion(&plat, a, 2, 2048).unwrap().psi_max;
            assert!(lo <= v && v <= 0.25, "A={a}: {v}");
        }
    }

    #[test]
    fn plateau_constant_values() {
        for n in [2usize, 3, 7] {
            assert_relative_eq!(plateau_lower_constant(0.0, 1.0, n).unwrap(), 0.5 / n as f64, max_relative = 1e-15);
        }
        let v = plateau_lower_constant(0.5, 1.0, 2).unwrap();
        // Oracle: direct quadrature of the defining integral.
        let oracle = adaptive_simpson(|t| (t * t - 0.25) / t, 0.5, 1.0, 1e-14).value / 2.0;
        assert_relative_eq!(v, oracle, max_relative = 1e-12);
        assert_relative_eq!(v, 0.100_856_6, epsilon = 1e-7);
        let small = plateau_lower_constant(0.9, 1.0, 3).unwrap();
        let oracle = adaptive_simpson(|t| (t.powi(3) - 0.729) / (t * t), 0.9, 1.0, 1e-14).value / 3.0;
        assert_relative_eq!(small, oracle, max_relative = 1e-12);
        assert!(small > 0.0 && small < 1.0 / 6.0);
        assert!(plateau_lower_constant(0.5, 0.5, 2).is_err());
    }

    #[test]
    fn classification() {
        assert_eq!(classify(&FlowProfile::constant(-4.0)).regime, Regime::NegativeSomewhere);
        assert_eq!(classify(&FlowProfile::InverseQuadratic).regime, Regime::PositiveNoPlateau);
        match classify(&FlowProfile::plateau(0.5, 1.0, 1.0).unwrap()).regime {
            Regime::PositiveWithPlateau { a, b } => {
                assert!((a - 0.5).abs() < 1e-3);
                assert_eq!(b, 1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        let c = classify(&FlowProfile::plateau(0.5, 0.8, -1.0).unwrap());
        assert_eq!(c.regime, Regime::NegativeSomewhere);
        assert!(c.ambiguous);
        // A zero run shorter than the minimum length is not a plateau.
        let narrow = FlowProfile::tabulated(vec![0.0, 0.5, 0.5001, 1.0], vec![1.0, 0.0, 0.0, 1.0], 10.0).unwrap();
        assert_eq!(classify(&narrow).regime, Regime::PositiveNoPlateau);
    }

    #[test]
    fn tabulated_validation() {
        assert!(FlowProfile::tabulated(vec![0.0, 1.0], vec![0.0, 5.0], 1.0).is_err());
        assert!(FlowProfile::tabulated(vec![0.1, 1.0], vec![0.0, 0.0], 1.0).is_err());
        assert!(FlowProfile::tabulated(vec![0.0, 0.5, 0.5, 1.0], vec![0.0; 4], 1.0).is_err());
        assert!(FlowProfile::tabulated(vec![0.0, 1.0], vec![0.0, 5.0], 5.0).is_ok());
    }

    #[test]
    fn beta_examples() {
        let tp = torsion(&FlowProfile::InverseQuadratic, 1.0, 2, 4096).unwrap();
        let e = Nonlinearity::exponential();
        assert_relative_eq!(beta_of_alpha(&tp, &e, 1.0).unwrap(), 9.0 / 64.0, max_relative = 1e-8);
        let m = Nonlinearity::mems(2.0).unwrap();
        assert_relative_eq!(beta_of_alpha(&tp, &m, 1e-3).unwrap(), 9.0 / 32.0, max_relative = 1e-8);
        let lap = torsion(&FlowProfile::constant(0.0), 0.0, 2, 1024).unwrap();
        assert_relative_eq!(beta_of_alpha(&lap, &e, 1e-12).unwrap(), 0.25, max_relative = 1e-10);
        assert!(beta_of_alpha(&lap, &e, 4.5).is_err());
        assert!(beta_of_alpha(&lap, &e, 0.0).is_err());
    }

    #[test]
    fn spec_parsing() {
        let s: FlowSpec = serde_json::from_str(r#"{"profile":"plateau","a":0.5,"b":1.0}"#).unwrap();
        assert_eq!(s.build().unwrap(), FlowProfile::plateau(0.5, 1.0, 1.0).unwrap());
        let s: FlowSpec = serde_json::from_str(r#"{"profile":"inverse-quadratic"}"#).unwrap();
        assert_eq!(s.build().unwrap(), FlowProfile::InverseQuadratic);
        let s: FlowSpec =
            serde_json::from_str(r#"{"profile":"table","r":[0,1],"rho":[1,2],"lipschitz":1}"#).unwrap();
        assert!(s.build().is_ok());
        assert!(serde_json::from_str::<FlowSpec>(r#"{"profile":"spiral"}"#).is_err());
    }

    proptest! {
        #[test]
        fn constant_flow_torsion_properties(c in -4.0f64..4.0, a in 0.0f64..20.0, n in 2usize..12) {
            let tp = torsion(&FlowProfile::constant(c), a, n, 128).unwrap();
            prop_assert!(tp.psi.windows(2).all(|w| w[0] >= w[1]));
            prop_assert_eq!(tp.psi[128], 0.0);
            prop_assert_eq!(tp.dpsi[0], 0.0);
            // Positive drift shrinks the torsion below the Laplacian value, negative drift grows it.
            let lap = 0.5 / n as f64;
            if c > 0.0 { prop_assert!(tp.psi_max <= lap * (1.0 + 1e-12)); }
            if c < 0.0 { prop_assert!(tp.psi_max >= lap * (1.0 - 1e-12)); }
        }

        #[test]
        fn plateau_bracket(a in 0.05f64..0.9, width in 0.02f64..0.5, outer in 0.1f64..5.0, amp in 0.0f64..50.0) {
            let b = (a + width).min(1.0);
            let p = FlowProfile::plateau(a, b, outer).unwrap();
            let tp = torsion(&p, amp, 2, 256).unwrap();
            let lo = plateau_lower_constant(a, b, 2).unwrap();
            prop_assert!(tp.psi_max >= lo * (1.0 - 1e-9));
            prop_assert!(tp.psi_max <= 0.25 * (1.0 + 1e-12));
        }
    }
}
