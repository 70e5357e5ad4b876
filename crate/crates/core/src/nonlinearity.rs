//! Convex nonlinearities `f` with `f(0) > 0` and the primitive
//! `F(t) = ∫₀ᵗ ds / f(s)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{adaptive_simpson, bisect_sign, golden_section_max};

/// Largest argument accepted by a singular nonlinearity, measured from `a_f`.
pub const SINGULAR_EVAL_GUARD: f64 = 1e-12;

/// Family tag of a nonlinearity.
#[derive(Debug, Clone, PartialEq)]
pub enum Kind {
    /// `f(t) = e^t`.
    Exponential,
    /// `f(t) = (1 + t)^p`, `p > 1`.
    Power { p: f64 },
    /// `f(t) = (1 - t)^{-q}` on `[0, 1)`.
    SingularMems { q: f64 },
    /// `f(t) = f_base(t^p)` for a regular base.
    PowerComposite { base: Box<Kind>, p: f64 },
}

impl Kind {
    fn is_regular(&self) -> bool {
        !matches!(self, Kind::SingularMems { .. })
    }

    /// `ln f(t)`; may be `+inf` beyond the representable range.
    fn ln_f(&self, t: f64) -> f64 {
        match self {
            Kind::Exponential => t,
            Kind::Power { p } => p * t.ln_1p(),
            Kind::SingularMems { q } => -q * (-t).ln_1p(),
            Kind::PowerComposite { base, p } => base.ln_f(t.powf(*p)),
        }
    }

    /// `f'(t) / f(t)`.
    fn dlog_f(&self, t: f64) -> f64 {
        match self {
            Kind::Exponential => 1.0,
            Kind::Power { p } => p / (1.0 + t),
            Kind::SingularMems { q } => q / (1.0 - t),
            Kind::PowerComposite { base, p } => {
                if t == 0.0 {
                    if *p == 1.0 {
                        base.dlog_f(0.0)
                    } else {
                        0.0
                    }
                } else {
                    base.dlog_f(t.powf(*p)) * p * t.powf(p - 1.0)
                }
            }
        }
    }

    fn describe(&self) -> String {
        match self {
            Kind::Exponential => "exp".to_string(),
            Kind::Power { p } => format!("power(p={p})"),
            Kind::SingularMems { q } => format!("mems(q={q})"),
            Kind::PowerComposite { base, p } => format!("{}∘t^{p}", base.describe()),
        }
    }
}

/// Supremum of `t / f(t)` over `(0, a_f)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupRatio {
    pub value: f64,
    pub argmax: f64,
    /// `false` when the supremum is only approached at the domain endpoint.
    pub attained: bool,
}

/// Cumulative table of `F` for kinds without a closed-form primitive.
#[derive(Debug)]
struct PrimitiveTable {
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
    /// Estimate of the neglected tail `∫_T^∞ ds / f(s)`.
    truncation: f64,
}

/// A nonlinearity with its cached integral constants.
#[derive(Clone)]
pub struct Nonlinearity {
    kind: Kind,
    a_f: f64,
    f_total: f64,
    sup: SupRatio,
    table: Option<Arc<PrimitiveTable>>,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("kind", &self.kind)
            .field("a_f", &self.a_f)
            .field("f_total", &self.f_total)
            .field("sup", &self.sup)
            .finish()
    }
}

impl PartialEq for Nonlinearity {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.kind.describe())
    }
}

impl Nonlinearity {
    pub fn exponential() -> Self {
        Nonlinearity {
            kind: Kind::Exponential,
            a_f: f64::INFINITY,
            f_total: 1.0,
            sup: SupRatio {
                value: (-1f64).exp(),
                argmax: 1.0,
                attained: true,
            },
            table: None,
        }
    }

    /// `(1 + t)^p` with `p > 1` (for `p ≤ 1` the primitive diverges).
    pub fn power(p: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::domain(format!("power exponent must satisfy p > 1, got {p}")));
        }
        let t_hat = 1.0 / (p - 1.0);
        Ok(Nonlinearity {
            kind: Kind::Power { p },
            a_f: f64::INFINITY,
            f_total: 1.0 / (p - 1.0),
            sup: SupRatio {
                value: t_hat * (-p * t_hat.ln_1p()).exp(),
                argmax: t_hat,
                attained: true,
            },
            table: None,
        })
    }

    /// `(1 - t)^{-q}` with `q > 1`, singular at `t = 1`.
    pub fn mems(q: f64) -> Result<Self> {
        if !(q > 1.0) || !q.is_finite() {
            return Err(Error::domain(format!("MEMS exponent must satisfy q > 1, got {q}")));
        }
        let t_hat = 1.0 / (q + 1.0);
        Ok(Nonlinearity {
            kind: Kind::SingularMems { q },
            a_f: 1.0,
            f_total: 1.0 / (q + 1.0),
            sup: SupRatio {
                value: t_hat * (q / (q + 1.0)).powf(q),
                argmax: t_hat,
                attained: true,
            },
            table: None,
        })
    }

    /// `f_p(t) = f(t^p)`. Composing a composite multiplies the exponents.
    pub fn compose_power(&self, p: f64) -> Result<Self> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::domain(format!("composition exponent must satisfy p >= 1, got {p}")));
        }
        if !self.kind.is_regular() {
            return Err(Error::domain("power composition requires a regular base nonlinearity"));
        }
        let kind = match &self.kind {
            Kind::PowerComposite { base, p: inner } => Kind::PowerComposite {
                base: base.clone(),
                p: inner * p,
            },
            base => Kind::PowerComposite {
                base: Box::new(base.clone()),
                p,
            },
        };
        let table = build_table(&kind);
        let f_total = *table.cumulative.last().expect("table has nodes");
        let mut nl = Nonlinearity {
            kind,
            a_f: f64::INFINITY,
            f_total,
            sup: SupRatio {
                value: f64::NAN,
                argmax: f64::NAN,
                attained: false,
            },
            table: Some(Arc::new(table)),
        };
        nl.sup = nl.search_sup_ratio();
        Ok(nl)
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    /// Domain endpoint `a_f` (`+inf` for regular kinds).
    pub fn a_f(&self) -> f64 {
        self.a_f
    }

    /// `F(a_f)`.
    pub fn f_total(&self) -> f64 {
        self.f_total
    }

    pub fn is_singular(&self) -> bool {
        self.a_f.is_finite()
    }

    /// Tail of `∫ ds/f` neglected by the tabulated primitive (zero for closed forms).
    pub fn truncation_error(&self) -> f64 {
        self.table.as_ref().map_or(0.0, |t| t.truncation)
    }

    pub fn sup_ratio(&self) -> SupRatio {
        self.sup
    }

    /// `inf_{0<t<a_f} f(t)/t` and its minimizer; the reciprocal of [`Self::sup_ratio`].
    pub fn inf_f_over_t(&self) -> (f64, f64) {
        (1.0 / self.sup.value, self.sup.argmax)
    }

    /// `f(0)`.
    pub fn f0(&self) -> f64 {
        self.kind.ln_f(0.0).exp()
    }

    fn check_f_domain(&self, t: f64) -> Result<()> {
        let ok = match self.kind {
            Kind::SingularMems { .. } => (0.0..=self.a_f - SINGULAR_EVAL_GUARD).contains(&t),
            _ => t >= 0.0 && t < self.a_f,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("f({t}) outside [0, a_f) for {self}")))
        }
    }

    /// `f(t)`, checked.
    pub fn eval_f(&self, t: f64) -> Result<f64> {
        self.check_f_domain(t)?;
        let v = self.f_unchecked(t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Overflow(format!("f({t}) overflows for {self}")))
        }
    }

    /// `f'(t)`, checked.
    pub fn eval_fprime(&self, t: f64) -> Result<f64> {
        self.check_f_domain(t)?;
        let v = self.fprime_unchecked(t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Overflow(format!("f'({t}) overflows for {self}")))
        }
    }

    /// `f(t)` without domain checks; `+inf` or NaN outside the domain.
    #[inline]
    pub fn f_unchecked(&self, t: f64) -> f64 {
        match self.kind {
            Kind::Exponential => t.exp(),
            Kind::Power { p } => (1.0 + t).powf(p),
            Kind::SingularMems { q } => (1.0 - t).powf(-q),
            Kind::PowerComposite { .. } => self.kind.ln_f(t).exp(),
        }
    }

    #[inline]
    pub fn fprime_unchecked(&self, t: f64) -> f64 {
        match self.kind {
            Kind::Exponential => t.exp(),
            Kind::Power { p } => p * (1.0 + t).powf(p - 1.0),
            Kind::SingularMems { q } => q * (1.0 - t).powf(-q - 1.0),
            Kind::PowerComposite { .. } => {
                let d = self.kind.dlog_f(t);
                if d == 0.0 {
                    0.0
                } else {
                    (self.kind.ln_f(t) + d.ln()).exp()
                }
            }
        }
    }

    /// `1 / f(t)`, underflowing gracefully to zero.
    #[inline]
    fn recip_f(&self, t: f64) -> f64 {
        (-self.kind.ln_f(t)).exp()
    }

    /// `F(t) = ∫₀ᵗ ds / f(s)` for `t ∈ [0, a_f]`.
    #[allow(non_snake_case)]
    pub fn eval_F(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.a_f) {
            return Err(Error::domain(format!("F({t}) outside [0, a_f] for {self}")));
        }
        Ok(self.primitive(t))
    }

    /// `F(t)` without the domain check.
    pub fn primitive(&self, t: f64) -> f64 {
        match (&self.kind, &self.table) {
            (Kind::Exponential, _) => -(-t).exp_m1(),
            (Kind::Power { p }, _) => -((1.0 - p) * t.ln_1p()).exp_m1() / (p - 1.0),
            (Kind::SingularMems { q }, _) => {
                if t >= 1.0 {
                    1.0 / (q + 1.0)
                } else {
                    -((q + 1.0) * (-t).ln_1p()).exp_m1() / (q + 1.0)
                }
            }
            (Kind::PowerComposite { .. }, Some(table)) => {
                let nodes = &table.nodes;
                if t >= *nodes.last().expect("nonempty") {
                    return self.f_total;
                }
                let k = nodes.partition_point(|&s| s <= t) - 1;
                table.cumulative[k] + self.panel_integral(nodes[k], t)
            }
            (Kind::PowerComposite { .. }, None) => unreachable!("composite kinds carry a table"),
        }
    }

    /// Composite Simpson rule for `∫_a^b ds / f(s)` inside one table cell.
    fn panel_integral(&self, a: f64, b: f64) -> f64 {
        const SUB: usize = 8;
        if b <= a {
            return 0.0;
        }
        let h = (b - a) / SUB as f64;
        let mut acc = self.recip_f(a) + self.recip_f(b);
        for i in 1..SUB {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * self.recip_f(a + h * i as f64);
        }
        acc * h / 3.0
    }

    /// `F⁻¹(y)` for `y ∈ [0, F_total]`; `F⁻¹(F_total) = a_f`.
    #[allow(non_snake_case)]
    pub fn eval_Finv(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0 && y <= self.f_total) {
            return Err(Error::domain(format!(
                "F^-1({y}) outside [0, {}] for {self}",
                self.f_total
            )));
        }
        Ok(self.primitive_inv(y))
    }

    /// `F⁻¹` without range checks; callers guarantee `0 ≤ y ≤ F_total`.
    #[inline]
    pub fn primitive_inv(&self, y: f64) -> f64 {
        match (&self.kind, &self.table) {
            (Kind::Exponential, _) => -(-y).ln_1p(),
            (Kind::Power { p }, _) => (-(-(p - 1.0) * y).ln_1p() / (p - 1.0)).exp_m1(),
            (Kind::SingularMems { q }, _) => -((-(q + 1.0) * y).ln_1p() / (q + 1.0)).exp_m1(),
            (Kind::PowerComposite { .. }, Some(table)) => self.table_inverse(table, y),
            (Kind::PowerComposite { .. }, None) => unreachable!("composite kinds carry a table"),
        }
    }

    fn table_inverse(&self, table: &PrimitiveTable, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if y >= self.f_total {
            return self.a_f;
        }
        let cum = &table.cumulative;
        let k = (cum.partition_point(|&c| c <= y) - 1).min(cum.len() - 2);
        let (mut lo, mut hi) = (table.nodes[k], table.nodes[k + 1]);
        let frac = (y - cum[k]) / (cum[k + 1] - cum[k]);
        let mut t = lo + frac.clamp(0.0, 1.0) * (hi - lo);
        for _ in 0..60 {
            let g = cum[k] + self.panel_integral(table.nodes[k], t) - y;
            if g > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let slope = self.recip_f(t);
            let mut next = t - g / slope;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() <= 1e-14 * t.max(1.0) || hi - lo <= 1e-14 * t.max(1.0) {
                return next;
            }
            t = next;
        }
        t
    }

    /// Golden-section search on `ln(t/f(t))`, refined by bisection on the
    /// stationarity condition `1 - t f'(t)/f(t) = 0`.
    pub fn search_sup_ratio(&self) -> SupRatio {
        let ln_ratio = |t: f64| t.ln() - self.kind.ln_f(t);
        let lo = 1e-8;
        let hi = if self.is_singular() {
            self.a_f - SINGULAR_EVAL_GUARD
        } else {
            let mut hi = 1.0_f64;
            while !(ln_ratio(hi) < ln_ratio(0.5 * hi)) && hi < 1e300 {
                hi *= 2.0;
            }
            hi
        };
        let (x0, _) = golden_section_max(ln_ratio, lo, hi, 1e-10 * hi);
        let stationarity = |t: f64| 1.0 - t * self.kind.dlog_f(t);

        let refined = if stationarity(hi) >= 0.0 {
            None
        } else {
            let mut a = x0;
            let mut b = x0;
            let mut step = 1e-6 * x0.max(1e-6);
            while stationarity(a) < 0.0 && a > lo {
                a = (a - step).max(lo);
                step *= 2.0;
            }
            step = 1e-6 * x0.max(1e-6);
            while stationarity(b) > 0.0 && b < hi {
                b = (b + step).min(hi);
                step *= 2.0;
            }
            bisect_sign(stationarity, a, b, 1e-15 * b)
        };
        match refined {
            Some(t) => SupRatio {
                value: ln_ratio(t).exp(),
                argmax: t,
                attained: true,
            },
            None => SupRatio {
                value: ln_ratio(hi).exp(),
                argmax: hi,
                attained: false,
            },
        }
    }
}

fn build_table(kind: &Kind) -> PrimitiveTable {
    let recip = |s: f64| (-kind.ln_f(s)).exp();
    // Tail of ∫ ds/f beyond T, bounded using the local growth exponent σ = T f'/f.
    let tail = |t: f64| {
        let sigma = t * kind.dlog_f(t);
        if sigma > 1.0 {
            t * recip(t) / (sigma - 1.0)
        } else {
            f64::INFINITY
        }
    };
    let mut t_end = 1.0;
    while tail(t_end) > 1e-14 && t_end < 1e200 {
        t_end *= 2.0;
    }

    const UNIFORM_PANELS: usize = 4096;
    const GEOMETRIC_RATIO: f64 = 1.01;
    let t_uniform = t_end.min(4.0);
    let mut nodes: Vec<f64> = (0..=UNIFORM_PANELS)
        .map(|i| t_uniform * i as f64 / UNIFORM_PANELS as f64)
        .collect();
    let mut s = t_uniform;
    while s < t_end {
        s = (s * GEOMETRIC_RATIO).min(t_end);
        nodes.push(s);
    }

    let mut cumulative = Vec::with_capacity(nodes.len());
    cumulative.push(0.0);
    let mut acc = 0.0;
    for w in nodes.windows(2) {
        acc += adaptive_simpson(recip, w[0], w[1], 1e-13).value;
        cumulative.push(acc);
    }
    PrimitiveTable {
        nodes,
        cumulative,
        truncation: tail(t_end),
    }
}

/// Serializable description of a nonlinearity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NonlinearitySpec {
    Exp,
    Power { p: f64 },
    Mems { q: f64 },
    PowerComposite {
        p: f64,
        #[serde(default = "default_base")]
        base: Box<NonlinearitySpec>,
    },
}

fn default_base() -> Box<NonlinearitySpec> {
    Box::new(NonlinearitySpec::Exp)
}

impl NonlinearitySpec {
    pub fn build(&self) -> Result<Nonlinearity> {
        match self {
            NonlinearitySpec::Exp => Ok(Nonlinearity::exponential()),
            NonlinearitySpec::Power { p } => Nonlinearity::power(*p),
            NonlinearitySpec::Mems { q } => Nonlinearity::mems(*q),
            NonlinearitySpec::PowerComposite { p, base } => base.build()?.compose_power(*p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn all_kinds() -> &'static [Nonlinearity] {
        static KINDS: std::sync::OnceLock<Vec<Nonlinearity>> = std::sync::OnceLock::new();
        KINDS.get_or_init(build_kinds)
    }

    fn build_kinds() -> Vec<Nonlinearity> {
        let e = Nonlinearity::exponential();
        vec![
            e.clone(),
            Nonlinearity::power(2.0).unwrap(),
            Nonlinearity::power(3.5).unwrap(),
            Nonlinearity::mems(2.0).unwrap(),
            Nonlinearity::mems(3.0).unwrap(),
            e.compose_power(1.0).unwrap(),
            e.compose_power(2.0).unwrap(),
            e.compose_power(8.0).unwrap(),
            Nonlinearity::power(2.0).unwrap().compose_power(2.0).unwrap(),
        ]
    }

    #[test]
    fn eval_f_examples() {
        let e = Nonlinearity::exponential();
        assert_eq!(e.eval_f(0.0).unwrap(), 1.0);
        let m = Nonlinearity::mems(2.0).unwrap();
        assert_relative_eq!(m.eval_f(1.0 / 3.0).unwrap(), 9.0 / 4.0, max_relative = 1e-15);
        let c = e.compose_power(2.0).unwrap();
        assert_relative_eq!(c.eval_f(2.0).unwrap(), 4f64.exp(), max_relative = 1e-14);
    }

    #[test]
    fn eval_f_domain_errors() {
        let m = Nonlinearity::mems(2.0).unwrap();
        assert!(matches!(m.eval_f(1.0), Err(Error::Domain(_))));
        assert!(matches!(m.eval_f(1.0 - 1e-13), Err(Error::Domain(_))));
        assert!(m.eval_f(1.0 - 1e-11).is_ok());
        assert!(matches!(Nonlinearity::exponential().eval_f(-1e-300), Err(Error::Domain(_))));
        assert!(matches!(Nonlinearity::exponential().eval_f(1000.0), Err(Error::Overflow(_))));
    }

    #[test]
    fn primitive_examples() {
        let e = Nonlinearity::exponential();
        assert_eq!(e.eval_F(f64::INFINITY).unwrap(), 1.0);
        assert_eq!(e.eval_F(0.0).unwrap(), 0.0);
        let m = Nonlinearity::mems(2.0).unwrap();
        assert_relative_eq!(m.eval_F(1.0).unwrap(), 1.0 / 3.0, max_relative = 1e-15);
        assert!(m.eval_F(1.0 + 1e-9).is_err());
        assert!(e.eval_F(-0.1).is_err());
    }

    #[test]
    fn inverse_examples() {
        let e = Nonlinearity::exponential();
        assert_relative_eq!(e.eval_Finv(1.0 - (-1f64).exp()).unwrap(), 1.0, max_relative = 1e-14);
        let m = Nonlinearity::mems(2.0).unwrap();
        assert_relative_eq!(m.eval_Finv(1.0 / 3.0).unwrap(), 1.0, max_relative = 1e-12);
        for nl in all_kinds() {
            assert_eq!(nl.eval_Finv(0.0).unwrap(), 0.0, "{nl}");
            assert!(nl.eval_Finv(nl.f_total() * 1.01).is_err());
        }
    }

    #[test]
    fn sup_ratio_closed_forms() {
        let e = Nonlinearity::exponential().sup_ratio();
        assert_relative_eq!(e.value, (-1f64).exp(), max_relative = 1e-15);
        assert_eq!(e.argmax, 1.0);
        let m = Nonlinearity::mems(2.0).unwrap().sup_ratio();
        assert_relative_eq!(m.value, 4.0 / 27.0, max_relative = 1e-15);
        assert_relative_eq!(m.argmax, 1.0 / 3.0, max_relative = 1e-15);
        let p = Nonlinearity::power(2.0).unwrap().sup_ratio();
        assert_relative_eq!(p.value, 0.25, max_relative = 1e-15);
        assert_relative_eq!(p.argmax, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn numeric_search_matches_closed_forms() {
        for nl in all_kinds() {
            let closed = nl.sup_ratio();
            let searched = nl.search_sup_ratio();
            assert!(searched.attained, "{nl}");
            assert_relative_eq!(searched.value, closed.value, max_relative = 1e-12);
            assert_relative_eq!(searched.argmax, closed.argmax, max_relative = 1e-8);
        }
    }

    #[test]
    fn sup_ratio_times_f_at_argmax() {
        for nl in all_kinds() {
            let s = nl.sup_ratio();
            let lhs = s.value * nl.eval_f(s.argmax).unwrap();
            assert_relative_eq!(lhs, s.argmax, max_relative = 1e-8);
        }
    }

    #[test]
    fn sup_ratio_bounds_grid_ratios() {
        for nl in all_kinds() {
            let s = nl.sup_ratio();
            let hi = if nl.is_singular() { 1.0 - 1e-6 } else { 20.0 * s.argmax.max(1.0) };
            for i in 1..=1000 {
                let t = hi * i as f64 / 1000.0;
                let r = t / nl.f_unchecked(t);
                assert!(r <= s.value + 1e-8, "{nl}: t={t} ratio={r} sup={}", s.value);
            }
        }
    }

    #[test]
    fn inf_f_over_t_values() {
        let (v, t) = Nonlinearity::exponential().inf_f_over_t();
        assert_relative_eq!(v, std::f64::consts::E, max_relative = 1e-15);
        assert_eq!(t, 1.0);
        let (v, t) = Nonlinearity::mems(2.0).unwrap().inf_f_over_t();
        assert_relative_eq!(v, 27.0 / 4.0, max_relative = 1e-14);
        assert_relative_eq!(t, 1.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn composite_gaussian_total() {
        let c = Nonlinearity::exponential().compose_power(2.0).unwrap();
        // Oracle: erf-free value of ∫₀^∞ e^{-s²} ds.
        assert_relative_eq!(c.f_total(), std::f64::consts::PI.sqrt() / 2.0, max_relative = 1e-11);
        assert!(c.truncation_error() < 1e-13);
    }

    #[test]
    fn composite_identity_exponent_matches_base() {
        let e = Nonlinearity::exponential();
        let c = e.compose_power(1.0).unwrap();
        assert_relative_eq!(c.f_total(), 1.0, max_relative = 1e-12);
        for i in 0..=200 {
            let t = 0.05 * i as f64;
            assert_relative_eq!(c.eval_f(t).unwrap(), e.eval_f(t).unwrap(), max_relative = 1e-13);
            assert_relative_eq!(c.eval_fprime(t).unwrap(), e.eval_fprime(t).unwrap(), max_relative = 1e-13);
            assert!((c.eval_F(t).unwrap() - e.eval_F(t).unwrap()).abs() < 1e-12);
        }
        let s = c.sup_ratio();
        assert_relative_eq!(s.value, (-1f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn composite_limits_in_p() {
        let e = Nonlinearity::exponential();
        let mut prev_gap = f64::INFINITY;
        let mut prev_sup_gap = f64::INFINITY;
        for p in [2.0, 4.0, 8.0, 16.0] {
            let c = e.compose_power(p).unwrap();
            // ∫₀^∞ e^{-s^p} ds = Γ(1 + 1/p), approaching 1 from below.
            let gap = (c.f_total() - 1.0).abs();
            assert!(gap < prev_gap, "p={p}");
            prev_gap = gap;
            let s = c.sup_ratio();
            let expected = (-1.0 / p) * p.ln();
            assert_relative_eq!(s.argmax, expected.exp(), max_relative = 1e-9);
            assert_relative_eq!(s.value, (expected - 1.0 / p).exp(), max_relative = 1e-11);
            let sup_gap = 1.0 - s.value;
            assert!(sup_gap < prev_sup_gap);
            prev_sup_gap = sup_gap;
        }
        assert!(prev_sup_gap < 0.25);
    }

    #[test]
    fn composite_rejects_singular_base() {
        assert!(Nonlinearity::mems(2.0).unwrap().compose_power(2.0).is_err());
        assert!(Nonlinearity::exponential().compose_power(0.5).is_err());
    }

    #[test]
    fn nested_composition_multiplies_exponents() {
        let e = Nonlinearity::exponential();
        let a = e.compose_power(2.0).unwrap().compose_power(3.0).unwrap();
        let b = e.compose_power(6.0).unwrap();
        assert_eq!(a.kind(), b.kind());
    }

    #[test]
    fn constructor_validation() {
        assert!(Nonlinearity::power(1.0).is_err());
        assert!(Nonlinearity::mems(1.0).is_err());
        assert!(Nonlinearity::mems(f64::NAN).is_err());
    }

    #[test]
    fn spec_roundtrip() {
        let json = r#"{"kind":"power-composite","p":4,"base":{"kind":"exp"}}"#;
        let spec: NonlinearitySpec = serde_json::from_str(json).unwrap();
        let nl = spec.build().unwrap();
        assert_eq!(
            nl.kind(),
            &Kind::PowerComposite {
                base: Box::new(Kind::Exponential),
                p: 4.0
            }
        );
        let back = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<NonlinearitySpec>(&back).unwrap(), spec);
        let mems: NonlinearitySpec = serde_json::from_str(r#"{"kind":"mems","q":2}"#).unwrap();
        assert_eq!(mems.build().unwrap().f_total(), 1.0 / 3.0);
    }

    proptest! {
        #[test]
        fn inverse_roundtrip(idx in 0usize..9, frac in 0.0f64..0.95) {
            let nl = &all_kinds()[idx];
            // Regular kinds: cover [0, 0.95 * T] for a representative span T.
            let t = if nl.is_singular() { frac } else { frac * 12.0 };
            let y = nl.eval_F(t).unwrap();
            let back = nl.eval_Finv(y).unwrap();
            // F is flat where 1/f underflows, so compare in F-space there.
            if nl.recip_f(t) > 1e-6 {
                prop_assert!((back - t).abs() <= 1e-10 * t.max(1.0), "{} t={} back={}", nl, t, back);
            } else {
                prop_assert!((nl.eval_F(back).unwrap() - y).abs() <= 1e-15);
            }
        }

        #[test]
        fn monotone_and_convex(idx in 0usize..9, a in 0.0f64..0.95, b in 0.0f64..0.95) {
            let nl = &all_kinds()[idx];
            let span = match nl.kind() {
                Kind::SingularMems { .. } => 1.0,
                Kind::PowerComposite { .. } => 1.5,
                _ => 3.0,
            };
            let (t1, t2) = if a <= b { (a * span, b * span) } else { (b * span, a * span) };
            let f1 = nl.eval_f(t1).unwrap();
            let f2 = nl.eval_f(t2).unwrap();
            let fm = nl.eval_f(0.5 * (t1 + t2)).unwrap();
            prop_assert!(f2 >= f1 * (1.0 - 1e-14));
            prop_assert!(fm <= 0.5 * (f1 + f2) * (1.0 + 1e-14));
            prop_assert!(nl.eval_F(t2).unwrap() >= nl.eval_F(t1).unwrap());
        }
    }
}
