//! Scalar numerical kernels: adaptive Simpson quadrature, golden-section
//! search and sign bisection.

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Sum of the local Richardson error estimates of the accepted panels.
    pub error_estimate: f64,
    pub evaluations: usize,
}

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to relative tolerance
/// `rel_tol` (with an absolute floor of `rel_tol * 1e-3` times the coarse
/// estimate scale, so integrals that vanish do not recurse forever).
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Quadrature {
    if a == b {
        return Quadrature {
            value: 0.0,
            error_estimate: 0.0,
            evaluations: 0,
        };
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };

    let fa = f(lo);
    let fb = f(hi);
    let m = 0.5 * (lo + hi);
    let fm = f(m);
    let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);

    // Scale from a 9-point composite rule so an accidental zero at the three
    // initial nodes does not make the tolerance vanish.
    let mut scale = 0.0;
    for k in 0..=8 {
        let x = lo + (hi - lo) * k as f64 / 8.0;
        scale += f(x).abs();
    }
    scale *= (hi - lo) / 9.0;
    let tol = (rel_tol * scale).max(f64::MIN_POSITIVE);

    let mut evals = 3 + 9;
    let mut err = 0.0;
    let value = recurse(&f, lo, hi, fa, fm, fb, whole, tol, MAX_DEPTH, &mut evals, &mut err);
    Quadrature {
        value: sign * value,
        error_estimate: err,
        evaluations: evals,
    }
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    evals: &mut usize,
    err: &mut f64,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    *evals += 2;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol || (m - a) <= f64::EPSILON * a.abs().max(1.0) {
        *err += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, evals, err)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, evals, err)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` with `n` points, exact for
/// polynomials of degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Three-term recurrence for P_n(x) and its derivative.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
/// Returns `(argmax, max)`, including the endpoints as candidates.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, xtol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= xtol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for x in [lo, hi] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Bisection for a sign change of `g` on `[lo, hi]`. `g(lo)` and `g(hi)` must
/// have opposite signs (zero counts as either); returns the midpoint of the
/// final bracket.
pub fn bisect_sign<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64, xtol: f64) -> Option<f64> {
    let (mut a, mut b) = (lo, hi);
    let ga = g(a);
    let gb = g(b);
    if ga == 0.0 {
        return Some(a);
    }
    if gb == 0.0 {
        return Some(b);
    }
    if ga.signum() == gb.signum() || !ga.is_finite() || !gb.is_finite() {
        return None;
    }
    let a_positive = ga > 0.0;
    for _ in 0..400 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= xtol || m == a || m == b {
            break;
        }
        let gm = g(m);
        if gm == 0.0 {
            return Some(m);
        }
        if (gm > 0.0) == a_positive {
            a = m;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simpson_polynomial_exact() {
        let q = adaptive_simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12);
        assert_relative_eq!(q.value, 0.0, epsilon = 1e-13);
        let q = adaptive_simpson(|x| x * x, 0.0, 3.0, 1e-12);
        assert_relative_eq!(q.value, 9.0, max_relative = 1e-14);
    }

    #[test]
    fn simpson_gaussian_tail() {
        let q = adaptive_simpson(|s: f64| (-s * s).exp(), 0.0, 8.0, 1e-12);
        assert_relative_eq!(q.value, std::f64::consts::PI.sqrt() / 2.0, max_relative = 1e-11);
    }

    #[test]
    fn simpson_reversed_limits() {
        let q = adaptive_simpson(f64::exp, 1.0, 0.0, 1e-12);
        assert_relative_eq!(q.value, -(1f64.exp() - 1.0), max_relative = 1e-12);
    }

    #[test]
    fn golden_finds_interior_and_endpoint() {
        let (x, v) = golden_section_max(|t| t * (-t).exp(), 0.0, 5.0, 1e-12);
        assert_relative_eq!(x, 1.0, epsilon = 1e-6);
        assert_relative_eq!(v, (-1f64).exp(), max_relative = 1e-12);
        let (x, _) = golden_section_max(|t| t, 0.0, 2.0, 1e-12);
        assert_eq!(x, 2.0);
    }

    #[test]
    fn gauss_legendre_exactness() {
        for n in 1..=20 {
            let (x, w) = gauss_legendre(n);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
            for deg in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg} q={q}");
            }
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn bisect_requires_sign_change() {
        assert!(bisect_sign(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_none());
        let r = bisect_sign(|x| 2.0 - x * x, 0.0, 2.0, 1e-15).unwrap();
        assert_relative_eq!(r, 2f64.sqrt(), max_relative = 1e-14);
    }
}
