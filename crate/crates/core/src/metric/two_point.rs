//! Closed-form distance on two sites with constant symmetric rates.

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // P_n(x) and P_n'(x) by the three-term recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let step = pn / dp;
            x -= step;
            if step.abs() < 1e-16 {
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

const ORDER: usize = 20;
/// Beyond `|s| = 40` the transformed integrand is below `e^{-76}`.
const S_MAX: f64 = 40.0;

/// `√(s / tanh s) · sech² s`, the integrand after `r = tanh s`.
fn transformed(s: f64) -> f64 {
    let ratio = if s.abs() < 1e-4 { 1.0 + s * s / 3.0 } else { s / s.tanh() };
    let sech = 1.0 / s.cosh();
    ratio.sqrt() * sech * sech
}

fn fixed(rule: &(Vec<f64>, Vec<f64>), a: f64, b: f64) -> f64 {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    rule.0.iter().zip(&rule.1).map(|(x, w)| w * transformed(c + h * x)).sum::<f64>() * h
}

fn adaptive(rule: &(Vec<f64>, Vec<f64>), a: f64, b: f64, whole: f64, depth: usize) -> f64 {
    let m = 0.5 * (a + b);
    let (l, r) = (fixed(rule, a, m), fixed(rule, m, b));
    if depth == 0 || ((l + r) - whole).abs() <= 1e-15 * (1.0 + (l + r).abs()) {
        return l + r;
    }
    adaptive(rule, a, m, l, depth - 1) + adaptive(rule, m, b, r, depth - 1)
}

/// Signed `∫_lo^hi √(arctanh r / r) dr` for `-1 ≤ lo, hi ≤ 1`.
pub fn two_point_integral(lo: f64, hi: f64) -> f64 {
    let to_s = |r: f64| r.clamp(-1.0, 1.0).atanh().clamp(-S_MAX, S_MAX);
    let (a, b) = (to_s(lo), to_s(hi));
    if a == b {
        return 0.0;
    }
    let rule = gauss_legendre(ORDER);
    // split at the origin so each piece is smooth and monotone in magnitude
    let pieces: Vec<(f64, f64)> =
        if a < 0.0 && b > 0.0 || a > 0.0 && b < 0.0 { vec![(a, 0.0), (0.0, b)] } else { vec![(a, b)] };
    pieces.into_iter().map(|(x, y)| adaptive(&rule, x, y, fixed(&rule, x, y), 40)).sum()
}

/// Distance between `(a, 1−a)` and `(b, 1−b)` for a two-site chain jumping at
/// constant rate `p` in both directions:
/// `(1/√(2p)) |∫_{1−2a}^{1−2b} √(arctanh r / r) dr|`.
pub fn two_point_exact(p: f64, a: f64, b: f64) -> Result<f64> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::Domain(format!("rate must be positive, got {p}")));
    }
    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
        return Err(Error::Domain(format!("masses must lie in [0, 1], got {a}, {b}")));
    }
    let (lo, hi) = if a <= b { (1.0 - 2.0 * b, 1.0 - 2.0 * a) } else { (1.0 - 2.0 * a, 1.0 - 2.0 * b) };
    Ok(two_point_integral(lo, hi) / (2.0 * p).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Simpson on `r = sin θ`, where the integrand
    /// `√(arctanh(sin θ)/sin θ)·cos θ` is continuous and vanishes at `θ = ±π/2`.
    fn simpson_oracle(lo: f64, hi: f64) -> f64 {
        fn g(t: f64) -> f64 {
            let r = t.sin();
            let c = t.cos();
            if c <= 0.0 || r.abs() >= 1.0 {
                return 0.0;
            }
            let ratio = if r.abs() < 1e-6 { 1.0 + r * r / 3.0 } else { r.atanh() / r };
            ratio.sqrt() * c
        }
        fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
            (b - a) / 6.0 * (fa + 4.0 * fm + fb)
        }
        #[allow(clippy::too_many_arguments)]
        fn rec(a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (g(lm), g(rm));
            let left = simpson(a, m, fa, flm, fm);
            let right = simpson(m, b, fm, frm, fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
        let (a, b) = (lo.asin(), hi.asin());
        let (fa, fm, fb) = (g(a), g(0.5 * (a + b)), g(b));
        rec(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), 1e-12, 50)
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(ORDER);
        for k in 0..(2 * ORDER) {
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
            assert!((q - exact).abs() < 1e-13, "k={k}");
        }
    }

    #[test]
    fn full_range_constant_agrees_between_quadratures() {
        let gl = two_point_integral(-1.0, 1.0);
        let simpson = simpson_oracle(-1.0, 1.0);
        assert!((gl - simpson).abs() < 1e-6, "gl={gl} simpson={simpson}");
    }

    #[test]
    fn partial_ranges_agree_between_quadratures() {
        for (lo, hi) in [(-0.8, 0.6), (0.2, 0.999), (-1.0, -0.3), (0.0, 1.0), (-0.5, 0.5)] {
            let gl = two_point_integral(lo, hi);
            let s = simpson_oracle(lo, hi);
            assert!((gl - s).abs() < 1e-6, "[{lo},{hi}] gl={gl} simpson={s}");
        }
    }

    #[test]
    fn examples() {
        assert_eq!(two_point_exact(1.0, 0.3, 0.3).unwrap(), 0.0);
        for (a, b) in [(0.1, 0.7), (0.0, 1.0), (0.45, 0.5)] {
            assert_eq!(two_point_exact(2.0, a, b).unwrap(), two_point_exact(2.0, b, a).unwrap());
        }
        // small displacement: the integrand is ≈ 1 near r = 0
        let near = two_point_exact(1.0, 0.5, 0.5 + 1e-4).unwrap();
        assert!((near - 2e-4 / 2f64.sqrt()).abs() < 1e-10);
        // scaling in the rate
        let (x, y) = (two_point_exact(1.0, 0.2, 0.9).unwrap(), two_point_exact(4.0, 0.2, 0.9).unwrap());
        assert!((x - 2.0 * y).abs() < 1e-14);
        assert!(two_point_exact(0.0, 0.2, 0.3).is_err());
        assert!(two_point_exact(1.0, 1.2, 0.3).is_err());
    }
}
