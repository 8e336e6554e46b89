//! Gauss-Legendre rules and adaptive panel integration.

use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule on `[-1, 1]` by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(mid + half * x)).sum::<f64>() * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

/// Adaptive bisection with a pair of Gauss-Legendre rules; returns `(value, error estimate)`.
pub fn adaptive(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64, max_depth: usize) -> (f64, f64) {
    let rule = GaussLegendre::new(15);
    let whole = rule.integrate(f, a, b);
    adaptive_rec(f, &rule, a, b, whole, tol, max_depth)
}

fn adaptive_rec(
    f: &mut impl FnMut(f64) -> f64,
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> (f64, f64) {
    let m = 0.5 * (a + b);
    let left = rule.integrate(f, a, m);
    let right = rule.integrate(f, m, b);
    let err = (left + right - whole).abs();
    if err <= tol || depth == 0 {
        return (left + right, err);
    }
    let (l, el) = adaptive_rec(f, rule, a, m, left, 0.5 * tol, depth - 1);
    let (r, er) = adaptive_rec(f, rule, m, b, right, 0.5 * tol, depth - 1);
    (l + r, el + er)
}

/// Panels `[0, h], [h, 2h], [2h, 4h], ...` up to `t_max`, fine near the origin.
pub fn dyadic_panels(first: f64, t_max: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut lo = 0.0;
    let mut hi = first.min(t_max);
    while lo < t_max {
        out.push((lo, hi));
        lo = hi;
        hi = (2.0 * hi).min(t_max);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_is_exact_for_polynomials() {
        let rule = GaussLegendre::new(10);
        let v = rule.integrate(&mut |x| x.powi(19) + 3.0 * x.powi(6), -1.0, 1.0);
        assert!((v - 6.0 / 7.0).abs() < 1e-14);
        assert!((rule.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_root_singularity() {
        let (v, _) = adaptive(&mut |t: f64| 1.0 / t.sqrt(), 0.0, 1.0, 1e-12, 60);
        assert!((v - 2.0).abs() < 1e-9);
    }
}
