//! Continuous Robin heat kernel on `[0, ∞)` for `∂_T = ½∂_X²`, `∂_X 𝒫|_{X=0} = A 𝒫`.

use std::f64::consts::PI;

use crate::quadrature::adaptive;

pub fn gaussian(t: f64, x: f64) -> f64 {
    (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// Scaled complementary error function `e^{w²} erfc(w)` for `w >= 0`.
pub fn erfcx(w: f64) -> f64 {
    if w < 5.0 {
        return (w * w).exp() * libm::erfc(w);
    }
    // erfc(w) e^{w²} √π = 1 / (w + (1/2) / (w + 1 / (w + (3/2) / (w + ...))))
    let mut frac = w;
    for k in (1..=60).rev() {
        frac = w + 0.5 * k as f64 / frac;
    }
    1.0 / (frac * PI.sqrt())
}

/// `P_T(X - Y) + P_T(X + Y) - A erfcx(w) e^{-(X+Y)²/(2T)}` with `w = (X + Y + A T)/√(2T)`.
pub fn continuous_halfline_kernel(t: f64, x: f64, y: f64, a: f64) -> f64 {
    let s = x + y;
    let reflection = gaussian(t, x - y) + gaussian(t, s);
    if a == 0.0 {
        return reflection;
    }
    let w = (s + a * t) / (2.0 * t).sqrt();
    reflection - a * erfcx(w) * (-s * s / (2.0 * t)).exp()
}

/// Same kernel with the boundary integral `2A ∫_0^∞ P_T(X + Y + u) e^{-Au} du` done by quadrature.
pub fn continuous_halfline_kernel_quadrature(t: f64, x: f64, y: f64, a: f64) -> f64 {
    let s = x + y;
    let reflection = gaussian(t, x - y) + gaussian(t, s);
    if a == 0.0 {
        return reflection;
    }
    let upper = 40.0 * t.sqrt() + 40.0 / a.max(1e-3);
    let (v, _) = adaptive(&mut |u| gaussian(t, s + u) * (-a * u).exp(), 0.0, upper, 1e-15, 40);
    reflection - 2.0 * a * v
}

/// Richardson-extrapolated one-sided derivative in `X` at `X = 0`.
pub fn boundary_slope(t: f64, y: f64, a: f64, h: f64) -> f64 {
    let d = |h: f64| {
        let f0 = continuous_halfline_kernel(t, 0.0, y, a);
        let f1 = continuous_halfline_kernel(t, h, y, a);
        let f2 = continuous_halfline_kernel(t, 2.0 * h, y, a);
        (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)
    };
    (4.0 * d(0.5 * h) - d(h)) / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfcx_branches_meet() {
        let lo = (25.0f64).exp() * libm::erfc(5.0);
        assert!((erfcx(5.0) - lo).abs() < 1e-12 * lo);
        assert!((erfcx(0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for &(t, x, y, a) in &[(0.3, 0.0, 0.2, 1.0), (2.0, 1.0, 0.5, 3.0), (1.0, 0.1, 0.1, 0.2)] {
            let u = continuous_halfline_kernel(t, x, y, a);
            let v = continuous_halfline_kernel_quadrature(t, x, y, a);
            assert!((u - v).abs() < 1e-12, "{u} {v}");
        }
    }
}
