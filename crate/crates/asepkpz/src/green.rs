//! Green's functions of the Robin Laplacian and the cancellation identities built on them.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::free::support_radius;
use crate::kernel::halfline::HalfLineKernel;
use crate::kernel::spectrum::{robin_laplacian, SpectralData};
use crate::quadrature::{adaptive, dyadic_panels};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenMatrix {
    pub mu_a: f64,
    pub mu_b: f64,
    pub values: DMatrix<f64>,
}

impl GreenMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows() - 1
    }

    pub fn symmetry_error(&self) -> f64 {
        (&self.values - self.values.transpose()).amax()
    }

    /// `‖(-Δ/2) G - I‖∞`.
    pub fn residual(&self) -> f64 {
        let op = robin_laplacian(self.n(), self.mu_a, self.mu_b);
        let size = self.values.nrows();
        (op * &self.values - DMatrix::identity(size, size)).amax()
    }
}

/// Dense inverse of `-Δ/2` with Robin ghost rows.
pub fn green_matrix(n: usize, mu_a: f64, mu_b: f64) -> Result<GreenMatrix> {
    if mu_a == 1.0 && mu_b == 1.0 {
        return Err(Error::Singular("Neumann on both ends has a zero eigenvalue".into()));
    }
    let op = robin_laplacian(n, mu_a, mu_b);
    let values = op.lu().try_inverse().ok_or_else(|| Error::Singular("Robin Laplacian not invertible".into()))?;
    Ok(GreenMatrix { mu_a, mu_b, values })
}

/// `G(0, 0) = 2(N + 1 - N μ_B) / (N + 2 - (N + 1)(μ_A + μ_B) + N μ_A μ_B)`.
pub fn green_corner_closed_form(n: usize, mu_a: f64, mu_b: f64) -> Result<f64> {
    let nf = n as f64;
    let den = nf + 2.0 - (nf + 1.0) * (mu_a + mu_b) + nf * mu_a * mu_b;
    if den == 0.0 {
        return Err(Error::Singular("zero denominator (Neumann on both ends)".into()));
    }
    Ok(2.0 * (nf + 1.0 - nf * mu_b) / den)
}

/// Half-line corner value `2 / (1 - μ)`.
pub fn green_corner_halfline(mu: f64) -> Result<f64> {
    if mu >= 1.0 {
        return Err(Error::Singular("Neumann half line has no Green's function".into()));
    }
    Ok(2.0 / (1.0 - mu))
}

/// Half-line Green's function `2(min(x, y) + 1/(1 - μ))`.
pub fn green_halfline(x: usize, y: usize, mu: f64) -> f64 {
    2.0 * (x.min(y) as f64 + 1.0 / (1.0 - mu))
}

/// Richardson extrapolation of the interval corner with `μ_B = 0` in `N, 2N, 4N`.
pub fn halfline_corner_limit(n: usize, mu_a: f64) -> Result<f64> {
    let g1 = green_corner_closed_form(n, mu_a, 0.0)?;
    let g2 = green_corner_closed_form(2 * n, mu_a, 0.0)?;
    let g4 = green_corner_closed_form(4 * n, mu_a, 0.0)?;
    let r1 = 2.0 * g2 - g1;
    let r2 = 2.0 * g4 - g2;
    Ok((4.0 * r2 - r1) / 3.0)
}

/// Corner of the inverse by a tridiagonal (Thomas) solve of `(-Δ/2) g = e_0`.
pub fn green_corner_tridiagonal(n: usize, mu_a: f64, mu_b: f64) -> f64 {
    let size = n + 1;
    let mut diag = vec![1.0; size];
    diag[0] -= 0.5 * mu_a;
    diag[n] -= 0.5 * mu_b;
    let off = -0.5;
    let mut rhs = vec![0.0; size];
    rhs[0] = 1.0;
    // eliminate from the bottom so the corner is the last unknown
    let mut d = diag.clone();
    for i in (0..n).rev() {
        let w = off / d[i + 1];
        d[i] -= w * off;
        rhs[i] -= w * rhs[i + 1];
    }
    rhs[0] / d[0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FMatrix {
    pub values: DMatrix<f64>,
    pub c: f64,
    pub diagonal_spread: f64,
    pub off_diagonal_spread: f64,
    pub green_route_gap: f64,
}

impl FMatrix {
    pub fn diagonal(&self) -> f64 {
        self.values[(0, 0)]
    }

    pub fn off_diagonal(&self) -> f64 {
        if self.values.nrows() > 1 {
            self.values[(0, 1)]
        } else {
            f64::NAN
        }
    }

    /// `max |∇⁺_x F(x, y) - (1{x+1=y} - 1{x=y})|`.
    pub fn gradient_structure_error(&self) -> f64 {
        let m = self.values.nrows();
        let mut worst: f64 = 0.0;
        for x in 0..m - 1 {
            for y in 0..m {
                let target = (x + 1 == y) as i32 as f64 - (x == y) as i32 as f64;
                worst = worst.max((self.values[(x + 1, y)] - self.values[(x, y)] - target).abs());
            }
        }
        worst
    }
}

/// `F(x, x̄) = Σ_k ∇⁺ψ_k(x) ∇⁺ψ_k(x̄) / (2λ_k)` for `x, x̄ ∈ {0, ..., N-1}`.
pub fn f_matrix(spec: &SpectralData) -> Result<FMatrix> {
    let n = spec.n;
    if spec.lambda_min() < 1e-14 {
        return Err(Error::Singular("zero eigenvalue (Neumann on both ends)".into()));
    }
    let grads = DMatrix::from_fn(n, n + 1, |x, k| {
        (spec.eigvecs[(x + 1, k)] - spec.eigvecs[(x, k)]) / (2.0 * spec.lambdas[k]).sqrt()
    });
    let values = &grads * grads.transpose();
    let g = green_matrix(n, spec.mu_a, spec.mu_b)?;
    let gv = &g.values;
    let via_green = DMatrix::from_fn(n, n, |x, y| {
        0.5 * (gv[(x + 1, y + 1)] - gv[(x + 1, y)] - gv[(x, y + 1)] + gv[(x, y)])
    });
    let green_route_gap = (&values - via_green).amax();
    let d0 = values[(0, 0)];
    let o0 = if n > 1 { values[(0, 1)] } else { d0 - 1.0 };
    let mut diagonal_spread: f64 = 0.0;
    let mut off_diagonal_spread: f64 = 0.0;
    for x in 0..n {
        for y in 0..n {
            if x == y {
                diagonal_spread = diagonal_spread.max((values[(x, y)] - d0).abs());
            } else {
                off_diagonal_spread = off_diagonal_spread.max((values[(x, y)] - o0).abs());
            }
        }
    }
    Ok(FMatrix { values, c: -o0, diagonal_spread, off_diagonal_spread, green_route_gap })
}

/// `c = 1 - F(0, 0)` with `2F(0, 0) = (1 - μ_A)² G(0, 0) + 2μ_A`.
pub fn c_closed_form(n: usize, mu_a: f64, mu_b: f64) -> Result<f64> {
    let g = green_corner_closed_form(n, mu_a, mu_b)?;
    Ok(1.0 - 0.5 * ((1.0 - mu_a).powi(2) * g + 2.0 * mu_a))
}

/// Which kernel the identity is evaluated for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelSource {
    Interval { n: usize, mu_a: f64, mu_b: f64 },
    HalfLine { mu: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyIdentityReport {
    pub x: usize,
    pub x_bar: usize,
    pub spectral: f64,
    pub quadrature: f64,
    pub tail_bound: f64,
    pub t_cut: f64,
    pub expected: f64,
}

impl KeyIdentityReport {
    pub fn route_gap(&self) -> f64 {
        (self.spectral - self.quadrature).abs()
    }
}

/// Eigen-decomposition from nalgebra, independent of the secular-equation solver.
#[derive(Debug, Clone)]
pub struct DenseKernel {
    lambdas: Vec<f64>,
    vecs: DMatrix<f64>,
}

impl DenseKernel {
    pub fn new(n: usize, mu_a: f64, mu_b: f64) -> Self {
        let eig = SymmetricEigen::new(robin_laplacian(n, mu_a, mu_b));
        Self { lambdas: eig.eigenvalues.iter().copied().collect(), vecs: eig.eigenvectors }
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambdas.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Row `p_t(x, ·)`.
    pub fn row(&self, t: f64, x: usize) -> Vec<f64> {
        let size = self.lambdas.len();
        let coef: Vec<f64> = (0..size).map(|k| self.vecs[(x, k)] * (-t * self.lambdas[k]).exp()).collect();
        (0..size).map(|y| (0..size).map(|k| coef[k] * self.vecs[(y, k)]).sum()).collect()
    }
}

/// `Σ_y ∫_0^∞ ∇⁺p_t(x, y) ∇⁺p_t(x̄, y) dt` by the spectral closed form and by time quadrature.
pub fn key_identity(source: &KernelSource, x: usize, x_bar: usize, tail_tol: f64) -> Result<KeyIdentityReport> {
    match *source {
        KernelSource::Interval { n, mu_a, mu_b } => {
            if x >= n || x_bar >= n {
                return Err(Error::InvalidParameter("x, x̄ must lie in {0, ..., N-1}".into()));
            }
            let spec = crate::kernel::spectrum::solve_interval_spectrum(n, mu_a, mu_b)?;
            let f = f_matrix(&spec)?;
            let spectral = f.values[(x, x_bar)];
            let c = c_closed_form(n, mu_a, mu_b)?;
            let expected = if x == x_bar { 1.0 - c } else { -c };

            let dk = DenseKernel::new(n, mu_a, mu_b);
            let lam = dk.lambda_min();
            let grad_weight: f64 = (0..=n)
                .map(|k| {
                    ((dk.vecs[(x + 1, k)] - dk.vecs[(x, k)]) * (dk.vecs[(x_bar + 1, k)] - dk.vecs[(x_bar, k)])).abs()
                })
                .sum();
            let t_cut = ((grad_weight / (2.0 * lam * tail_tol)).ln() / (2.0 * lam)).max(1.0);
            let tail_bound = grad_weight * (-2.0 * lam * t_cut).exp() / (2.0 * lam);
            let mut integrand = |t: f64| {
                let (r0, r1) = (dk.row(t, x), dk.row(t, x + 1));
                let (s0, s1) = if x_bar == x { (r0.clone(), r1.clone()) } else { (dk.row(t, x_bar), dk.row(t, x_bar + 1)) };
                (0..=n).map(|y| (r1[y] - r0[y]) * (s1[y] - s0[y])).sum::<f64>()
            };
            let quadrature = integrate_panels(&mut integrand, t_cut, 1e-13);
            Ok(KeyIdentityReport { x, x_bar, spectral, quadrature, tail_bound, t_cut, expected })
        }
        KernelSource::HalfLine { mu } => {
            // the constant 1/(1 - μ) drops out of the mixed difference
            let g = |a: usize, b: usize| green_halfline(a, b, 0.0);
            let spectral = 0.5 * (g(x + 1, x_bar + 1) - g(x + 1, x_bar) - g(x, x_bar + 1) + g(x, x_bar));
            let expected = if x == x_bar { 1.0 } else { 0.0 };
            let t_cut = 200.0;
            let y_max = x.max(x_bar) + 2 + support_radius(t_cut);
            let mut integrand = |t: f64| {
                let k = HalfLineKernel::new(t, mu, y_max + 1);
                (0..=y_max as i64)
                    .map(|y| {
                        let (a, b) = (x as i64, x_bar as i64);
                        (k.eval(a + 1, y) - k.eval(a, y)) * (k.eval(b + 1, y) - k.eval(b, y))
                    })
                    .sum::<f64>()
            };
            let head = integrate_panels(&mut integrand, t_cut, 1e-13);
            let k = HalfLineKernel::new(2.0 * t_cut, mu, x.max(x_bar) + 2);
            let tail = k.free(x as i64 - x_bar as i64) - k.boundary_part((x + x_bar + 1) as i64);
            Ok(KeyIdentityReport {
                x,
                x_bar,
                spectral,
                quadrature: head + tail,
                tail_bound: tail.abs(),
                t_cut,
                expected,
            })
        }
    }
}

fn integrate_panels(f: &mut impl FnMut(f64) -> f64, t_max: f64, tol: f64) -> f64 {
    dyadic_panels(0.5, t_max).into_iter().map(|(a, b)| adaptive(f, a, b, tol, 30).0).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CStarReport {
    pub x_grid: Vec<usize>,
    pub values: Vec<f64>,
    pub max: f64,
}

/// Kernel rows at `x - 1, x, x + 1` for one time.
trait RowSource {
    fn rows(&self, t: f64, x: usize) -> [Vec<f64>; 3];
    fn y_range(&self) -> std::ops::RangeInclusive<usize>;
}

struct IntervalRows(DenseKernel, usize);

impl RowSource for IntervalRows {
    fn rows(&self, t: f64, x: usize) -> [Vec<f64>; 3] {
        [self.0.row(t, x - 1), self.0.row(t, x), self.0.row(t, x + 1)]
    }
    fn y_range(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.1 - 1
    }
}

struct HalfLineRows {
    mu: f64,
    y_max: usize,
}

impl RowSource for HalfLineRows {
    fn rows(&self, t: f64, x: usize) -> [Vec<f64>; 3] {
        let k = HalfLineKernel::new(t, self.mu, self.y_max + 1);
        let row = |x: usize| (0..=self.y_max).map(|y| k.eval(x as i64, y as i64)).collect();
        [row(x - 1), row(x), row(x + 1)]
    }
    fn y_range(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.y_max
    }
}

fn c_star_integrand(src: &dyn RowSource, t: f64, x: usize, eps: f64, a: f64) -> f64 {
    let [m, c, p] = src.rows(t, x);
    src.y_range()
        .map(|y| {
            let w = (a * eps * (x as f64 - y as f64).abs()).exp();
            ((p[y] - c[y]) * (c[y] - m[y])).abs() * w
        })
        .sum()
}

fn row_source(source: &KernelSource, t_max: f64, x_max: usize) -> Box<dyn RowSource> {
    match *source {
        KernelSource::Interval { n, mu_a, mu_b } => Box::new(IntervalRows(DenseKernel::new(n, mu_a, mu_b), n)),
        KernelSource::HalfLine { mu } => Box::new(HalfLineRows { mu, y_max: x_max + 1 + support_radius(t_max) }),
    }
}

/// `max_x Σ_y ∫_0^{T̄/ε²} |∇⁺p_t(x, y) ∇⁻p_t(x, y)| e^{aε|x - y|} dt` over the bulk sites in `x_grid`.
pub fn c_star_estimate(source: &KernelSource, eps: f64, t_bar: f64, a: f64, x_grid: &[usize]) -> Result<CStarReport> {
    let t_max = t_bar / (eps * eps);
    if let KernelSource::Interval { n, .. } = source {
        if x_grid.iter().any(|&x| x == 0 || x >= *n) {
            return Err(Error::InvalidParameter("c-star sites must satisfy 1 <= x <= N-1".into()));
        }
    }
    if x_grid.contains(&0) {
        return Err(Error::InvalidParameter("c-star sites must satisfy x >= 1".into()));
    }
    let x_max = x_grid.iter().copied().max().unwrap_or(1);
    let src = row_source(source, t_max, x_max);
    let values: Vec<f64> = x_grid
        .iter()
        .map(|&x| integrate_panels(&mut |t| c_star_integrand(src.as_ref(), t, x, eps, a), t_max, 1e-10))
        .collect();
    let max = values.iter().copied().fold(0.0, f64::max);
    Ok(CStarReport { x_grid: x_grid.to_vec(), values, max })
}

/// Same sum with the extra factor `(s - t)^{-1/2}`, `s = S/ε²`, via `t = s - u²`.
pub fn c_star_weighted(source: &KernelSource, eps: f64, s_macro: f64, a: f64, x_grid: &[usize]) -> Result<CStarReport> {
    let s = s_macro / (eps * eps);
    let x_max = x_grid.iter().copied().max().unwrap_or(1);
    let src = row_source(source, s, x_max);
    let root = s.sqrt();
    let values: Vec<f64> = x_grid
        .iter()
        .map(|&x| {
            let mut g = |u: f64| 2.0 * c_star_integrand(src.as_ref(), (s - u * u).max(0.0), x, eps, a);
            // the integrand peaks where t = s - u² is small, i.e. u near √s
            let mut total = 0.0;
            for (lo, hi) in dyadic_panels(0.5, s) {
                let (ua, ub) = ((s - hi).max(0.0).sqrt(), (s - lo).sqrt());
                total += adaptive(&mut g, ua, ub.min(root), 1e-11, 30).0;
            }
            total
        })
        .collect();
    let max = values.iter().copied().fold(0.0, f64::max);
    Ok(CStarReport { x_grid: x_grid.to_vec(), values, max })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummationByPartsReport {
    pub max_residual_first: f64,
    pub max_residual_symmetric: f64,
    pub max_residual_half_line: f64,
}

impl SummationByPartsReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_residual_first <= tol && self.max_residual_symmetric <= tol && self.max_residual_half_line <= tol
    }
}

/// `u` is indexed from `-1`: `u[0] = u(-1)`.
fn lap(v: &[f64], i: usize) -> f64 {
    v[i - 1] - 2.0 * v[i] + v[i + 1]
}

/// Checks the three summation-by-parts formulas on random pairs, with `∇⁻f(x) = f(x-1) - f(x)`.
pub fn summation_by_parts_audit<R: Rng + ?Sized>(n: usize, trials: usize, rng: &mut R) -> SummationByPartsReport {
    let mut rep = SummationByPartsReport { max_residual_first: 0.0, max_residual_symmetric: 0.0, max_residual_half_line: 0.0 };
    let gp = |f: &[f64], x: i64| f[(x + 2) as usize] - f[(x + 1) as usize];
    let gm = |f: &[f64], x: i64| f[x as usize] - f[(x + 1) as usize];
    let ni = n as i64;
    for _ in 0..trials {
        let u: Vec<f64> = (0..n + 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n + 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let at = |f: &[f64], x: i64| f[(x + 1) as usize];
        let scale = 1.0 + (n as f64);
        let lhs: f64 = (0..=n).map(|x| u[x + 1] * lap(&v, x + 1)).sum();
        let rhs0 = at(&u, ni + 1) * gp(&v, ni) + at(&u, -1) * gm(&v, 0) - (-1..=ni).map(|x| gp(&u, x) * gp(&v, x)).sum::<f64>();
        rep.max_residual_first = rep.max_residual_first.max((lhs - rhs0).abs() / scale);
        let swap: f64 = (0..=n).map(|x| v[x + 1] * lap(&u, x + 1)).sum();
        let rhs1 = swap + at(&u, ni + 1) * gp(&v, ni) + at(&u, -1) * gm(&v, 0)
            - at(&v, ni + 1) * gp(&u, ni)
            - at(&v, -1) * gm(&u, 0);
        rep.max_residual_symmetric = rep.max_residual_symmetric.max((lhs - rhs1).abs() / scale);

        let support = n + 1;
        let len = support + 4;
        let mut uh: Vec<f64> = (0..len).map(|i| if i <= support { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect();
        let mut vh: Vec<f64> = (0..len).map(|i| if i <= support { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect();
        uh[len - 1] = 0.0;
        vh[len - 1] = 0.0;
        let l2: f64 = (0..len - 2).map(|x| uh[x + 1] * lap(&vh, x + 1)).sum();
        let r2: f64 = (0..len - 2).map(|x| vh[x + 1] * lap(&uh, x + 1)).sum::<f64>() + at(&uh, -1) * gm(&vh, 0)
            - at(&vh, -1) * gm(&uh, 0);
        rep.max_residual_half_line = rep.max_residual_half_line.max((l2 - r2).abs() / scale);
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_site_green() {
        let g = green_matrix(1, 0.0, 0.0).unwrap();
        assert!((g.values[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
        assert!((green_corner_closed_form(1, 0.0, 0.0).unwrap() - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn neumann_is_singular() {
        assert!(green_matrix(5, 1.0, 1.0).is_err());
        assert!(green_corner_closed_form(5, 1.0, 1.0).is_err());
        assert!(green_corner_halfline(1.0).is_err());
    }

    #[test]
    fn thomas_matches_closed_form() {
        for &(n, a, b) in &[(7, 0.3, 0.9), (100, 0.99, 0.0), (1, 0.5, 0.5)] {
            let g = green_corner_closed_form(n, a, b).unwrap();
            assert!((green_corner_tridiagonal(n, a, b) - g).abs() < 1e-12 * g);
        }
    }

    #[test]
    fn constant_pair_sums_vanish() {
        let u = vec![2.0; 8];
        let s: f64 = (0..6).map(|x| u[x + 1] * lap(&u, x + 1)).sum();
        assert_eq!(s, 0.0);
    }
}
