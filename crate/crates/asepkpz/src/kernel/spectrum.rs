//! Eigenpairs of `-Δ/2` on `{0, ..., N}` with ghost rows `ψ(-1) = μ_A ψ(0)`, `ψ(N+1) = μ_B ψ(N)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    pub n: usize,
    pub mu_a: f64,
    pub mu_b: f64,
    pub omegas: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Column `k` holds `ψ_k(0..=N)`.
    pub eigvecs: DMatrix<f64>,
}

/// Dense `-Δ/2` with the Robin ghost rows folded in.
pub fn robin_laplacian(n: usize, mu_a: f64, mu_b: f64) -> DMatrix<f64> {
    let size = n + 1;
    let mut m = DMatrix::zeros(size, size);
    for x in 0..size {
        m[(x, x)] = 1.0;
        if x > 0 {
            m[(x, x - 1)] = -0.5;
        }
        if x + 1 < size {
            m[(x, x + 1)] = -0.5;
        }
    }
    m[(0, 0)] -= 0.5 * mu_a;
    m[(n, n)] -= 0.5 * mu_b;
    m
}

// U_{N+1}(c) - (μ_A + μ_B) U_N(c) + μ_A μ_B U_{N-1}(c)
fn secular_chebyshev(n: usize, mu_a: f64, mu_b: f64, c: f64) -> f64 {
    let (mut u_prev, mut u) = (0.0, 1.0);
    let mut trail = [0.0, 0.0, 1.0];
    for _ in 0..=n {
        let next = 2.0 * c * u - u_prev;
        u_prev = u;
        u = next;
        trail = [trail[1], trail[2], u];
    }
    trail[2] - (mu_a + mu_b) * trail[1] + mu_a * mu_b * trail[0]
}

fn secular_sine(n: usize, mu_a: f64, mu_b: f64, w: f64) -> f64 {
    let nf = n as f64;
    (w * (nf + 2.0)).sin() - (mu_a + mu_b) * (w * (nf + 1.0)).sin() + mu_a * mu_b * (w * nf).sin()
}

pub fn solve_interval_spectrum(n: usize, mu_a: f64, mu_b: f64) -> Result<SpectralData> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    if !(mu_a.is_finite() && mu_b.is_finite()) {
        return Err(Error::InvalidParameter("mu must be finite".into()));
    }
    let size = n + 1;
    let step = PI / size as f64;
    let mut omegas = Vec::with_capacity(size);
    let mut eigvecs = DMatrix::zeros(size, size);
    if mu_a == 1.0 && mu_b == 1.0 {
        for k in 0..size {
            let w = k as f64 * step;
            omegas.push(w);
            let col = DVector::from_fn(size, |x, _| (w * (x as f64 + 0.5)).cos());
            eigvecs.set_column(k, &col.normalize());
        }
    } else {
        let ends: Vec<f64> = (0..=size).map(|j| secular_chebyshev(n, mu_a, mu_b, (j as f64 * step).cos())).collect();
        for k in 0..size {
            let (g_lo, g_hi) = (ends[k], ends[k + 1]);
            if !(g_lo * g_hi < 0.0) {
                return Err(Error::Bracketing { k, g_lo, g_hi });
            }
            let (mut lo, mut hi) = (k as f64 * step, (k + 1) as f64 * step);
            let lo_positive = g_lo > 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if (secular_sine(n, mu_a, mu_b, mid) > 0.0) == lo_positive {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let w = 0.5 * (lo + hi);
            omegas.push(w);
            let (s, c) = w.sin_cos();
            let col = DVector::from_fn(size, |x, _| {
                let xf = x as f64;
                s * (w * xf).cos() + (c - mu_a) * (w * xf).sin()
            });
            eigvecs.set_column(k, &col.normalize());
        }
    }
    let lambdas = omegas.iter().map(|w| 1.0 - w.cos()).collect();
    Ok(SpectralData { n, mu_a, mu_b, omegas, lambdas, eigvecs })
}

impl SpectralData {
    pub fn size(&self) -> usize {
        self.n + 1
    }

    pub fn psi(&self, k: usize, x: usize) -> f64 {
        self.eigvecs[(x, k)]
    }

    /// `ψ_k(x)` with the ghost values at `x = -1` and `x = N + 1`.
    pub fn psi_ext(&self, k: usize, x: i64) -> f64 {
        if x < 0 {
            self.mu_a * self.eigvecs[(0, k)]
        } else if x as usize > self.n {
            self.mu_b * self.eigvecs[(self.n, k)]
        } else {
            self.eigvecs[(x as usize, k)]
        }
    }

    /// `max_k max_x |(-Δ/2)ψ_k - λ_k ψ_k|`.
    pub fn max_residual(&self) -> f64 {
        let op = robin_laplacian(self.n, self.mu_a, self.mu_b);
        let applied = &op * &self.eigvecs;
        let mut worst: f64 = 0.0;
        for k in 0..self.size() {
            for x in 0..self.size() {
                worst = worst.max((applied[(x, k)] - self.lambdas[k] * self.eigvecs[(x, k)]).abs());
            }
        }
        worst
    }

    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.eigvecs.transpose() * &self.eigvecs;
        (gram - DMatrix::identity(self.size(), self.size())).amax()
    }

    pub fn max_bracket_violation(&self) -> f64 {
        let step = PI / self.size() as f64;
        self.omegas
            .iter()
            .enumerate()
            .map(|(k, &w)| (k as f64 * step - w).max(w - (k + 1) as f64 * step).max(0.0))
            .fold(0.0, f64::max)
    }

    /// `sqrt(N) max_{k,x} |ψ_k(x)|`.
    pub fn sup_constant(&self) -> f64 {
        (self.n as f64).sqrt() * self.eigvecs.amax()
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambdas.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}
