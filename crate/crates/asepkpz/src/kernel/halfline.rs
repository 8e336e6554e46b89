//! Robin heat kernel on the half line `{0, 1, 2, ...}`.

use super::free::{free_kernel_row, support_radius};

/// Precomputed free row and geometric tails for one `(t, mu)`.
#[derive(Debug, Clone)]
pub struct HalfLineKernel {
    pub t: f64,
    pub mu: f64,
    row: Vec<f64>,
    tail: Vec<f64>,
}

impl HalfLineKernel {
    /// Valid for arguments `-1 <= x, y <= x_max`.
    pub fn new(t: f64, mu: f64, x_max: usize) -> Self {
        let len = 2 * x_max + 4 + support_radius(t);
        let row = free_kernel_row(t, len);
        // tail[s] = sum_{j >= 0} mu^j p(s + j)
        let mut tail = vec![0.0; len + 2];
        for s in (0..=len).rev() {
            tail[s] = row[s] + mu * tail[s + 1];
        }
        Self { t, mu, row, tail }
    }

    pub fn free(&self, m: i64) -> f64 {
        self.row.get(m.unsigned_abs() as usize).copied().unwrap_or(0.0)
    }

    pub fn x_max(&self) -> usize {
        (self.row.len() - 4 - support_radius(self.t)) / 2
    }

    pub fn eval(&self, x: i64, y: i64) -> f64 {
        let s = x + y;
        let mu = self.mu;
        let geo = self.tail.get((s + 2).max(0) as usize).copied().unwrap_or(0.0);
        self.free(x - y) + mu * self.free(s + 1) + (mu * mu - 1.0) * geo
    }

    /// `f(s) = mu p(s + 1) + (mu^2 - 1) sum_j mu^j p(s + 2 + j)`, the boundary part of the kernel.
    pub fn boundary_part(&self, s: i64) -> f64 {
        let mu = self.mu;
        let geo = self.tail.get((s + 2).max(0) as usize).copied().unwrap_or(0.0);
        mu * self.free(s + 1) + (mu * mu - 1.0) * geo
    }

    /// Dense block `p(x, y)` for `0 <= x, y <= m`.
    pub fn block(&self, m: usize) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(m + 1, m + 1, |x, y| self.eval(x as i64, y as i64))
    }
}

/// `p_t(x - y) + mu p_t(x + y + 1) + (mu^2 - 1) sum_{j >= 0} mu^j p_t(x + y + 2 + j)`.
pub fn halfline_robin_kernel(t: f64, x: i64, y: i64, mu_a: f64) -> f64 {
    let m = x.max(y).max(0) as usize;
    HalfLineKernel::new(t, mu_a, m).eval(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::free::free_walk_kernel;

    #[test]
    fn neumann_is_reflection() {
        for (x, y) in [(0, 0), (3, 1), (7, 12)] {
            let v = halfline_robin_kernel(2.5, x, y, 1.0);
            let w = free_walk_kernel(2.5, x - y) + free_walk_kernel(2.5, x + y + 1);
            assert!((v - w).abs() < 1e-15);
        }
    }

    #[test]
    fn ghost_relation() {
        for &t in &[0.5, 5.0, 50.0] {
            let k = HalfLineKernel::new(t, 0.7, 30);
            for y in 0..=30 {
                assert!((k.eval(-1, y) - 0.7 * k.eval(0, y)).abs() <= 1e-12);
            }
        }
    }
}
