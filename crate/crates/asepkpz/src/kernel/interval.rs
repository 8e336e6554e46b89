//! Robin heat kernel on `{0, ..., N}` by spectral sum and by generalized images.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::free::{free_kernel_row, support_radius};
use super::spectrum::SpectralData;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    pub t: f64,
    pub values: DMatrix<f64>,
}

impl KernelMatrix {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[(x, y)]
    }

    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    pub fn symmetry_error(&self) -> f64 {
        (&self.values - self.values.transpose()).amax()
    }

    pub fn min_entry(&self) -> f64 {
        self.values.min()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.values.row_iter().map(|r| r.sum()).collect()
    }

    pub fn max_gap(&self, other: &KernelMatrix) -> f64 {
        (&self.values - &other.values).amax()
    }

    /// Applies the kernel to a profile: `(P f)(x) = sum_y p(x, y) f(y)`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (&self.values * DVector::from_column_slice(f)).iter().copied().collect()
    }
}

/// `sum_k ψ_k(x) ψ_k(y) e^{-t λ_k}`.
pub fn interval_kernel_spectral(spec: &SpectralData, t: f64) -> KernelMatrix {
    let decay = DVector::from_iterator(spec.size(), spec.lambdas.iter().map(|l| (-t * l).exp()));
    let scaled = DMatrix::from_fn(spec.size(), spec.size(), |x, k| spec.eigvecs[(x, k)] * decay[k]);
    KernelMatrix { t, values: scaled * spec.eigvecs.transpose() }
}

/// Coefficients of the extended data on each block in terms of the data on `{0, ..., N}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageExpansion {
    pub n: usize,
    pub mu_a: f64,
    pub mu_b: f64,
    pub depth: usize,
    /// Block labels in construction order `0, -1, 1, -2, 2, ...`.
    pub blocks: Vec<i64>,
    /// `phi[i](z - offset, y)`: coefficient of `φ(y)` in the extended `φ(z)` on block `blocks[i]`.
    pub phi: Vec<DMatrix<f64>>,
    /// Image point `ι(y; k)` for each block.
    pub iota: Vec<Vec<i64>>,
    pub coeffs: Vec<f64>,
    pub corrections: Vec<DMatrix<f64>>,
    pub epsilon: f64,
}

/// Reflection through the left wall, `x ↦ -1 - x`.
pub fn reflect_left(x: i64) -> i64 {
    -1 - x
}

/// Reflection through the right wall of `{0, ..., N}`, `x ↦ 2N + 1 - x`.
pub fn reflect_right(n: usize, x: i64) -> i64 {
    2 * (n as i64 + 1) - 1 - x
}

impl ImageExpansion {
    pub fn build(n: usize, mu_a: f64, mu_b: f64, depth: usize) -> Self {
        let size = n + 1;
        let nb = size as i64;
        let mut blocks = vec![0i64];
        for k in 1..=depth as i64 {
            blocks.push(-k);
            blocks.push(k);
        }
        // Row index of z within its block, and lookup of already built blocks.
        let mut built: Vec<Option<DMatrix<f64>>> = vec![None; 2 * depth + 1];
        let slot = |k: i64| -> usize { (k + depth as i64) as usize };
        let block_of = |z: i64| -> (i64, usize) { (z.div_euclid(nb), z.rem_euclid(nb) as usize) };
        built[slot(0)] = Some(DMatrix::identity(size, size));
        let row = |built: &Vec<Option<DMatrix<f64>>>, z: i64| -> DVector<f64> {
            let (k, r) = block_of(z);
            built[slot(k)].as_ref().expect("block order").row(r).transpose()
        };
        for &k in &blocks[1..] {
            let mut m = DMatrix::zeros(size, size);
            if k < 0 {
                // φ(x - 1) = μ_A φ(x) - φ(-x - 1) + μ_A φ(-x), walking x downward from the block's top.
                let top = (k + 1) * nb - 1;
                let bottom = k * nb;
                let mut prev = row(&built, top + 1);
                for z in (bottom..=top).rev() {
                    let x = z + 1;
                    let v = if z == -1 {
                        mu_a * &prev
                    } else {
                        mu_a * &prev - row(&built, -x - 1) + mu_a * row(&built, -x)
                    };
                    m.set_row((z - bottom) as usize, &v.transpose());
                    prev = v;
                }
            } else {
                // φ(x) = μ_B φ(x - 1) - φ(2N̄ - x) + μ_B φ(2N̄ - x - 1), walking x upward.
                let bottom = k * nb;
                let top = (k + 1) * nb - 1;
                let mut prev = row(&built, bottom - 1);
                for z in bottom..=top {
                    let v = if z == nb {
                        mu_b * &prev
                    } else {
                        mu_b * &prev - row(&built, 2 * nb - z) + mu_b * row(&built, 2 * nb - z - 1)
                    };
                    m.set_row((z - bottom) as usize, &v.transpose());
                    prev = v;
                }
            }
            built[slot(k)] = Some(m);
        }
        let phi: Vec<DMatrix<f64>> = blocks.iter().map(|&k| built[slot(k)].clone().unwrap()).collect();

        let mut iota: Vec<Vec<i64>> = Vec::with_capacity(blocks.len());
        let mut coeffs: Vec<f64> = Vec::with_capacity(blocks.len());
        let lookup = |blocks: &[i64], k: i64| blocks.iter().position(|&b| b == k).unwrap();
        for &k in &blocks {
            if k == 0 {
                iota.push((0..nb).collect());
                coeffs.push(1.0);
            } else if k < 0 {
                let j = lookup(&blocks, -k - 1);
                iota.push(iota[j].iter().map(|&z| reflect_left(z)).collect());
                coeffs.push(mu_a * coeffs[j]);
            } else {
                let j = lookup(&blocks, -k + 1);
                iota.push(iota[j].iter().map(|&z| reflect_right(n, z)).collect());
                coeffs.push(mu_b * coeffs[j]);
            }
        }
        let epsilon = 1.0 / n as f64;
        let corrections = blocks
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let mut e = phi[i].clone();
                for y in 0..size {
                    let r = (iota[i][y] - k * nb) as usize;
                    e[(r, y)] -= coeffs[i];
                }
                e / epsilon
            })
            .collect();
        Self { n, mu_a, mu_b, depth, blocks, phi, iota, coeffs, corrections, epsilon }
    }

    /// Largest `|E_k|^{1/|k|}` over the blocks, an empirical growth constant.
    pub fn growth_constant(&self) -> f64 {
        self.blocks
            .iter()
            .zip(&self.corrections)
            .filter(|(k, _)| **k != 0)
            .map(|(k, e)| e.amax().powf(1.0 / k.unsigned_abs() as f64))
            .fold(0.0, f64::max)
    }

    pub fn max_coefficient(&self) -> f64 {
        self.phi.iter().map(|m| m.amax()).fold(0.0, f64::max)
    }

    /// Kernel from the blocks with `|k| <= depth`.
    pub fn kernel(&self, t: f64) -> KernelMatrix {
        self.kernel_with_depth(t, self.depth)
    }

    pub fn kernel_with_depth(&self, t: f64, depth: usize) -> KernelMatrix {
        let size = self.n + 1;
        let nb = size as i64;
        let row = free_kernel_row(t, (2 * depth + 2) * size + 2);
        let p = |m: i64| row.get(m.unsigned_abs() as usize).copied().unwrap_or(0.0);
        let mut values = DMatrix::zeros(size, size);
        for (i, &k) in self.blocks.iter().enumerate() {
            if k.unsigned_abs() as usize > depth {
                continue;
            }
            let free = DMatrix::from_fn(size, size, |x, r| p(x as i64 - (k * nb + r as i64)));
            values += free * &self.phi[i];
        }
        KernelMatrix { t, values }
    }

    /// Rough bound on the blocks left out at time `t`.
    pub fn tail_estimate(&self, t: f64) -> f64 {
        let size = self.n + 1;
        let gap = self.depth * size + 1;
        let reach = gap + support_radius(t) + size;
        let row = free_kernel_row(t, reach);
        let tail: f64 = row[gap.min(reach)..].iter().sum();
        let growth = self.max_coefficient().max(1.0);
        2.0 * size as f64 * growth * tail
    }
}

/// Image-method kernel; errors when the truncated tail exceeds `1e-12`.
pub fn interval_kernel_image(n: usize, mu_a: f64, mu_b: f64, t: f64, depth: usize) -> Result<(KernelMatrix, ImageExpansion)> {
    if depth == 0 {
        return Err(Error::InvalidParameter("image depth must be at least 1".into()));
    }
    let exp = ImageExpansion::build(n, mu_a, mu_b, depth);
    let tail = exp.tail_estimate(t);
    if tail > 1e-12 {
        return Err(Error::InvalidParameter(format!("image depth {depth} too small at t = {t}: tail {tail:e}")));
    }
    Ok((exp.kernel(t), exp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::spectrum::solve_interval_spectrum;

    #[test]
    fn neumann_images_are_pure_reflections() {
        let e = ImageExpansion::build(5, 1.0, 1.0, 4);
        assert!(e.coeffs.iter().all(|&c| c == 1.0));
        assert!(e.corrections.iter().all(|m| m.amax() < 1e-13));
    }

    #[test]
    fn coefficient_recursions() {
        let e = ImageExpansion::build(6, 0.8, 0.7, 3);
        let c = |k: i64| e.coeffs[e.blocks.iter().position(|&b| b == k).unwrap()];
        assert!((c(-1) - 0.8).abs() < 1e-15 && (c(1) - 0.7).abs() < 1e-15);
        assert!((c(-3) - 0.8 * c(2)).abs() < 1e-15 && (c(3) - 0.7 * c(-2)).abs() < 1e-15);
    }

    #[test]
    fn zero_time_spectral_is_identity() {
        let s = solve_interval_spectrum(12, 0.9, 0.6).unwrap();
        let k = interval_kernel_spectral(&s, 0.0);
        assert!((k.values - DMatrix::identity(13, 13)).amax() < 1e-12);
    }

    #[test]
    fn shallow_depth_is_flagged() {
        assert!(interval_kernel_image(4, 0.9, 0.9, 400.0, 1).is_err());
    }
}
