//! Fitted constants for the heat-kernel bounds on grids of `(t, t', x, y)`.

use serde::{Deserialize, Serialize};

use super::halfline::HalfLineKernel;
use super::interval::interval_kernel_spectral;
use super::spectrum::solve_interval_spectrum;
use crate::error::Result;
use crate::params::{Geometry, ScalingParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub bound: String,
    pub max_ratio: f64,
    pub max_ratio_dense: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelAuditReport {
    pub epsilon: f64,
    pub t_bar: f64,
    pub entries: Vec<AuditEntry>,
}

impl KernelAuditReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.stable)
    }

    pub fn get(&self, bound: &str) -> Option<&AuditEntry> {
        self.entries.iter().find(|e| e.bound == bound)
    }
}

struct Grid {
    times: Vec<f64>,
    sites: Vec<usize>,
}

fn grid(t_max: f64, x_max: usize, n_times: usize, stride: usize) -> Grid {
    let t_min: f64 = 0.25;
    let ratio = (t_max / t_min).powf(1.0 / (n_times - 1) as f64);
    Grid {
        times: (0..n_times).map(|i| t_min * ratio.powi(i as i32)).collect(),
        sites: (0..=x_max).step_by(stride.max(1)).collect(),
    }
}

/// Dense kernel slice `p_t(x, y)` for `0 <= x, y <= m` (plus one extra row for gradients).
trait Source {
    fn slice(&self, t: f64) -> nalgebra::DMatrix<f64>;
    fn bounded(&self) -> bool;
}

struct HalfLine {
    mu: f64,
    m: usize,
}

impl Source for HalfLine {
    fn slice(&self, t: f64) -> nalgebra::DMatrix<f64> {
        HalfLineKernel::new(t, self.mu, self.m + 1).block(self.m + 1)
    }
    fn bounded(&self) -> bool {
        false
    }
}

struct Interval {
    spec: super::spectrum::SpectralData,
}

impl Source for Interval {
    fn slice(&self, t: f64) -> nalgebra::DMatrix<f64> {
        interval_kernel_spectral(&self.spec, t).values
    }
    fn bounded(&self) -> bool {
        true
    }
}

fn shape(t: f64) -> f64 {
    1.0f64.min(t.powf(-0.5))
}

fn ratios(src: &dyn Source, g: &Grid, eps: f64, x_last: usize) -> [f64; 7] {
    let mut out = [0.0f64; 7];
    let a = 1.0;
    for &t in &g.times {
        let k = src.slice(t);
        let s = shape(t);
        let grad = |x: usize, y: usize| -> f64 {
            if x + 1 <= x_last {
                k[(x + 1, y)] - k[(x, y)]
            } else {
                0.0
            }
        };
        for &x in &g.sites {
            let mut sum_w = 0.0;
            let mut sum_dw = 0.0;
            for y in 0..=x_last {
                let d = (x as f64 - y as f64).abs();
                let w = (a * d * s).exp() * if src.bounded() { 1.0 } else { (a * eps * y as f64).exp() };
                sum_w += k[(x, y)] * w;
                sum_dw += grad(x, y).abs() * w;
            }
            let base = if src.bounded() { 1.0 } else { (a * eps * x as f64).exp() };
            out[4] = out[4].max(sum_w / base);
            out[5] = out[5].max(sum_dw / (base * t.powf(-0.5)));
            for &y in &g.sites {
                let d = (x as f64 - y as f64).abs();
                out[0] = out[0].max(k[(x, y)] / (s * (-d * s).exp()));
                out[3] = out[3].max(grad(x, y).abs() / (s * s * (-d * s).exp()));
            }
        }
        for dt in [0.1, 1.0] {
            let k2 = src.slice(t + dt);
            for &x in &g.sites {
                for &y in &g.sites {
                    if k2[(x, y)] > 1e-12 {
                        out[1] = out[1].max(k[(x, y)] / (dt.exp() * k2[(x, y)]));
                    }
                    for v in [0.5, 1.0] {
                        let denom = 1.0f64.min(t.powf(-0.5 - v)) * dt.powf(v);
                        out[2] = out[2].max((k2[(x, y)] - k[(x, y)]).abs() / denom);
                    }
                }
            }
        }
    }
    out[6] = out[5];
    out
}

const NAMES: [&str; 7] = [
    "gaussian_envelope",
    "monotone_in_time",
    "holder_in_time",
    "gradient_envelope",
    "weighted_sum",
    "weighted_gradient_sum",
    "interval_gradient_sum",
];

/// Audits the kernel bounds for `scaling` up to microscopic time `t_bar / ε²`.
pub fn kernel_bound_audit(scaling: &ScalingParams, t_bar: f64) -> Result<KernelAuditReport> {
    scaling.validate()?;
    let eps = scaling.epsilon;
    let t_max = t_bar / (eps * eps);
    let (src, x_last): (Box<dyn Source>, usize) = match scaling.geometry {
        Geometry::Interval => {
            let n = scaling.n_sites;
            let spec = solve_interval_spectrum(n, scaling.mu_a(), scaling.mu_b())?;
            (Box::new(Interval { spec }), n)
        }
        Geometry::HalfLine => {
            let m = (2.0 / eps).ceil() as usize;
            (Box::new(HalfLine { mu: scaling.mu_a(), m }), m + 1)
        }
    };
    let x_obs = match scaling.geometry {
        Geometry::Interval => x_last,
        Geometry::HalfLine => x_last - 1,
    };
    let stride = (x_obs / 8).max(2);
    let coarse = ratios(src.as_ref(), &grid(t_max, x_obs, 8, stride), eps, x_last);
    let dense = ratios(src.as_ref(), &grid(t_max, x_obs, 16, stride / 2), eps, x_last);
    let keep: &[usize] = match scaling.geometry {
        Geometry::Interval => &[0, 1, 2, 3, 4, 6],
        Geometry::HalfLine => &[0, 1, 2, 3, 4, 5],
    };
    let entries = keep
        .iter()
        .map(|&i| {
            let stable = coarse[i].is_finite() && dense[i].is_finite() && dense[i] <= 2.0 * coarse[i];
            let stable = if i == 1 { stable && dense[i] <= 1.0 + 1e-12 } else { stable };
            AuditEntry { bound: NAMES[i].to_string(), max_ratio: coarse[i], max_ratio_dense: dense[i], stable }
        })
        .collect();
    Ok(KernelAuditReport { epsilon: eps, t_bar, entries })
}
