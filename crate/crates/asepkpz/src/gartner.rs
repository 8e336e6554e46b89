//! Microscopic Cole-Hopf transform `Z = exp(-λh + νt)`, its drift identity and brackets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::asep::{Configuration, HeightField, Lattice, Trajectory};
use crate::error::{Error, Result};
use crate::params::ModelParams;

/// `Z` stored in log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZField {
    pub log_z: Vec<f64>,
    pub time_stamp: f64,
}

impl ZField {
    pub fn z(&self, x: usize) -> f64 {
        self.log_z[x].exp()
    }

    pub fn values(&self) -> Vec<f64> {
        self.log_z.iter().map(|v| v.exp()).collect()
    }

    /// Linear interpolation between lattice sites.
    pub fn at(&self, pos: f64) -> f64 {
        let last = self.log_z.len() - 1;
        let pos = pos.clamp(0.0, last as f64);
        let i = (pos.floor() as usize).min(last.saturating_sub(1));
        let frac = pos - i as f64;
        if last == 0 {
            return self.z(0);
        }
        (1.0 - frac) * self.z(i) + frac * self.z(i + 1)
    }

    /// `Z(x + 1) / Z(x)`.
    pub fn ratio(&self, x: usize) -> f64 {
        (self.log_z[x + 1] - self.log_z[x]).exp()
    }
}

pub fn z_field(h: &HeightField, t: f64, params: &ModelParams) -> ZField {
    ZField {
        log_z: h.h.iter().map(|&v| -params.lambda * v as f64 + params.nu * t).collect(),
        time_stamp: t,
    }
}

#[derive(Debug, Clone, Copy)]
struct LocalRatios {
    up: f64,
    down: f64,
}

// Z(x+1)/Z(x) and Z(x-1)/Z(x), ghosts included.
fn local_ratios(config: &Configuration, params: &ModelParams, lattice: &Lattice, x: usize) -> LocalRatios {
    let n = config.len();
    let down = if x == 0 { params.mu_a } else { (params.lambda * config.at(x) as f64).exp() };
    let up = if x == n {
        if lattice.has_right_reservoir() {
            params.mu_b
        } else {
            f64::NAN
        }
    } else {
        (-params.lambda * config.at(x + 1) as f64).exp()
    };
    LocalRatios { up, down }
}

/// Drift `Ω(x)` in `dZ(x) = Ω(x) Z(x) dt + dM(x)`.
pub fn drift(config: &Configuration, params: &ModelParams, lattice: &Lattice, x: usize) -> f64 {
    let n = config.len();
    let to_q = params.q / params.p - 1.0;
    let to_p = params.p / params.q - 1.0;
    if x == 0 {
        let occupied = config.at(1) == 1;
        params.nu + if occupied { to_p * params.gamma } else { to_q * params.alpha }
    } else if x == n {
        if !lattice.has_right_reservoir() {
            return params.nu;
        }
        let occupied = config.at(n) == 1;
        params.nu + if occupied { to_q * params.beta } else { to_p * params.delta }
    } else {
        let (a, b) = (config.at(x), config.at(x + 1));
        let right = if a == 1 && b == -1 { params.p } else { 0.0 };
        let left = if a == -1 && b == 1 { params.q } else { 0.0 };
        params.nu + to_p * left + to_q * right
    }
}

/// `(Ω(x) Z(x) - ½ΔZ(x)) / Z(x)` at every site where the identity applies.
///
/// On a truncated half line the closed right edge is excluded.
pub fn drift_identity_residual(config: &Configuration, params: &ModelParams, lattice: &Lattice) -> Vec<f64> {
    let n = config.len();
    let last = if lattice.has_right_reservoir() { n } else { n - 1 };
    (0..=last)
        .map(|x| {
            let r = local_ratios(config, params, lattice, x);
            drift(config, params, lattice, x) - 0.5 * (r.down - 2.0 + r.up)
        })
        .collect()
}

/// Bracket rate `d<M(x)>/dt` divided by `Z(x)²`, with its small-ε decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketRate {
    pub rate: f64,
    pub leading: f64,
    pub remainder: f64,
}

impl BracketRate {
    pub fn scaled(&self, z: f64) -> BracketRate {
        let z2 = z * z;
        BracketRate { rate: self.rate * z2, leading: self.leading * z2, remainder: self.remainder * z2 }
    }
}

/// Leading part is `ε Z² + ∇⁺Z (Z(x-1) - Z(x))` in the bulk and `ε Z²` at reservoirs.
pub fn bracket_rate(config: &Configuration, params: &ModelParams, lattice: &Lattice, x: usize) -> BracketRate {
    let n = config.len();
    let sq_q = (params.q / params.p - 1.0).powi(2);
    let sq_p = (params.p / params.q - 1.0).powi(2);
    let eps = params.epsilon;
    let boundary = x == 0 || (x == n && lattice.has_right_reservoir());
    let rate = if x == 0 {
        if config.at(1) == 1 {
            sq_p * params.gamma
        } else {
            sq_q * params.alpha
        }
    } else if x == n {
        if !lattice.has_right_reservoir() {
            0.0
        } else if config.at(n) == 1 {
            sq_q * params.beta
        } else {
            sq_p * params.delta
        }
    } else {
        let (a, b) = (config.at(x), config.at(x + 1));
        let right = if a == 1 && b == -1 { params.p } else { 0.0 };
        let left = if a == -1 && b == 1 { params.q } else { 0.0 };
        sq_q * right + sq_p * left
    };
    let leading = if boundary {
        eps
    } else if x == n {
        0.0
    } else {
        let r = local_ratios(config, params, lattice, x);
        eps + (r.up - 1.0) * (r.down - 1.0)
    };
    BracketRate { rate, leading, remainder: rate - leading }
}

/// `𝒵^ε_T(X) = Z_{ε⁻²T}(ε⁻¹X)` on a macroscopic grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledField {
    pub t_macro: f64,
    pub x_macro: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn rescale(traj: &Trajectory, params: &ModelParams, t_grid: &[f64], x_grid: &[f64]) -> Result<Vec<ScaledField>> {
    let eps = params.epsilon;
    let inv2 = 1.0 / (eps * eps);
    t_grid
        .iter()
        .map(|&tm| {
            let target = tm * inv2;
            let i = traj
                .sample_times
                .iter()
                .position(|&s| (s - target).abs() <= 1e-9 * target.max(1.0))
                .ok_or_else(|| Error::OutOfRange(format!("no sample at microscopic time {target}")))?;
            let snap = &traj.snapshots[i];
            let zf = z_field(&snap.height, traj.sample_times[i], params);
            let last = (zf.log_z.len() - 1) as f64;
            let values = x_grid
                .iter()
                .map(|&xm| {
                    let pos = xm / eps;
                    if !(0.0..=last + 1e-9).contains(&pos) {
                        return Err(Error::OutOfRange(format!("X = {xm} beyond lattice")));
                    }
                    Ok(zf.at(pos))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(ScaledField { t_macro: tm, x_macro: x_grid.to_vec(), values })
        })
        .collect()
}

/// Initial conditions for the particle system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialCondition {
    /// Alternating occupations, `h ∈ {0, -1}`.
    Flat,
    Bernoulli(f64),
    Heights(Vec<i64>),
}

impl InitialCondition {
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<HeightField> {
        match self {
            InitialCondition::Flat => {
                let eta = (0..n).map(|i| if i % 2 == 0 { -1 } else { 1 }).collect();
                Ok(HeightField::from_config(&Configuration { eta }, 0))
            }
            InitialCondition::Bernoulli(rho) => Ok(HeightField::from_config(&Configuration::bernoulli(n, *rho, rng), 0)),
            InitialCondition::Heights(h) => {
                let hf = HeightField::new(h.clone())?;
                if hf.h.len() != n + 1 {
                    return Err(Error::InvalidConfiguration(format!(
                        "height file has {} values, lattice needs {}",
                        hf.h.len(),
                        n + 1
                    )));
                }
                Ok(hf)
            }
        }
    }
}

/// One integer per line, first line is `h(0)`.
pub fn parse_height_file(text: &str) -> Result<HeightField> {
    let h = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.parse::<i64>().map_err(|e| Error::InvalidConfiguration(format!("bad height {l:?}: {e}"))))
        .collect::<Result<Vec<i64>>>()?;
    HeightField::new(h)
}

/// Empirical constants in `‖Z₀(x)‖₂ <= C` and `‖Z₀(x) - Z₀(x')‖₂ <= C (ε|x - x'|)^0.4`.
pub fn near_equilibrium_constants(samples: &[Vec<f64>], eps: f64) -> (f64, f64) {
    let n = samples.len() as f64;
    let len = samples[0].len();
    let mut uniform: f64 = 0.0;
    for x in 0..len {
        uniform = uniform.max((samples.iter().map(|s| s[x] * s[x]).sum::<f64>() / n).sqrt());
    }
    let mut holder: f64 = 0.0;
    let stride = (len / 16).max(1);
    for x in (0..len).step_by(stride) {
        for x2 in (x + 1..len).step_by(stride) {
            let m2 = samples.iter().map(|s| (s[x] - s[x2]).powi(2)).sum::<f64>() / n;
            holder = holder.max(m2.sqrt() / (eps * (x2 - x) as f64).powf(0.4));
        }
    }
    (uniform, holder)
}
