//! Microscopic rates and transform constants built from the scaling inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PHASE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    #[default]
    Interval,
    HalfLine,
}

/// Scaling inputs `(epsilon, N, A, B)`.
///
/// For the interval the site count is authoritative and `epsilon = 1/N`.
/// For the half line `n_sites` is the truncation length used by simulations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub epsilon: f64,
    pub n_sites: usize,
    pub slope_a: f64,
    #[serde(default)]
    pub slope_b: f64,
    #[serde(default)]
    pub geometry: Geometry,
}

impl ScalingParams {
    pub fn interval(n_sites: usize, slope_a: f64, slope_b: f64) -> Self {
        Self {
            epsilon: 1.0 / n_sites.max(1) as f64,
            n_sites,
            slope_a,
            slope_b,
            geometry: Geometry::Interval,
        }
    }

    pub fn half_line(epsilon: f64, slope_a: f64, n_sites: usize) -> Self {
        Self {
            epsilon,
            n_sites,
            slope_a,
            slope_b: 0.0,
            geometry: Geometry::HalfLine,
        }
    }

    pub fn mu_a(&self) -> f64 {
        1.0 - self.epsilon * self.slope_a
    }

    pub fn mu_b(&self) -> f64 {
        match self.geometry {
            Geometry::Interval => 1.0 - self.epsilon * self.slope_b,
            Geometry::HalfLine => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let eps = self.epsilon;
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {eps}")));
        }
        if self.n_sites == 0 {
            return Err(Error::InvalidParameter("n_sites must be positive".into()));
        }
        if self.geometry == Geometry::Interval && eps != 1.0 / self.n_sites as f64 {
            return Err(Error::InvalidParameter(format!(
                "interval model needs epsilon = 1/N, got epsilon = {eps}, N = {}",
                self.n_sites
            )));
        }
        for (name, slope, mu) in [("slope_a", self.slope_a, self.mu_a()), ("slope_b", self.slope_b, self.mu_b())] {
            if !(slope.is_finite() && slope >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {slope}")));
            }
            if !(mu > 0.0 && mu <= 1.0) {
                return Err(Error::InvalidParameter(format!("{name} gives mu = {mu} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub epsilon: f64,
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub mu_a: f64,
    pub mu_b: f64,
    pub lambda: f64,
    pub nu: f64,
}

/// Builds every rate from the scaling inputs.
pub fn build_params(scaling: &ScalingParams) -> Result<ModelParams> {
    scaling.validate()?;
    let mp = ModelParams::from_mu(scaling.epsilon, scaling.mu_a(), scaling.mu_b())?;
    Ok(mp)
}

impl ModelParams {
    /// General constructor over the admissible range `mu in [sqrt(q/p), sqrt(p/q)]`.
    pub fn from_mu(epsilon: f64, mu_a: f64, mu_b: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        let s = epsilon.sqrt();
        let p = 0.5 * s.exp();
        let q = 0.5 * (-s).exp();
        let (alpha, gamma) = boundary_pair(p, q, s, mu_a);
        let (beta, delta) = boundary_pair(p, q, s, mu_b);
        for (name, value) in [("alpha", alpha), ("beta", beta), ("gamma", gamma), ("delta", delta)] {
            if !(value >= 0.0) {
                return Err(Error::NegativeRate { name, value });
            }
        }
        let half = (0.5 * s).sinh();
        Ok(Self {
            epsilon,
            p,
            q,
            alpha,
            beta,
            gamma,
            delta,
            mu_a,
            mu_b,
            lambda: -s,
            nu: 2.0 * half * half,
        })
    }

    /// Points with `mu > 1` are admissible rates but lie outside the scaling class.
    pub fn in_simulation_class(&self) -> bool {
        self.mu_a <= 1.0 && self.mu_b <= 1.0
    }

    pub fn sqrt_pq(&self) -> f64 {
        0.5
    }
}

// (p^{3/2}(sqrt p - mu sqrt q), q^{3/2}(mu sqrt p - sqrt q)) / (p - q), written so that
// mu = 1 - d cancels without loss: sqrt p - mu sqrt q = (sqrt p - sqrt q) + d sqrt q.
fn boundary_pair(p: f64, q: f64, s: f64, mu: f64) -> (f64, f64) {
    let (sp, sq) = (p.sqrt(), q.sqrt());
    let d = 1.0 - mu;
    let pmq = s.sinh();
    let lead = 1.0 / (sp + sq);
    let fwd = p * sp * (lead + d * sq / pmq);
    let bwd = q * sq * (lead - d * sp / pmq);
    (fwd, bwd)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    LowDensity,
    HighDensity,
    MaximalCurrent,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagnostics {
    pub a_par: f64,
    pub b_par: f64,
    pub rho_a: f64,
    pub rho_b: f64,
    pub current: f64,
    pub phase: Phase,
}

fn phase_parameter(p: f64, q: f64, mu: f64) -> Result<f64> {
    let den = p - 0.5 * mu;
    if den.abs() <= f64::EPSILON * p {
        return Err(Error::InvalidParameter(format!(
            "mu = {mu} sits on the edge of the admissible range (p = mu sqrt(pq))"
        )));
    }
    Ok((0.5 * mu - q) / den)
}

/// Phase-diagram parameters, effective densities and current.
pub fn phase_point(params: &ModelParams) -> Result<PhaseDiagnostics> {
    let a = phase_parameter(params.p, params.q, params.mu_a)?;
    let b = phase_parameter(params.p, params.q, params.mu_b)?;
    let rho_a = 1.0 / (1.0 + a);
    let rho_b = b / (1.0 + b);
    let (inv_a, inv_b) = (1.0 / a, 1.0 / b);
    let close = |u: f64, v: f64| (u - v).abs() <= PHASE_TOL || (u.is_infinite() && v.is_infinite());
    let phase = if close(inv_a, 1.0) || close(inv_b, 1.0) || (close(inv_a, inv_b) && inv_a < 1.0) {
        Phase::Boundary
    } else if inv_a < 1.0 && inv_a < inv_b {
        Phase::LowDensity
    } else if inv_b < 1.0 && inv_b < inv_a {
        Phase::HighDensity
    } else {
        Phase::MaximalCurrent
    };
    let current = if a > 1.0 && a >= b {
        rho_a * (1.0 - rho_a)
    } else if b > 1.0 && b > a {
        rho_b * (1.0 - rho_b)
    } else {
        0.25
    };
    Ok(PhaseDiagnostics { a_par: a, b_par: b, rho_a, rho_b, current, phase })
}

/// `mu_A` placing the model on the equal-density line for a given `mu_B`.
pub fn equal_density_mu_a(epsilon: f64, mu_b: f64) -> f64 {
    let s = epsilon.sqrt();
    2.0 * s.cosh() - mu_b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRow {
    pub quantity: String,
    pub epsilon: f64,
    pub exact: f64,
    pub expansion: f64,
    pub order: f64,
    pub ratio: f64,
}

/// Residuals of the small-epsilon expansions, divided by the claimed remainder order.
pub fn expansion_audit(eps_grid: &[f64], slope_a: f64, slope_b: f64) -> Result<Vec<ExpansionRow>> {
    let mut rows = Vec::new();
    for &eps in eps_grid {
        let mp = ModelParams::from_mu(eps, 1.0 - eps * slope_a, 1.0 - eps * slope_b)?;
        let ph = phase_point(&mp)?;
        let s = eps.sqrt();
        let (ca, cb) = (0.375 + 0.25 * slope_a, 0.375 + 0.25 * slope_b);
        let entries = [
            ("p", mp.p, 0.5 + 0.5 * s, 1.0),
            ("q", mp.q, 0.5 - 0.5 * s, 1.0),
            ("alpha", mp.alpha, 0.25 + ca * s, 1.0),
            ("beta", mp.beta, 0.25 + cb * s, 1.0),
            ("gamma", mp.gamma, 0.25 - ca * s, 1.0),
            ("delta", mp.delta, 0.25 - cb * s, 1.0),
            ("a", ph.a_par, 1.0 - (1.0 + 2.0 * slope_a) * s, 1.0),
            ("b", ph.b_par, 1.0 - (1.0 + 2.0 * slope_b) * s, 1.0),
            ("rho_a", ph.rho_a, 0.5 + (0.25 + 0.5 * slope_a) * s, 1.5),
            ("rho_b", ph.rho_b, 0.5 - (0.25 + 0.5 * slope_b) * s, 1.5),
        ];
        for (name, exact, expansion, order) in entries {
            rows.push(ExpansionRow {
                quantity: name.to_string(),
                epsilon: eps,
                exact,
                expansion,
                order,
                ratio: (exact - expansion).abs() / eps.powf(order),
            });
        }
    }
    Ok(rows)
}

/// Ratios on the finer half of the grid must not exceed twice the coarser half's maximum.
pub fn expansion_ratios_bounded(rows: &[ExpansionRow]) -> bool {
    let mut names: Vec<&str> = rows.iter().map(|r| r.quantity.as_str()).collect();
    names.dedup();
    names.sort_unstable();
    names.dedup();
    names.iter().all(|name| {
        let mut sel: Vec<&ExpansionRow> = rows.iter().filter(|r| r.quantity == *name).collect();
        sel.sort_by(|x, y| y.epsilon.total_cmp(&x.epsilon));
        let half = sel.len().div_ceil(2);
        let coarse = sel[..half].iter().map(|r| r.ratio).fold(0.0, f64::max);
        let fine = sel[half..].iter().map(|r| r.ratio).fold(0.0, f64::max);
        sel.iter().all(|r| r.ratio.is_finite()) && fine <= 2.0 * coarse.max(f64::MIN_POSITIVE)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_limit() {
        let mp = ModelParams::from_mu(1e-14, 1.0, 1.0).unwrap();
        for r in [mp.alpha, mp.beta, mp.gamma, mp.delta] {
            assert!((r - 0.25).abs() < 1e-6);
        }
        assert!(mp.nu < 1e-13 && mp.lambda.abs() < 1e-6);
    }

    #[test]
    fn rate_relations_at_sample_point() {
        let mp = build_params(&ScalingParams::half_line(0.04, 1.0, 10)).unwrap();
        assert!((mp.alpha / mp.p + mp.gamma / mp.q - 1.0).abs() <= 1e-14);
        let mp = ModelParams::from_mu(0.04, 0.96, 0.92).unwrap();
        assert!((mp.beta / mp.p + mp.delta / mp.q - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn neumann_densities_straddle_half() {
        let mp = ModelParams::from_mu(0.01, 1.0, 1.0).unwrap();
        let ph = phase_point(&mp).unwrap();
        let (sp, sq) = (mp.p.sqrt(), mp.q.sqrt());
        assert!((ph.rho_a - sp / (sp + sq)).abs() < 1e-14);
        assert!((ph.rho_b - sq / (sp + sq)).abs() < 1e-14);
        assert_eq!(ph.phase, Phase::MaximalCurrent);
        assert_eq!(ph.current, 0.25);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_params(&ScalingParams::half_line(0.0, 1.0, 4)).is_err());
        assert!(build_params(&ScalingParams::half_line(0.5, 2.0, 4)).is_err());
        assert!(matches!(
            ModelParams::from_mu(0.5, 0.1, 1.0),
            Err(Error::NegativeRate { name: "gamma", .. })
        ));
        let mut s = ScalingParams::interval(10, 1.0, 1.0);
        s.epsilon = 0.1000001;
        assert!(s.validate().is_err());
    }

    #[test]
    fn equal_density_line_is_outside_class() {
        let eps = 1.0 / 16.0;
        let mu_a = equal_density_mu_a(eps, 1.0);
        let mp = ModelParams::from_mu(eps, mu_a, 1.0).unwrap();
        let ph = phase_point(&mp).unwrap();
        assert!((ph.rho_a - ph.rho_b).abs() < 1e-14);
        assert!(!mp.in_simulation_class());
    }

    #[test]
    fn expansion_ratios_stay_bounded() {
        let rows = expansion_audit(&[1.0 / 16.0, 1.0 / 64.0, 1.0 / 256.0, 1.0 / 1024.0], 2.0, 1.0).unwrap();
        assert!(expansion_ratios_bounded(&rows));
        let rows = expansion_audit(&[1.0 / 16.0, 1.0 / 64.0, 1.0 / 256.0], 0.0, 0.0).unwrap();
        assert!(expansion_ratios_bounded(&rows));
    }
}
