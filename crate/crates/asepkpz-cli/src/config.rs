use asepkpz::gartner::{parse_height_file, InitialCondition};
use asepkpz::params::{Geometry, ScalingParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub replicas: usize,
    pub params: ParamsSection,
    pub simulate: SimulateSection,
    pub kernel: KernelSection,
    pub identities: IdentitiesSection,
    pub she: SheSection,
    pub compare: CompareSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSection {
    pub geometry: Geometry,
    /// Ignored for the interval, where `epsilon = 1/n_sites`.
    pub epsilon: Option<f64>,
    pub n_sites: usize,
    pub slope_a: f64,
    pub slope_b: f64,
    pub expansion_eps: Vec<f64>,
    pub phase_grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub horizon: f64,
    pub samples: usize,
    pub initial: String,
    pub rho: f64,
    pub height_file: Option<String>,
    pub stationary_sites: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub n_sites: usize,
    pub slope_a: f64,
    pub slope_b: f64,
    pub times: Vec<f64>,
    pub depth: usize,
    pub t_bar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentitiesSection {
    pub n_sites: usize,
    pub slope_a: f64,
    pub slope_b: f64,
    pub half_line_slope: f64,
    pub pairs: Vec<[usize; 2]>,
    pub c_star_sites: usize,
    pub c_star_eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SheSection {
    pub cells: usize,
    pub slope_a: f64,
    pub slope_b: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub n_list: Vec<usize>,
    pub slope_a: f64,
    pub slope_b: f64,
    pub t: f64,
    pub x_points: usize,
    pub she_cells: usize,
    pub initial: String,
    pub rho: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 20_241_018,
            replicas: 2000,
            params: ParamsSection::default(),
            simulate: SimulateSection::default(),
            kernel: KernelSection::default(),
            identities: IdentitiesSection::default(),
            she: SheSection::default(),
            compare: CompareSection::default(),
        }
    }
}

impl Default for ParamsSection {
    fn default() -> Self {
        Self {
            geometry: Geometry::Interval,
            epsilon: None,
            n_sites: 64,
            slope_a: 1.0,
            slope_b: 2.0,
            expansion_eps: vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0],
            phase_grid: 41,
        }
    }
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { horizon: 100.0, samples: 11, initial: "bernoulli".into(), rho: 0.5, height_file: None, stationary_sites: 5 }
    }
}

impl Default for KernelSection {
    fn default() -> Self {
        Self { n_sites: 16, slope_a: 1.0, slope_b: 1.0, times: vec![1.0, 10.0, 100.0], depth: 6, t_bar: 1.0 }
    }
}

impl Default for IdentitiesSection {
    fn default() -> Self {
        Self {
            n_sites: 100,
            slope_a: 1.0,
            slope_b: 1.0,
            half_line_slope: 1.0,
            pairs: vec![[0, 0], [0, 1], [10, 10], [3, 40]],
            c_star_sites: 32,
            c_star_eps: vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
        }
    }
}

impl Default for SheSection {
    fn default() -> Self {
        Self { cells: 32, slope_a: 0.0, slope_b: 0.0, horizon: 0.05 }
    }
}

impl Default for CompareSection {
    fn default() -> Self {
        Self {
            n_list: vec![32, 64],
            slope_a: 0.0,
            slope_b: 0.0,
            t: 0.1,
            x_points: 9,
            she_cells: 64,
            initial: "bernoulli".into(),
            rho: 0.5,
        }
    }
}

impl ParamsSection {
    pub fn scaling(&self) -> ScalingParams {
        match self.geometry {
            Geometry::Interval => ScalingParams::interval(self.n_sites, self.slope_a, self.slope_b),
            Geometry::HalfLine => {
                ScalingParams::half_line(self.epsilon.unwrap_or(f64::NAN), self.slope_a, self.n_sites)
            }
        }
    }
}

fn initial_condition(kind: &str, rho: f64, file: Option<&str>) -> Result<InitialCondition, String> {
    match kind {
        "flat" => Ok(InitialCondition::Flat),
        "bernoulli" if (0.0..=1.0).contains(&rho) => Ok(InitialCondition::Bernoulli(rho)),
        "bernoulli" => Err(format!("rho = {rho} outside [0, 1]")),
        "heights" => {
            let path = file.ok_or("initial = \"heights\" needs height_file")?;
            let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}"))?;
            let h = parse_height_file(&text).map_err(|e| e.to_string())?;
            Ok(InitialCondition::Heights(h.h))
        }
        other => Err(format!("unknown initial condition {other:?} (flat | bernoulli | heights)")),
    }
}

impl SimulateSection {
    pub fn initial_condition(&self) -> Result<InitialCondition, String> {
        initial_condition(&self.initial, self.rho, self.height_file.as_deref())
    }
}

impl CompareSection {
    pub fn initial_condition(&self) -> Result<InitialCondition, String> {
        initial_condition(&self.initial, self.rho, None)
    }

    pub fn x_list(&self) -> Vec<f64> {
        let k = self.x_points.max(2) - 1;
        (0..=k).map(|i| i as f64 / k as f64).collect()
    }
}

impl RunConfig {
    /// Every violated precondition for `kind`, so the user sees them all at once.
    pub fn validate(&self, kind: &str) -> Vec<String> {
        let mut errs = Vec::new();
        let all = kind == "audit-all";
        let uses_replicas = matches!(kind, "she" | "compare") || all;
        if uses_replicas && self.replicas < 2 {
            errs.push(format!("replicas = {} (need at least 2)", self.replicas));
        }
        if kind == "params" || kind == "simulate" || all {
            if let Err(e) = self.params.scaling().validate() {
                errs.push(format!("[params] {e}"));
            }
            if self.params.expansion_eps.iter().any(|&e| !(e > 0.0)) {
                errs.push("[params] expansion_eps must be positive".into());
            }
            if self.params.phase_grid < 2 {
                errs.push("[params] phase_grid must be >= 2".into());
            }
        }
        if kind == "simulate" || all {
            let s = &self.simulate;
            if !(s.horizon >= 0.0) {
                errs.push("[simulate] horizon must be >= 0".into());
            }
            if s.samples < 1 {
                errs.push("[simulate] samples must be >= 1".into());
            }
            if !(1..=12).contains(&s.stationary_sites) {
                errs.push("[simulate] stationary_sites must be in 1..=12".into());
            }
            if let Err(e) = s.initial_condition() {
                errs.push(format!("[simulate] {e}"));
            }
        }
        if kind == "kernel" || all {
            let k = &self.kernel;
            if let Err(e) = ScalingParams::interval(k.n_sites, k.slope_a, k.slope_b).validate() {
                errs.push(format!("[kernel] {e}"));
            }
            if k.depth == 0 {
                errs.push("[kernel] depth must be >= 1".into());
            }
            if k.times.iter().any(|&t| !(t > 0.0)) {
                errs.push("[kernel] times must be positive".into());
            }
            if !(k.t_bar > 0.0) {
                errs.push("[kernel] t_bar must be positive".into());
            }
        }
        if kind == "identities" || all {
            let i = &self.identities;
            if let Err(e) = ScalingParams::interval(i.n_sites, i.slope_a, i.slope_b).validate() {
                errs.push(format!("[identities] {e}"));
            }
            if i.slope_a == 0.0 && i.slope_b == 0.0 {
                errs.push("[identities] slope_a = slope_b = 0 is the singular Neumann case".into());
            }
            if i.pairs.iter().any(|p| p[0] >= i.n_sites || p[1] >= i.n_sites) {
                errs.push("[identities] pairs must lie in 0..n_sites".into());
            }
            if i.c_star_sites < 2 {
                errs.push("[identities] c_star_sites must be >= 2".into());
            }
            if i.c_star_eps.iter().any(|&e| !(e > 0.0 && e <= 0.5)) {
                errs.push("[identities] c_star_eps must lie in (0, 1/2]".into());
            }
        }
        if kind == "she" || all {
            let s = &self.she;
            if s.cells < 8 {
                errs.push("[she] cells must be >= 8".into());
            }
            if !(s.horizon > 0.0) {
                errs.push("[she] horizon must be positive".into());
            }
            if s.slope_a < 0.0 || s.slope_b < 0.0 {
                errs.push("[she] slopes must be >= 0".into());
            }
        }
        if kind == "compare" || all {
            let c = &self.compare;
            if c.n_list.is_empty() || c.n_list.iter().any(|&n| n < 2) {
                errs.push("[compare] n_list must hold lattice sizes >= 2".into());
            }
            if !(c.t > 0.0) {
                errs.push("[compare] t must be positive".into());
            }
            if c.x_points < 2 {
                errs.push("[compare] x_points must be >= 2".into());
            }
            if c.she_cells < 8 {
                errs.push("[compare] she_cells must be >= 8".into());
            }
            if let Err(e) = c.initial_condition() {
                errs.push(format!("[compare] {e}"));
            }
        }
        errs
    }
}

pub const DEFAULTS_TOML: &str = r#"# asepkpz run configuration. Every key is optional; shown values are the defaults.

seed = 20241018          # master seed; replica i uses stream i of this seed
replicas = 2000          # Monte-Carlo replicas for she / compare

[params]
geometry = "interval"    # interval | half_line
# epsilon = 0.01         # half line only; the interval uses epsilon = 1/n_sites
n_sites = 64
slope_a = 1.0            # A >= 0, mu_A = 1 - epsilon A
slope_b = 2.0            # B >= 0, mu_B = 1 - epsilon B
expansion_eps = [0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625]
phase_grid = 41          # points per axis of the phase-diagram sweep

[simulate]
horizon = 100.0          # microscopic time
samples = 11             # equally spaced snapshots in [0, horizon]
initial = "bernoulli"    # flat | bernoulli | heights
rho = 0.5
# height_file = "h.txt"  # one integer per line, first line h(0)
stationary_sites = 5     # N for the exact stationary-measure check

[kernel]
n_sites = 16
slope_a = 1.0
slope_b = 1.0
times = [1.0, 10.0, 100.0]
depth = 6                # image blocks on each side
t_bar = 1.0              # audits run to t_bar / epsilon^2

[identities]
n_sites = 100
slope_a = 1.0
slope_b = 1.0
half_line_slope = 1.0
pairs = [[0, 0], [0, 1], [10, 10], [3, 40]]
c_star_sites = 32
c_star_eps = [0.0625, 0.03125, 0.015625]

[she]
cells = 32
slope_a = 0.0
slope_b = 0.0
horizon = 0.05

[compare]
n_list = [32, 64]
slope_a = 0.0
slope_b = 0.0
t = 0.1
x_points = 9
she_cells = 64
initial = "bernoulli"    # flat | bernoulli
rho = 0.5
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_defaults_parse_to_defaults() {
        let parsed: RunConfig = toml::from_str(DEFAULTS_TOML).unwrap();
        assert_eq!(parsed, RunConfig::default());
    }

    #[test]
    fn zero_replicas_rejected() {
        let cfg = RunConfig { replicas: 0, ..RunConfig::default() };
        assert!(!cfg.validate("compare").is_empty());
        assert!(cfg.validate("kernel").is_empty());
    }
}
