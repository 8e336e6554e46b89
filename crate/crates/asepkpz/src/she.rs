//! Mild-form sampler for the SHE with Robin boundaries, its moment oracles, and the
//! comparison against the rescaled particle system.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asep::{replica_rng, AsepState, Event, Lattice, Trajectory};
use crate::error::{Error, Result};
use crate::gartner::{z_field, InitialCondition, ZField};
use crate::kernel::interval::interval_kernel_spectral;
use crate::kernel::spectrum::{robin_laplacian, solve_interval_spectrum, SpectralData};
use crate::params::{build_params, Geometry, ModelParams, ScalingParams};
use crate::stats::{paired_variance_gap, MeanVar};

const SHE_STREAM_SALT: u64 = 0x5ae5_1d0e_77c3_a9b1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SheDomain {
    /// `[0, 1]` with `∂Z = A Z` at 0 and `∂Z = -B Z` at 1.
    Interval { slope_a: f64, slope_b: f64 },
    /// `[0, x_max]` with Robin at 0 and Neumann at the artificial edge.
    HalfLine { slope_a: f64, x_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SheGrid {
    pub domain: SheDomain,
    /// Number of cells; the grid has `m + 1` points.
    pub m: usize,
    pub dt: f64,
    pub horizon: f64,
}

impl SheGrid {
    /// Largest step `<= ΔX²/2` that divides `horizon`.
    pub fn with_max_step(domain: SheDomain, m: usize, horizon: f64) -> Result<Self> {
        let probe = SheGrid { domain, m, dt: 1.0, horizon };
        let dt_max = 0.5 * probe.dx() * probe.dx();
        let steps = (horizon / dt_max).ceil().max(1.0);
        let grid = SheGrid { dt: horizon / steps, ..probe };
        grid.validate()?;
        Ok(grid)
    }

    pub fn length(&self) -> f64 {
        match self.domain {
            SheDomain::Interval { .. } => 1.0,
            SheDomain::HalfLine { x_max, .. } => x_max,
        }
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.m as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.m).map(|i| self.x(i)).collect()
    }

    pub fn mu_a(&self) -> f64 {
        match self.domain {
            SheDomain::Interval { slope_a, .. } | SheDomain::HalfLine { slope_a, .. } => 1.0 - slope_a * self.dx(),
        }
    }

    pub fn mu_b(&self) -> f64 {
        match self.domain {
            SheDomain::Interval { slope_b, .. } => 1.0 - slope_b * self.dx(),
            SheDomain::HalfLine { .. } => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.m < 8 {
            problems.push(format!("M = {} < 8", self.m));
        }
        if !(self.length() > 0.0) {
            problems.push("domain length must be positive".to_string());
        }
        if !(self.dt > 0.0) || self.dt > 0.5 * self.dx() * self.dx() * (1.0 + 1e-12) {
            problems.push(format!("dt = {} violates dt <= dX²/2 = {}", self.dt, 0.5 * self.dx() * self.dx()));
        }
        for (name, mu) in [("mu_A", self.mu_a()), ("mu_B", self.mu_b())] {
            if !(mu > 0.0 && mu <= 1.0) {
                problems.push(format!("{name} = {mu} outside (0, 1]; refine the grid"));
            }
        }
        if !(self.horizon >= 0.0) {
            problems.push("horizon must be nonnegative".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Unstable(problems.join("; ")))
        }
    }

    /// Number of steps to reach `t`, which must be a multiple of `dt`.
    pub fn steps_to(&self, t: f64) -> Result<usize> {
        let k = (t / self.dt).round();
        if (k * self.dt - t).abs() > 1e-9 * t.max(self.dt) || t < 0.0 {
            return Err(Error::OutOfRange(format!("time {t} is not a multiple of dt = {}", self.dt)));
        }
        Ok(k as usize)
    }
}

/// Robin propagator on the grid: `P_T = exp(-(T/ΔX²)(-Δ/2))` with `μ = 1 - AΔX`.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub grid: SheGrid,
    pub spectrum: SpectralData,
    pub step: DMatrix<f64>,
}

impl Propagator {
    pub fn new(grid: &SheGrid) -> Result<Self> {
        grid.validate()?;
        let spectrum = solve_interval_spectrum(grid.m, grid.mu_a(), grid.mu_b())?;
        let step = interval_kernel_spectral(&spectrum, grid.dt / (grid.dx() * grid.dx())).values;
        Ok(Self { grid: *grid, spectrum, step })
    }

    pub fn kernel(&self, t: f64) -> DMatrix<f64> {
        let dx = self.grid.dx();
        interval_kernel_spectral(&self.spectrum, t / (dx * dx)).values
    }
}

/// `E Z_T = ∫ 𝒫_T(X, Y) Z_0(Y) dY` on the grid.
pub fn mean_field(z0: &[f64], prop: &Propagator, t: f64) -> Vec<f64> {
    (prop.kernel(t) * DVector::from_column_slice(z0)).iter().copied().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseMode {
    Gaussian,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldPath {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl FieldPath {
    /// KPZ height `log Z`.
    pub fn kpz(&self) -> Vec<Vec<f64>> {
        self.values.iter().map(|row| row.iter().map(|z| z.ln()).collect()).collect()
    }
}

/// `Z_{n+1} = P_{Δt}[Z_n (1 + ξ_n)]`, `ξ_n ~ N(0, Δt/ΔX)` per site.
///
/// A step with `1 + ξ < 0` aborts the path with `Error::Unstable`.
pub fn sample_she<R: Rng + ?Sized>(
    z0: &[f64],
    prop: &Propagator,
    output_times: &[f64],
    noise: NoiseMode,
    rng: &mut R,
) -> Result<FieldPath> {
    let grid = &prop.grid;
    if z0.len() != grid.m + 1 {
        return Err(Error::InvalidParameter(format!("Z0 has {} points, grid has {}", z0.len(), grid.m + 1)));
    }
    if z0.iter().any(|&z| !(z > 0.0) || !z.is_finite()) {
        return Err(Error::InvalidParameter("Z0 must be positive and finite".into()));
    }
    let mut targets = Vec::with_capacity(output_times.len());
    for w in output_times.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidParameter("output times must increase".into()));
        }
    }
    for &t in output_times {
        if t > grid.horizon * (1.0 + 1e-12) {
            return Err(Error::OutOfRange(format!("output time {t} beyond horizon {}", grid.horizon)));
        }
        targets.push(grid.steps_to(t)?);
    }
    let normal = Normal::new(0.0, (grid.dt / grid.dx()).sqrt()).expect("positive variance");
    let mut z = DVector::from_column_slice(z0);
    let mut values = Vec::with_capacity(targets.len());
    let mut done = 0usize;
    for &target in &targets {
        while done < target {
            if noise == NoiseMode::Gaussian {
                for v in z.iter_mut() {
                    let g = 1.0 + normal.sample(rng);
                    if g < 0.0 {
                        return Err(Error::Unstable(format!("positivity fault at step {done}")));
                    }
                    *v *= g;
                }
            }
            z = &prop.step * z;
            done += 1;
        }
        values.push(z.iter().copied().collect());
    }
    Ok(FieldPath { times: output_times.to_vec(), x: grid.points(), values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondMoment {
    pub values: DMatrix<f64>,
    pub sweeps: usize,
    pub last_change: f64,
}

/// `E[Z_T(X) Z_T(X')]` of the sampler, as the fixed point of
/// `m_{n+1} = P (m_n + diag(d_n) Δt/ΔX) Pᵀ`, `d_n = diag(m_n)`, iterated on the diagonal path.
pub fn second_moment(z0: &[f64], prop: &Propagator, t: f64) -> Result<SecondMoment> {
    let grid = &prop.grid;
    if grid.m > 128 {
        return Err(Error::InvalidParameter("second moment limited to M <= 128".into()));
    }
    let steps = grid.steps_to(t)?;
    let kappa = grid.dt / grid.dx();
    let v0 = DVector::from_column_slice(z0);
    let m0 = &v0 * v0.transpose();
    let p = &prop.step;
    let pt = p.transpose();

    let run = |diag: &[DVector<f64>]| -> (DMatrix<f64>, Vec<DVector<f64>>) {
        let mut m = m0.clone();
        let mut path = Vec::with_capacity(steps + 1);
        path.push(m.diagonal());
        for d in diag.iter().take(steps) {
            let mut inner = m;
            for i in 0..inner.nrows() {
                inner[(i, i)] += kappa * d[i];
            }
            m = p * inner * &pt;
            path.push(m.diagonal());
        }
        (m, path)
    };

    // start from the deterministic evolution
    let mut diag: Vec<DVector<f64>> = {
        let mut mean = v0.clone();
        let mut out = Vec::with_capacity(steps + 1);
        for _ in 0..=steps {
            out.push(mean.component_mul(&mean));
            mean = p * mean;
        }
        out
    };
    let mut last = run(&diag);
    for sweep in 1..=50 {
        let next = run(&last.1);
        let change = (&next.0 - &last.0).amax() / next.0.amax().max(1e-300);
        diag = next.1.clone();
        last = next;
        if change < 1e-8 {
            return Ok(SecondMoment { values: last.0, sweeps: sweep + 1, last_change: change });
        }
    }
    let _ = diag;
    Err(Error::NoConvergence("second moment did not settle in 50 sweeps".into()))
}

/// `φ(X) = χ(X)(c₁ cos ωX + c₂ sin ωX)` with `φ'(0) = Aφ(0)` and, on the interval, `φ'(1) = -Bφ(1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub omega: f64,
    pub c1: f64,
    pub c2: f64,
    /// Half line only: `χ = 1` on `[0, r]`, smooth decay to 0 at `2r`.
    pub cutoff: Option<f64>,
}

impl TestFunction {
    /// `k`-th Robin mode on `[0, 1]`.
    pub fn interval_mode(k: usize, slope_a: f64, slope_b: f64) -> Result<Self> {
        let (a, b) = (slope_a, slope_b);
        let kpi = k as f64 * std::f64::consts::PI;
        if a + b == 0.0 {
            return Ok(Self { omega: kpi, c1: 1.0, c2: 0.0, cutoff: None });
        }
        // (ω² - AB) sin ω / ω - (A + B) cos ω changes sign on (kπ, (k+1)π)
        let g = |w: f64| (w * w - a * b) * w.sin() / w - (a + b) * w.cos();
        let (mut lo, mut hi) = (kpi.max(1e-12), kpi + std::f64::consts::PI);
        let glo = g(lo);
        if glo * g(hi) > 0.0 {
            return Err(Error::Bracketing { k, g_lo: glo, g_hi: g(hi) });
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) * glo > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let omega = 0.5 * (lo + hi);
        Ok(Self { omega, c1: 1.0, c2: a / omega, cutoff: None })
    }

    /// Half-line function with frequency `omega`, Robin slope `A` at 0, cut off beyond `r`.
    pub fn half_line(omega: f64, slope_a: f64, r: f64) -> Self {
        let c2 = if omega == 0.0 { 0.0 } else { slope_a / omega };
        Self { omega, c1: 1.0, c2, cutoff: Some(r) }
    }

    fn chi(&self, x: f64) -> f64 {
        match self.cutoff {
            None => 1.0,
            Some(r) => {
                let s = (x - r) / r;
                if s <= 0.0 {
                    1.0
                } else if s >= 1.0 {
                    0.0
                } else {
                    let f = |u: f64| if u > 0.0 { (-1.0 / u).exp() } else { 0.0 };
                    f(1.0 - s) / (f(1.0 - s) + f(s))
                }
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let base = if self.omega == 0.0 && self.c2 == 0.0 {
            self.c1
        } else {
            self.c1 * (self.omega * x).cos() + self.c2 * (self.omega * x).sin()
        };
        // a Robin slope with ω = 0 needs the linear mode c₁ + A x
        let base = if self.omega == 0.0 && self.c2 != 0.0 { self.c1 + self.c2 * x } else { base };
        self.chi(x) * base
    }

    /// Values at `X = i·h`, `i = 0..=m`.
    pub fn sample(&self, h: f64, m: usize) -> Vec<f64> {
        (0..=m).map(|i| self.eval(i as f64 * h)).collect()
    }

    /// One-sided derivative, Richardson-extrapolated.
    pub fn slope(&self, x: f64, dir: f64) -> f64 {
        let d = |h: f64| {
            let h = dir * h;
            (-3.0 * self.eval(x) + 4.0 * self.eval(x + h) - self.eval(x + 2.0 * h)) / (2.0 * h)
        };
        let r = |h: f64| (4.0 * d(0.5 * h) - d(h)) / 3.0;
        (8.0 * r(1e-3) - r(2e-3)) / 7.0
    }

    /// Worst violation of the boundary slope relations.
    pub fn boundary_error(&self, slope_a: f64, slope_b: Option<f64>) -> f64 {
        let left = (self.slope(0.0, 1.0) - slope_a * self.eval(0.0)).abs();
        let right = slope_b.map_or(0.0, |b| (self.slope(1.0, -1.0) + b * self.eval(1.0)).abs());
        left.max(right)
    }
}

/// Particle-side run setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsepRun {
    pub scaling: ScalingParams,
    pub initial: InitialCondition,
}

impl AsepRun {
    pub fn params(&self) -> Result<ModelParams> {
        build_params(&self.scaling)
    }

    pub fn lattice(&self) -> Lattice {
        match self.scaling.geometry {
            Geometry::Interval => Lattice::Interval(self.scaling.n_sites),
            Geometry::HalfLine => Lattice::HalfLineTruncated(self.scaling.n_sites),
        }
    }
}

/// Per-replica output: `Z` at time 0 and at each requested time, and the martingale functionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsepObservation {
    pub z0: ZField,
    pub z: Vec<ZField>,
    /// `[time][test function]`.
    pub n_values: Vec<Vec<f64>>,
    pub compensators: Vec<Vec<f64>>,
}

fn event_site(ev: Event, n: usize) -> usize {
    match ev {
        Event::RightJump(x) | Event::LeftJump(x) => x,
        Event::CreateLeft | Event::AnnihilateLeft => 0,
        Event::CreateRight | Event::AnnihilateRight => n,
    }
}

// ∫_{s0}^{s1} e^{k s} ds
fn exp_integral(k: f64, s0: f64, s1: f64) -> f64 {
    if k == 0.0 {
        s1 - s0
    } else {
        (k * s0).exp() * (k * (s1 - s0)).exp_m1() / k
    }
}

struct Functional {
    phi: Vec<f64>,
    lap_weights: Vec<f64>,
    drift: f64,
    quad: f64,
    drift_int: f64,
    quad_int: f64,
}

/// Runs one replica to each microscopic time in `t_micro`.
///
/// `phis[j]` holds `φ_j(εx)` for `x = 0..=N`. `N^ε_t(φ) = (𝒵_t, φ) - (𝒵_0, φ) - ∫ (½ΔZ, φ)` with
/// `(f, g) = ε Σ f g` and Robin ghosts in `Δ`; the compensator is `ε³ ∫ Σ φ² Z² dt`.
pub fn observe_asep_replica<R: Rng + ?Sized>(
    run: &AsepRun,
    t_micro: &[f64],
    phis: &[Vec<f64>],
    rng: &mut R,
) -> Result<AsepObservation> {
    let params = run.params()?;
    let lattice = run.lattice();
    let n = lattice.n();
    let eps = params.epsilon;
    for phi in phis {
        if phi.len() != n + 1 {
            return Err(Error::InvalidParameter(format!("test function has {} values, need {}", phi.len(), n + 1)));
        }
        if !lattice.has_right_reservoir() && (phi[n] != 0.0 || phi[n - 1] != 0.0) {
            return Err(Error::InvalidParameter("half-line test function must vanish near the truncation".into()));
        }
    }
    let h_init = run.initial.sample(n, rng)?;
    let config = h_init.to_config();
    let mut st = AsepState::new(&config, h_init.h[0], &params, &lattice)?;
    let (lam, nu) = (params.lambda, params.nu);
    let mut b: Vec<f64> = h_init.h.iter().map(|&h| (-lam * h as f64).exp()).collect();
    let mu_b = if lattice.has_right_reservoir() { params.mu_b } else { 1.0 };
    let lap = robin_laplacian(n, params.mu_a, mu_b);
    let mut fns: Vec<Functional> = phis
        .iter()
        .map(|phi| {
            let w: Vec<f64> = (&lap * DVector::from_column_slice(phi)).iter().map(|v| -eps * v).collect();
            let drift = w.iter().zip(&b).map(|(w, b)| w * b).sum();
            let quad = eps.powi(3) * phi.iter().zip(&b).map(|(p, b)| p * p * b * b).sum::<f64>();
            Functional { phi: phi.clone(), lap_weights: w, drift, quad, drift_int: 0.0, quad_int: 0.0 }
        })
        .collect();
    let pair0: Vec<f64> = phis.iter().map(|phi| eps * phi.iter().zip(&b).map(|(p, b)| p * b).sum::<f64>()).collect();
    let z0 = z_field(&h_init, 0.0, &params);

    let mut z = Vec::with_capacity(t_micro.len());
    let mut n_values = Vec::with_capacity(t_micro.len());
    let mut compensators = Vec::with_capacity(t_micro.len());
    let mut s_prev = 0.0;
    for &target in t_micro {
        if target < s_prev {
            return Err(Error::InvalidParameter("observation times must increase".into()));
        }
        let integrate = |fns: &mut [Functional], s0: f64, s1: f64| {
            let (e1, e2) = (exp_integral(nu, s0, s1), exp_integral(2.0 * nu, s0, s1));
            for f in fns.iter_mut() {
                f.drift_int += f.drift * e1;
                f.quad_int += f.quad * e2;
            }
        };
        st.run_until(rng, target, |state, ev| {
            let s = state.time();
            integrate(&mut fns, s_prev, s);
            s_prev = s;
            let x = event_site(ev, n);
            let nb = (-lam * state.heights()[x] as f64).exp();
            for f in fns.iter_mut() {
                f.drift += f.lap_weights[x] * (nb - b[x]);
                f.quad += eps.powi(3) * f.phi[x] * f.phi[x] * (nb * nb - b[x] * b[x]);
            }
            b[x] = nb;
        });
        integrate(&mut fns, s_prev, target);
        s_prev = target;
        let snap = st.snapshot();
        let growth = (nu * target).exp();
        n_values.push(
            fns.iter()
                .zip(&pair0)
                .map(|(f, p0)| eps * f.phi.iter().zip(&b).map(|(p, b)| p * b).sum::<f64>() * growth - p0 - f.drift_int)
                .collect(),
        );
        compensators.push(fns.iter().map(|f| f.quad_int).collect());
        z.push(z_field(&snap.height, target, &params));
    }
    Ok(AsepObservation { z0, z, n_values, compensators })
}

/// Trapezoid version of the functionals from a sampled trajectory; the spacing must not exceed `ε⁻²·10⁻³`.
pub fn martingale_from_trajectory(
    traj: &Trajectory,
    params: &ModelParams,
    lattice: &Lattice,
    phi: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let eps = params.epsilon;
    let limit = 1e-3 / (eps * eps);
    if traj.sample_times.first().copied() != Some(0.0) {
        return Err(Error::OutOfRange("trajectory must be sampled at t = 0".into()));
    }
    if traj.sample_times.windows(2).any(|w| w[1] - w[0] > limit * (1.0 + 1e-12)) {
        return Err(Error::OutOfRange(format!("time integral unresolved: sample spacing exceeds {limit}")));
    }
    let n = lattice.n();
    let mu_b = if lattice.has_right_reservoir() { params.mu_b } else { 1.0 };
    let lap = robin_laplacian(n, params.mu_a, mu_b);
    let w: Vec<f64> = (&lap * DVector::from_column_slice(phi)).iter().map(|v| -eps * v).collect();
    let dens = |zf: &ZField| {
        let z = zf.values();
        let drift: f64 = w.iter().zip(&z).map(|(w, z)| w * z).sum();
        let quad: f64 = eps.powi(3) * phi.iter().zip(&z).map(|(p, z)| p * p * z * z).sum::<f64>();
        let pair: f64 = eps * phi.iter().zip(&z).map(|(p, z)| p * z).sum::<f64>();
        (drift, quad, pair)
    };
    let fields: Vec<(f64, f64, f64)> =
        traj.snapshots.iter().zip(&traj.sample_times).map(|(s, &t)| dens(&z_field(&s.height, t, params))).collect();
    let mut out = Vec::with_capacity(fields.len());
    let (mut di, mut qi) = (0.0, 0.0);
    for i in 0..fields.len() {
        if i > 0 {
            let dt = traj.sample_times[i] - traj.sample_times[i - 1];
            di += 0.5 * dt * (fields[i].0 + fields[i - 1].0);
            qi += 0.5 * dt * (fields[i].1 + fields[i - 1].1);
        }
        out.push((fields[i].2 - fields[0].2 - di, qi));
    }
    Ok(out)
}

fn run_replicas(run: &AsepRun, t_micro: &[f64], phis: &[Vec<f64>], replicas: usize, seed: u64) -> Result<Vec<AsepObservation>> {
    if replicas == 0 {
        return Err(Error::InvalidParameter("replica count must be positive".into()));
    }
    (0..replicas as u64)
        .into_par_iter()
        .map(|i| observe_asep_replica(run, t_micro, phis, &mut replica_rng(seed, i)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanChannelReport {
    pub t_macro: f64,
    pub sites: Vec<usize>,
    /// Moments of `Z_t(x) - Σ_y p_t(x, y) Z_0(y)`.
    pub deviation: Vec<MeanVar>,
    pub asep_mean: Vec<f64>,
}

impl MeanChannelReport {
    pub fn passed(&self, k: f64) -> bool {
        self.deviation.iter().all(|d| d.within(0.0, k))
    }
}

/// Checks `E Z_t(x) = E Σ_y p^R_t(x, y) Z_0(y)` replica by replica.
pub fn mean_channel(run: &AsepRun, t_macro: f64, sites: &[usize], replicas: usize, seed: u64) -> Result<MeanChannelReport> {
    let params = run.params()?;
    let n = match run.lattice() {
        Lattice::Interval(n) => n,
        Lattice::HalfLineTruncated(_) => {
            return Err(Error::InvalidParameter("mean channel is implemented for the interval".into()))
        }
    };
    if sites.iter().any(|&x| x > n) {
        return Err(Error::OutOfRange("site beyond lattice".into()));
    }
    let t = t_macro / (params.epsilon * params.epsilon);
    let spec = solve_interval_spectrum(n, params.mu_a, params.mu_b)?;
    let kernel = interval_kernel_spectral(&spec, t);
    let obs = run_replicas(run, &[t], &[], replicas, seed)?;
    let mut deviation = vec![MeanVar::default(); sites.len()];
    let mut means = vec![MeanVar::default(); sites.len()];
    for o in &obs {
        let z0 = o.z0.values();
        let zt = o.z[0].values();
        for (j, &x) in sites.iter().enumerate() {
            let pred: f64 = (0..=n).map(|y| kernel.get(x, y) * z0[y]).sum();
            deviation[j].push(zt[x] - pred);
            means[j].push(zt[x]);
        }
    }
    Ok(MeanChannelReport { t_macro, sites: sites.to_vec(), deviation, asep_mean: means.iter().map(|m| m.mean).collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub label: String,
    pub t_macro: f64,
    pub replicas: usize,
    pub n_stats: MeanVar,
    /// Moments of `N² - ∫ (𝒵², φ²) dS`.
    pub gap_stats: MeanVar,
}

impl MartingaleReport {
    pub fn passed(&self, k: f64) -> bool {
        self.n_stats.within(0.0, k) && self.gap_stats.within(0.0, k)
    }
}

pub fn martingale_diagnostics(
    run: &AsepRun,
    tests: &[(String, TestFunction)],
    t_macro: f64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<MartingaleReport>> {
    let params = run.params()?;
    let n = run.lattice().n();
    let eps = params.epsilon;
    let phis: Vec<Vec<f64>> = tests.iter().map(|(_, f)| f.sample(eps, n)).collect();
    let obs = run_replicas(run, &[t_macro / (eps * eps)], &phis, replicas, seed)?;
    Ok(tests
        .iter()
        .enumerate()
        .map(|(j, (label, _))| {
            let n_stats: MeanVar = obs.iter().map(|o| o.n_values[0][j]).collect();
            let gap_stats: MeanVar = obs.iter().map(|o| o.n_values[0][j].powi(2) - o.compensators[0][j]).collect();
            MartingaleReport { label: label.clone(), t_macro, replicas, n_stats, gap_stats }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSetup {
    pub n_list: Vec<usize>,
    pub slope_a: f64,
    pub slope_b: f64,
    pub initial: InitialCondition,
    pub t_list: Vec<f64>,
    pub x_list: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    /// Cells of the reference SHE grid on `[0, 1]`.
    pub she_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub epsilon: f64,
    pub t: f64,
    pub x: f64,
    pub asep_mean: f64,
    pub she_mean: f64,
    pub mean_gap: f64,
    pub asep_var: f64,
    pub she_var: f64,
    pub var_gap: f64,
    pub mc_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOutcome {
    pub rows: Vec<CompareRow>,
    pub positivity_faults: usize,
    pub she_steps: usize,
}

/// Matched-initial-data comparison of `𝒵^ε` against the SHE sampler on a fixed reference grid.
pub fn asep_she_compare(setup: &CompareSetup) -> Result<CompareOutcome> {
    let domain = SheDomain::Interval { slope_a: setup.slope_a, slope_b: setup.slope_b };
    let t_last = setup.t_list.iter().copied().fold(0.0, f64::max);
    let grid = SheGrid::with_max_step(domain, setup.she_cells, t_last.max(1e-12))?;
    let prop = Propagator::new(&grid)?;
    let she_times: Vec<f64> = setup.t_list.iter().copied().filter(|&t| t > 0.0).collect();
    for &x in &setup.x_list {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfRange(format!("X = {x} outside [0, 1]")));
        }
    }
    let mut rows = Vec::new();
    let mut faults = 0;
    for (k, &n) in setup.n_list.iter().enumerate() {
        let run = AsepRun { scaling: ScalingParams::interval(n, setup.slope_a, setup.slope_b), initial: setup.initial.clone() };
        let eps = 1.0 / n as f64;
        let t_micro: Vec<f64> = she_times.iter().map(|t| t / (eps * eps)).collect();
        let stream = (k as u64) << 32;
        let pairs: Vec<Result<(Vec<Vec<f64>>, Option<Vec<Vec<f64>>>)>> = (0..setup.replicas as u64)
            .into_par_iter()
            .map(|i| {
                let obs = observe_asep_replica(&run, &t_micro, &[], &mut replica_rng(setup.seed, stream | i))?;
                let at = |zf: &ZField| setup.x_list.iter().map(|&x| zf.at(x / eps)).collect::<Vec<f64>>();
                let mut asep = vec![at(&obs.z0)];
                asep.extend(obs.z.iter().map(at));
                let she_z0: Vec<f64> = grid.points().iter().map(|&x| obs.z0.at(x / eps)).collect();
                let mut rng = replica_rng(setup.seed ^ SHE_STREAM_SALT, stream | i);
                let she = match sample_she(&she_z0, &prop, &she_times, NoiseMode::Gaussian, &mut rng) {
                    Ok(path) => {
                        let zf = |row: &Vec<f64>| {
                            let log_z = row.iter().map(|v| v.ln()).collect();
                            ZField { log_z, time_stamp: 0.0 }
                        };
                        let interp = |row: &Vec<f64>| {
                            let f = zf(row);
                            setup.x_list.iter().map(|&x| f.at(x / grid.dx())).collect::<Vec<f64>>()
                        };
                        let mut out = vec![interp(&she_z0)];
                        out.extend(path.values.iter().map(interp));
                        Some(out)
                    }
                    Err(Error::Unstable(_)) => None,
                    Err(e) => return Err(e),
                };
                Ok((asep, she))
            })
            .collect();
        let mut asep_cols: Vec<Vec<Vec<f64>>> = Vec::new();
        let mut she_cols: Vec<Vec<Vec<f64>>> = Vec::new();
        for p in pairs {
            let (a, s) = p?;
            match s {
                Some(s) => {
                    asep_cols.push(a);
                    she_cols.push(s);
                }
                None => faults += 1,
            }
        }
        if asep_cols.len() < 2 {
            return Err(Error::InvalidParameter("fewer than two usable replicas".into()));
        }
        for &t in &setup.t_list {
            let ti = if t > 0.0 { 1 + she_times.iter().position(|&s| s == t).expect("listed") } else { 0 };
            for (j, &x) in setup.x_list.iter().enumerate() {
                let a: Vec<f64> = asep_cols.iter().map(|r| r[ti][j]).collect();
                let s: Vec<f64> = she_cols.iter().map(|r| r[ti][j]).collect();
                let am: f64 = a.iter().sum::<f64>() / a.len() as f64;
                let sm: f64 = s.iter().sum::<f64>() / s.len() as f64;
                let gap = paired_variance_gap(&a, &s);
                rows.push(CompareRow {
                    epsilon: eps,
                    t,
                    x,
                    asep_mean: am,
                    she_mean: sm,
                    mean_gap: (am - sm).abs(),
                    asep_var: gap.var_a,
                    she_var: gap.var_b,
                    var_gap: gap.gap.abs(),
                    mc_sigma: gap.sigma,
                });
            }
        }
    }
    Ok(CompareOutcome { rows, positivity_faults: faults, she_steps: grid.steps_to(t_last).unwrap_or(0) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub epsilon: f64,
    pub var_gap: f64,
    pub mc_sigma: f64,
}

/// Profile-averaged variance gap per ε at time `t`, in the order of first appearance.
pub fn variance_trend(rows: &[CompareRow], t: f64) -> Vec<TrendPoint> {
    let mut out: Vec<(f64, Vec<&CompareRow>)> = Vec::new();
    for r in rows.iter().filter(|r| r.t == t) {
        match out.iter_mut().find(|(e, _)| *e == r.epsilon) {
            Some((_, v)) => v.push(r),
            None => out.push((r.epsilon, vec![r])),
        }
    }
    out.into_iter()
        .map(|(epsilon, v)| {
            let k = v.len() as f64;
            TrendPoint {
                epsilon,
                var_gap: v.iter().map(|r| r.var_gap).sum::<f64>() / k,
                mc_sigma: v.iter().map(|r| r.mc_sigma).sum::<f64>() / k,
            }
        })
        .collect()
}

/// Each gap is at most the previous one plus `k` combined standard errors.
pub fn trend_non_increasing(points: &[TrendPoint], k: f64) -> bool {
    points.windows(2).all(|w| w[1].var_gap <= w[0].var_gap + k * w[0].mc_sigma.hypot(w[1].mc_sigma))
}
