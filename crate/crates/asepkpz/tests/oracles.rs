use asepkpz::asep::{
    exact_generator, replica_rng, simulate, sos_simulate, stationary_measure, AsepState, Configuration, Event,
    HeightField, Lattice,
};
use asepkpz::gartner::{near_equilibrium_constants, z_field, InitialCondition};
use asepkpz::green::{c_closed_form, f_matrix};
use asepkpz::kernel::{free_walk_kernel, halfline_robin_kernel, interval_kernel_spectral, solve_interval_spectrum};
use asepkpz::params::{build_params, ModelParams, ScalingParams};
use asepkpz::she::{mean_field, sample_she, second_moment, NoiseMode, Propagator, SheDomain, SheGrid};
use asepkpz::stats::MeanVar;
use nalgebra::DMatrix;
use rand::Rng;

/// Generator of the rate-1 walk on `{0..=n}` with ghosts `Z(-1) = mu_a Z(0)` and `Z(n+1) = mu_b Z(n)`.
fn ghost_generator(n: usize, mu_a: f64, mu_b: f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(n + 1, n + 1);
    for x in 0..=n {
        g[(x, x)] = -1.0;
        if x > 0 {
            g[(x, x - 1)] = 0.5;
        }
        if x < n {
            g[(x, x + 1)] = 0.5;
        }
    }
    g[(0, 0)] += 0.5 * mu_a;
    g[(n, n)] += 0.5 * mu_b;
    g
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

#[test]
fn free_kernel_is_a_poisson_mixture() {
    for t in [0.1f64, 1.0, 7.5, 30.0] {
        for x in [0i64, 1, 2, 5, 17] {
            let mut sum = 0.0;
            for k in (x.unsigned_abs() as usize..400).step_by(2) {
                let right = (k + x.unsigned_abs() as usize) / 2;
                // Poisson(t) jump count times binomial displacement; the k! terms cancel
                let ln_w = -t + k as f64 * (0.5 * t).ln() - ln_factorial(right) - ln_factorial(k - right);
                sum += ln_w.exp();
            }
            let got = free_walk_kernel(t, x);
            assert!((got - sum).abs() <= 1e-13 + 1e-11 * sum, "t={t} x={x}: {got} vs {sum}");
        }
    }
}

#[test]
fn interval_kernel_is_generator_exponential() {
    let mut rng = replica_rng(11, 0);
    for _ in 0..8 {
        let n = rng.gen_range(1..30usize);
        let (ma, mb) = (rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0));
        let spec = solve_interval_spectrum(n, ma, mb).unwrap();
        for t in [0.3, 4.0, 40.0] {
            let oracle = (ghost_generator(n, ma, mb) * t).exp();
            let gap = (interval_kernel_spectral(&spec, t).values - oracle).amax();
            assert!(gap <= 1e-11, "n={n} t={t}: {gap:e}");
        }
    }
}

#[test]
fn half_line_kernel_matches_truncated_generator() {
    // far wall at distance ~ 200 sqrt(t) contributes nothing in double precision
    for mu in [0.0, 0.5, 0.97, 1.0] {
        for t in [0.5, 5.0, 25.0] {
            let oracle = (ghost_generator(400, mu, 0.0) * t).exp();
            for (x, y) in [(0, 0), (0, 3), (2, 9), (10, 4), (30, 31)] {
                let got = halfline_robin_kernel(t, x, y, mu);
                let want = oracle[(x as usize, y as usize)];
                assert!((got - want).abs() <= 1e-12, "mu={mu} t={t} ({x},{y}): {got} vs {want}");
            }
        }
    }
}

#[test]
fn single_site_event_counts() {
    let mp = ModelParams::from_mu(1.0 / 16.0, 0.9, 0.8).unwrap();
    let (horizon, replicas) = (20.0, 4000);
    let mut creates = MeanVar::default();
    for i in 0..replicas {
        let mut st = AsepState::new(&Configuration::empty(1), 0, &mp, &Lattice::Interval(1)).unwrap();
        let mut count = 0.0;
        st.run_until(&mut replica_rng(5, i), horizon, |_, ev| {
            if ev == Event::CreateLeft {
                count += 1.0;
            }
        });
        creates.push(count);
    }
    // two-state chain started empty: integrate P(empty at s) over [0, horizon]
    let r = mp.alpha + mp.beta + mp.gamma + mp.delta;
    let pi_empty = (mp.beta + mp.gamma) / r;
    let empty_time = pi_empty * horizon + (1.0 - pi_empty) * (1.0 - (-r * horizon).exp()) / r;
    let expected = mp.alpha * empty_time;
    assert!(creates.within(expected, 4.0), "{} ± {} vs {expected}", creates.mean, creates.sem());
}

#[test]
fn long_run_occupations_match_exact_stationary_measure() {
    let n = 3;
    let mp = ModelParams::from_mu(1.0 / 9.0, 0.85, 0.95).unwrap();
    let pi = stationary_measure(&exact_generator(&mp, n).unwrap()).unwrap();
    let replicas = 6000;
    let mut counts = vec![0usize; 1 << n];
    for i in 0..replicas {
        let tr = simulate(&Configuration::empty(n), &mp, &Lattice::Interval(n), 60.0, &[60.0], 100 + i).unwrap();
        counts[tr.snapshots[0].config.index()] += 1;
    }
    for (s, &c) in counts.iter().enumerate() {
        let f = c as f64 / replicas as f64;
        let sigma = (pi[s] * (1.0 - pi[s]) / replicas as f64).sqrt();
        assert!((f - pi[s]).abs() <= 4.0 * sigma, "state {s}: {f} vs {}", pi[s]);
    }
}

#[test]
fn height_dynamics_match_particle_dynamics() {
    let n = 8;
    let mp = build_params(&ScalingParams::interval(n, 1.0, 2.0)).unwrap();
    let start = Configuration::alternating(n);
    let h0 = HeightField::from_config(&start, 0);
    let (t, replicas) = (3.0, 3000u64);
    let mut particle = vec![MeanVar::default(); n + 1];
    let mut sos = vec![MeanVar::default(); n + 1];
    for i in 0..replicas {
        let a = simulate(&start, &mp, &Lattice::Interval(n), t, &[t], i).unwrap();
        let b = sos_simulate(&h0, &mp, &Lattice::Interval(n), t, &[t], replicas + i).unwrap();
        for x in 0..=n {
            particle[x].push(a.snapshots[0].height.h[x] as f64);
            sos[x].push(b.snapshots[0].height.h[x] as f64);
        }
    }
    for x in 0..=n {
        let (a, b) = (&particle[x], &sos[x]);
        let sigma = (a.sem().powi(2) + b.sem().powi(2)).sqrt();
        assert!((a.mean - b.mean).abs() <= 4.0 * sigma, "x={x}: {} vs {}", a.mean, b.mean);
    }
}

#[test]
fn c_routes_agree_and_scale_with_epsilon() {
    let mut ratios = Vec::new();
    for n in [16usize, 32, 64, 128] {
        let s = ScalingParams::interval(n, 1.0, 2.0);
        let f = f_matrix(&solve_interval_spectrum(n, s.mu_a(), s.mu_b()).unwrap()).unwrap();
        let cc = c_closed_form(n, s.mu_a(), s.mu_b()).unwrap();
        assert!((f.c - cc).abs() <= 1e-8);
        assert!(f.c >= 0.0);
        ratios.push(f.c / s.epsilon);
    }
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(hi <= 1.25 * lo, "{ratios:?}");
}

#[test]
fn she_propagator_is_scaled_walk_kernel() {
    let grid = SheGrid::with_max_step(SheDomain::Interval { slope_a: 1.0, slope_b: 0.5 }, 24, 0.05).unwrap();
    let prop = Propagator::new(&grid).unwrap();
    let dx = grid.dx();
    let oracle = (ghost_generator(24, grid.mu_a(), grid.mu_b()) * (grid.dt / (dx * dx))).exp();
    assert!((&prop.step - oracle).amax() <= 1e-10);
}

#[test]
fn she_moments_match_monte_carlo() {
    let grid = SheGrid::with_max_step(SheDomain::Interval { slope_a: 0.0, slope_b: 1.0 }, 12, 0.02).unwrap();
    let prop = Propagator::new(&grid).unwrap();
    let z0: Vec<f64> = (0..=12).map(|i| 1.0 + 0.3 * (i as f64 * 0.5).sin()).collect();
    let mf = mean_field(&z0, &prop, grid.horizon);
    let m2 = second_moment(&z0, &prop, grid.horizon).unwrap();

    let replicas = 8000u64;
    let mut first = vec![MeanVar::default(); 13];
    let mut second = vec![MeanVar::default(); 13];
    for i in 0..replicas {
        let path = sample_she(&z0, &prop, &[grid.horizon], NoiseMode::Gaussian, &mut replica_rng(77, i)).unwrap();
        for x in 0..=12 {
            let v = path.values[0][x];
            first[x].push(v);
            second[x].push(v * v);
        }
    }
    for x in 0..=12 {
        assert!(first[x].within(mf[x], 4.0), "mean x={x}");
        assert!(second[x].within(m2.values[(x, x)], 4.0), "second moment x={x}");
    }
}

#[test]
fn bernoulli_start_is_near_equilibrium() {
    let mut consts = Vec::new();
    for n in [64usize, 256] {
        let mp = build_params(&ScalingParams::interval(n, 1.0, 1.0)).unwrap();
        let mut rng = replica_rng(3, n as u64);
        let samples: Vec<Vec<f64>> = (0..400)
            .map(|_| {
                let h = InitialCondition::Bernoulli(0.5).sample(n, &mut rng).unwrap();
                z_field(&h, 0.0, &mp).values()
            })
            .collect();
        consts.push(near_equilibrium_constants(&samples, 1.0 / n as f64));
    }
    let (c64, c256) = (consts[0], consts[1]);
    assert!(c256.0 <= 2.0 * c64.0 && c256.1 <= 2.0 * c64.1, "{consts:?}");
}

fn mc_moments(grid: &SheGrid, z0: &[f64], replicas: u64, seed: u64) -> (Vec<MeanVar>, Vec<MeanVar>) {
    let prop = Propagator::new(grid).unwrap();
    let mut first = vec![MeanVar::default(); z0.len()];
    let mut second = vec![MeanVar::default(); z0.len()];
    let mut faults = 0;
    for i in 0..replicas {
        let Ok(path) = sample_she(z0, &prop, &[grid.horizon], NoiseMode::Gaussian, &mut replica_rng(seed, i)) else {
            faults += 1;
            continue;
        };
        for (x, &v) in path.values[0].iter().enumerate() {
            first[x].push(v);
            second[x].push(v * v);
        }
    }
    assert!((faults as f64) < 1e-3 * replicas as f64, "{faults} positivity faults");
    (first, second)
}

#[test]
fn halving_the_step_stays_within_error_bars() {
    let coarse = SheGrid::with_max_step(SheDomain::Interval { slope_a: 0.0, slope_b: 0.0 }, 16, 0.1).unwrap();
    let fine = SheGrid { dt: 0.5 * coarse.dt, ..coarse.clone() };
    let z0 = vec![1.0; 17];
    let (c1, c2) = mc_moments(&coarse, &z0, 2000, 21);
    let (f1, f2) = mc_moments(&fine, &z0, 2000, 22);
    for x in 0..=16 {
        for (a, b) in [(&c1[x], &f1[x]), (&c2[x], &f2[x])] {
            let sigma = (a.sem().powi(2) + b.sem().powi(2)).sqrt();
            assert!((a.mean - b.mean).abs() <= 3.0 * sigma, "x={x}: {} vs {} (sigma {sigma})", a.mean, b.mean);
        }
    }
}
