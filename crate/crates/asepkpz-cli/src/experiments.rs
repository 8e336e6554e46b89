use std::f64::consts::PI;

use anyhow::Result;
use asepkpz::asep::{
    exact_generator, mean_current, product_bernoulli, replica_rng, simulate_with_rng, stationary_measure,
    total_variation, Lattice,
};
use asepkpz::gartner::{bracket_rate, drift_identity_residual};
use asepkpz::green::{
    c_closed_form, c_star_estimate, c_star_weighted, f_matrix, green_corner_closed_form, green_matrix,
    halfline_corner_limit, key_identity, summation_by_parts_audit, KernelSource,
};
use asepkpz::io::{column_file, compare_csv, csv, field_csv, fmt_f64, trajectory_csvs, Cell};
use asepkpz::kernel::{
    interval_kernel_image, interval_kernel_spectral, kernel_bound_audit, solve_interval_spectrum,
};
use asepkpz::params::{
    build_params, equal_density_mu_a, expansion_audit, expansion_ratios_bounded, phase_point, Geometry,
    ModelParams, Phase, ScalingParams,
};
use asepkpz::she::{
    asep_she_compare, martingale_diagnostics, mean_channel, mean_field, sample_she, second_moment,
    trend_non_increasing, variance_trend, AsepRun, CompareSetup, NoiseMode, Propagator, SheDomain, SheGrid,
    TestFunction,
};
use asepkpz::stats::MeanVar;
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::Run;

fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

pub fn params(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let scaling = cfg.params.scaling();
    let mp = build_params(&scaling)?;
    let ph = phase_point(&mp)?;
    run.write_json("params.json", &json!({ "scaling": scaling, "model": mp, "phase": ph }))?;
    let rel = (mp.alpha / mp.p + mp.gamma / mp.q - 1.0).abs().max((mp.beta / mp.p + mp.delta / mp.q - 1.0).abs());
    run.check("rate_relations", rel <= 1e-14, format!("max residual {}", sci(rel)));
    let pq = (mp.p * mp.q - 0.25).abs().max((mp.nu - (mp.p + mp.q - 1.0)).abs());
    run.check("pq_and_nu", pq <= 1e-15, format!("max residual {}", sci(pq)));

    let rows = expansion_audit(&cfg.params.expansion_eps, scaling.slope_a, scaling.slope_b)?;
    let body: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            vec![
                Cell::from(r.quantity.as_str()),
                Cell::F(r.epsilon),
                Cell::F(r.exact),
                Cell::F(r.expansion),
                Cell::F(r.order),
                Cell::F(r.ratio),
            ]
        })
        .collect();
    run.write("expansion.csv", &csv(&["quantity", "epsilon", "exact", "expansion", "order", "ratio"], &body))?;
    run.check("expansion_ratios_bounded", expansion_ratios_bounded(&rows), format!("{} rows", rows.len()));

    // phase diagram over the admissible mu range
    let eps = scaling.epsilon;
    let (lo, hi) = ((-eps.sqrt()).exp(), eps.sqrt().exp());
    let k = cfg.params.phase_grid;
    let mut text = String::from("# inv_a inv_b phase (0 low density, 1 high density, 2 maximal current, 3 boundary)\n");
    for i in 0..k {
        for j in 0..k {
            let mu_a = lo + (hi - lo) * (i as f64 + 0.5) / k as f64;
            let mu_b = lo + (hi - lo) * (j as f64 + 0.5) / k as f64;
            let Ok(m) = ModelParams::from_mu(eps, mu_a, mu_b) else { continue };
            let Ok(p) = phase_point(&m) else { continue };
            let code = match p.phase {
                Phase::LowDensity => 0.0,
                Phase::HighDensity => 1.0,
                Phase::MaximalCurrent => 2.0,
                Phase::Boundary => 3.0,
            };
            text.push_str(&format!("{} {} {}\n", fmt_f64(1.0 / p.a_par), fmt_f64(1.0 / p.b_par), code));
        }
    }
    run.write("plots/phase_diagram.dat", &text)?;
    Ok(())
}

pub fn simulate(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let scaling = cfg.params.scaling();
    let mp = build_params(&scaling)?;
    let lattice = match scaling.geometry {
        Geometry::Interval => Lattice::Interval(scaling.n_sites),
        Geometry::HalfLine => Lattice::HalfLineTruncated(scaling.n_sites),
    };
    let s = &cfg.simulate;
    let ic = s.initial_condition().map_err(anyhow::Error::msg)?;
    let mut rng = replica_rng(cfg.seed, 0);
    let h = ic.sample(scaling.n_sites, &mut rng)?;
    let times: Vec<f64> = if s.samples == 1 {
        vec![s.horizon]
    } else {
        (0..s.samples).map(|i| s.horizon * i as f64 / (s.samples - 1) as f64).collect()
    };
    let traj = simulate_with_rng(&h.to_config(), &mp, &lattice, s.horizon, &times, &mut rng)?;
    let (eta, heights) = trajectory_csvs(&traj);
    run.write("eta.csv", &eta)?;
    run.write("heights.csv", &heights)?;
    let consistent = traj.snapshots.iter().all(|sn| sn.height.is_consistent_with(&sn.config));
    run.check("height_consistency", consistent, format!("{} snapshots", traj.snapshots.len()));
    let mut worst: f64 = 0.0;
    let mut min_bracket = f64::INFINITY;
    for sn in &traj.snapshots {
        worst = drift_identity_residual(&sn.config, &mp, &lattice).iter().fold(worst, |a, r| a.max(r.abs()));
        for x in 0..=lattice.n() {
            min_bracket = min_bracket.min(bracket_rate(&sn.config, &mp, &lattice, x).rate);
        }
    }
    run.check("drift_identity", worst <= 1e-12, format!("max residual {}", sci(worst)));
    run.check("bracket_nonnegative", min_bracket >= 0.0, format!("min rate {}", sci(min_bracket)));

    // exact stationary measure on the equal-density line
    let n = s.stationary_sites;
    let eps = 1.0 / n as f64;
    let line = ModelParams::from_mu(eps, equal_density_mu_a(eps, 1.0), 1.0)?;
    let rho = line.alpha / line.p;
    let pi = stationary_measure(&exact_generator(&line, n)?)?;
    let tv = total_variation(&pi, &product_bernoulli(n, rho));
    run.check("equal_density_product_measure", tv <= 1e-10, format!("TV {} at N = {n}", sci(tv)));
    run.write_json(
        "stationary.json",
        &json!({ "n": n, "rho": rho, "total_variation": tv, "current": mean_current(&pi, &line, n),
                 "in_simulation_class": line.in_simulation_class(), "event_count": traj.event_count }),
    )?;
    Ok(())
}

pub fn kernel(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let k = &cfg.kernel;
    let scaling = ScalingParams::interval(k.n_sites, k.slope_a, k.slope_b);
    let (n, mu_a, mu_b) = (k.n_sites, scaling.mu_a(), scaling.mu_b());
    let spec = solve_interval_spectrum(n, mu_a, mu_b)?;
    let body: Vec<Vec<Cell>> =
        (0..=n).map(|j| vec![Cell::from(j), Cell::F(spec.omegas[j]), Cell::F(spec.lambdas[j])]).collect();
    run.write("spectrum.csv", &csv(&["k", "omega", "lambda"], &body))?;
    let brackets: String = (0..=n)
        .map(|j| {
            let w = PI / (n + 1) as f64;
            format!("{} {} {} {}\n", j, fmt_f64(spec.omegas[j]), fmt_f64(j as f64 * w), fmt_f64((j + 1) as f64 * w))
        })
        .collect();
    run.write("plots/eigen_brackets.dat", &brackets)?;
    run.check("eigen_residual", spec.max_residual() <= 1e-10, sci(spec.max_residual()));
    run.check("orthonormality", spec.orthonormality_error() <= 1e-10, sci(spec.orthonormality_error()));
    run.check("eigen_brackets", spec.max_bracket_violation() <= 0.0, sci(spec.max_bracket_violation()));
    let neu = solve_interval_spectrum(n, 1.0, 1.0)?;
    let neu_err = (0..=n).map(|j| (neu.omegas[j] - j as f64 * PI / (n + 1) as f64).abs()).fold(0.0, f64::max);
    run.check("neumann_roots", neu_err <= 1e-13, sci(neu_err));

    let mut rows = Vec::new();
    for &t in &k.times {
        let sp = interval_kernel_spectral(&spec, t);
        let (img, _) = interval_kernel_image(n, mu_a, mu_b, t, k.depth)?;
        let gap = sp.max_gap(&img);
        let sym = sp.symmetry_error();
        let semi = {
            let half = interval_kernel_spectral(&spec, 0.5 * t);
            (&half.values * &half.values - &sp.values).amax()
        };
        let row_dev = sp.row_sums().iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
        rows.push(vec![Cell::F(t), Cell::F(gap), Cell::F(sym), Cell::F(sp.min_entry()), Cell::F(semi), Cell::F(row_dev)]);
        run.check(format!("image_vs_spectral_t{t}"), gap <= 1e-8, sci(gap));
        run.check(format!("symmetry_t{t}"), sym <= 1e-10, sci(sym));
        run.check(format!("nonnegative_t{t}"), sp.min_entry() >= -1e-10, sci(sp.min_entry()));
        run.check(format!("semigroup_t{t}"), semi <= 1e-10, sci(semi));
        let neumann = mu_a == 1.0 && mu_b == 1.0;
        run.check(format!("mass_t{t}"), (row_dev <= 1e-10) == neumann, format!("max |row sum - 1| = {}", sci(row_dev)));
    }
    run.write("kernel_checks.csv", &csv(&["t", "image_gap", "symmetry", "min_entry", "semigroup", "row_sum_dev"], &rows))?;

    let interval = kernel_bound_audit(&scaling, k.t_bar)?;
    let half = kernel_bound_audit(&ScalingParams::half_line(scaling.epsilon, k.slope_a, n), k.t_bar)?;
    run.check("bound_audit_interval", interval.passed(), "fitted constants finite and grid-stable");
    run.check("bound_audit_half_line", half.passed(), "fitted constants finite and grid-stable");
    run.write_json("kernel_audit.json", &json!({ "interval": interval, "half_line": half }))?;
    Ok(())
}

pub fn identities(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let c = &cfg.identities;
    let mut rng = replica_rng(cfg.seed, 0);

    let mut worst_green: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    for n in [1usize, 8, 64, 200] {
        for _ in 0..20 {
            let (a, b): (f64, f64) = (rng.gen_range(0.0..0.999), rng.gen_range(0.0..0.999));
            let g = green_matrix(n, a, b)?;
            let cf = green_corner_closed_form(n, a, b)?;
            worst_green = worst_green.max((cf - g.values[(0, 0)]).abs() / cf.abs().max(1.0));
            worst_residual = worst_residual.max(g.residual()).max(g.symmetry_error());
        }
    }
    run.check("green_closed_form", worst_green <= 1e-10, sci(worst_green));
    run.check("green_inverse_residual", worst_residual <= 1e-10, sci(worst_residual));
    let mu_h = 0.9;
    let lim = halfline_corner_limit(10_000, mu_h)?;
    let rel = (lim - 2.0 / (1.0 - mu_h)).abs() / (2.0 / (1.0 - mu_h));
    run.check("green_half_line_limit", rel <= 1e-6, format!("relative gap {}", sci(rel)));

    let scaling = ScalingParams::interval(c.n_sites, c.slope_a, c.slope_b);
    let (n, mu_a, mu_b) = (c.n_sites, scaling.mu_a(), scaling.mu_b());
    let spec = solve_interval_spectrum(n, mu_a, mu_b)?;
    let f = f_matrix(&spec)?;
    let (a, b, eps) = (c.slope_a, c.slope_b, scaling.epsilon);
    let f00 = (a + b + a * b - a * b * eps) / (a + b + a * b);
    let step = f.diagonal() - f.off_diagonal();
    run.check("f_constant_structure", f.diagonal_spread.max(f.off_diagonal_spread) <= 1e-9, sci(f.diagonal_spread.max(f.off_diagonal_spread)));
    run.check("f_diagonal_step", (step - 1.0).abs() <= 1e-9, sci((step - 1.0).abs()));
    run.check("f_green_route", f.green_route_gap <= 1e-9, sci(f.green_route_gap));
    run.check("f_gradient_structure", f.gradient_structure_error() <= 1e-9, sci(f.gradient_structure_error()));
    run.check("f_corner_value", (f.diagonal() - f00).abs() <= 1e-9, sci((f.diagonal() - f00).abs()));
    let cc = c_closed_form(n, mu_a, mu_b)?;
    run.check("c_routes", (cc - f.c).abs() <= 1e-8, format!("c = {}", sci(f.c)));

    let mut reports = Vec::new();
    let sources = [
        ("interval", KernelSource::Interval { n, mu_a, mu_b }),
        ("half_line", KernelSource::HalfLine { mu: 1.0 - eps * c.half_line_slope }),
    ];
    for (name, src) in sources {
        for p in &c.pairs {
            let r = key_identity(&src, p[0], p[1], 1e-12)?;
            let ok = (r.quadrature - r.expected).abs() <= 1e-7
                && (name == "half_line" || (r.spectral - r.expected).abs() <= 1e-9)
                && r.route_gap() <= 1e-7;
            run.check(format!("key_identity_{name}_{}_{}", p[0], p[1]), ok, format!("value {}", fmt_f64(r.quadrature)));
            reports.push(json!({
                "identity": "key_identity", "params": { "geometry": name, "source": src, "x": p[0], "x_bar": p[1] },
                "value": r.quadrature, "spectral": r.spectral, "expected": r.expected,
                "abs_err": (r.quadrature - r.expected).abs(), "route_gap": r.route_gap(), "tail_bound": r.tail_bound,
            }));
        }
    }
    run.write_json("key_identity.json", &reports)?;

    let m = c.c_star_sites;
    let ms = ScalingParams::interval(m, c.slope_a, c.slope_b);
    let sites: Vec<usize> = (1..m).collect();
    let cs = c_star_estimate(&KernelSource::Interval { n: m, mu_a: ms.mu_a(), mu_b: ms.mu_b() }, 1.0 / m as f64, 1.0, 0.0, &sites)?;
    run.check("c_star_below_one", cs.max < 1.0, format!("max {}", fmt_f64(cs.max)));
    let mut weighted = Vec::new();
    for &e in &c.c_star_eps {
        let nn = (1.0 / e).round() as usize;
        let sc = ScalingParams::interval(nn, c.slope_a, c.slope_b);
        let grid: Vec<usize> = (1..nn).step_by((nn / 8).max(1)).collect();
        let w = c_star_weighted(&KernelSource::Interval { n: nn, mu_a: sc.mu_a(), mu_b: sc.mu_b() }, sc.epsilon, 1.0, 0.0, &grid)?;
        weighted.push((sc.epsilon, w.max / sc.epsilon));
    }
    let hi = weighted.iter().map(|w| w.1).fold(0.0, f64::max);
    let lo = weighted.iter().map(|w| w.1).fold(f64::INFINITY, f64::min);
    run.check("c_star_weighted_linear", hi < 2.0 * lo, format!("value/eps in [{}, {}]", sci(lo), sci(hi)));
    run.write_json("c_star.json", &json!({ "interval": cs, "weighted_ratio": weighted }))?;

    let sbp = summation_by_parts_audit(n, 100, &mut rng);
    run.check("summation_by_parts", sbp.passed(1e-12), format!("{:?}", sbp));
    Ok(())
}

pub fn she(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let s = &cfg.she;
    let grid = SheGrid::with_max_step(SheDomain::Interval { slope_a: s.slope_a, slope_b: s.slope_b }, s.cells, s.horizon)?;
    let prop = Propagator::new(&grid)?;
    let z0 = vec![1.0; grid.m + 1];
    let mf = mean_field(&z0, &prop, s.horizon);
    let mut rng0 = replica_rng(cfg.seed, u64::MAX);
    let det = sample_she(&z0, &prop, &[s.horizon], NoiseMode::Off, &mut rng0)?;
    let zero_noise = det.values[0].iter().zip(&mf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    run.check("zero_noise_reduction", zero_noise <= 1e-12, sci(zero_noise));
    let semi = (&prop.step * &prop.step - prop.kernel(2.0 * grid.dt)).amax();
    run.check("propagator_semigroup", semi <= 1e-10, sci(semi));

    let m2 = second_moment(&z0, &prop, s.horizon)?;
    let paths: Vec<Option<Vec<f64>>> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|i| {
            sample_she(&z0, &prop, &[s.horizon], NoiseMode::Gaussian, &mut replica_rng(cfg.seed, i))
                .ok()
                .map(|p| p.values[0].clone())
        })
        .collect();
    let faults = paths.iter().filter(|p| p.is_none()).count();
    let rate = faults as f64 / cfg.replicas as f64;
    run.check("positivity_fault_rate", rate < 1e-3, format!("{faults} faults"));
    let good: Vec<&Vec<f64>> = paths.iter().flatten().collect();
    let stride = (grid.m / 8).max(1);
    let mut rows = Vec::new();
    let (mut mean_ok, mut m2_ok) = (true, true);
    for i in (0..=grid.m).step_by(stride) {
        let first: MeanVar = good.iter().map(|p| p[i]).collect();
        let second: MeanVar = good.iter().map(|p| p[i] * p[i]).collect();
        mean_ok &= first.within(mf[i], 3.0);
        m2_ok &= second.within(m2.values[(i, i)], 3.0);
        rows.push(
            [grid.x(i), first.mean, mf[i], first.sem(), second.mean, m2.values[(i, i)], second.sem()]
                .into_iter()
                .map(Cell::F)
                .collect(),
        );
    }
    run.check("mean_within_3_sigma", mean_ok, format!("{} replicas", good.len()));
    run.check("second_moment_within_3_sigma", m2_ok, format!("{} sweeps", m2.sweeps));
    run.write("she_moments.csv", &csv(&["X", "mc_mean", "mean_field", "mean_sem", "mc_second", "second_moment", "second_sem"], &rows))?;
    let path = sample_she(&z0, &prop, &[0.5 * s.horizon, s.horizon], NoiseMode::Gaussian, &mut replica_rng(cfg.seed, 0));
    if let Ok(p) = path {
        run.write("field_path.csv", &field_csv(&p))?;
    }
    Ok(())
}

pub fn compare(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let c = &cfg.compare;
    let ic = c.initial_condition().map_err(anyhow::Error::msg)?;
    let n = c.n_list[0];
    let arun = AsepRun { scaling: ScalingParams::interval(n, c.slope_a, c.slope_b), initial: ic.clone() };
    let sites: Vec<usize> = (0..=n).step_by((n / 8).max(1)).collect();
    let mc = mean_channel(&arun, c.t, &sites, cfg.replicas, cfg.seed.wrapping_add(1))?;
    let rows: Vec<Vec<Cell>> = mc
        .sites
        .iter()
        .zip(&mc.deviation)
        .zip(&mc.asep_mean)
        .map(|((&x, d), &m)| vec![Cell::from(x), Cell::F(m), Cell::F(d.mean), Cell::F(d.sem())])
        .collect();
    run.write("mean_channel.csv", &csv(&["site", "asep_mean", "deviation_mean", "deviation_sem"], &rows))?;
    run.check("mean_channel_3_sigma", mc.passed(3.0), format!("{} sites", sites.len()));

    let tests: Vec<(String, TestFunction)> = (0..3)
        .map(|k| TestFunction::interval_mode(k, c.slope_a, c.slope_b).map(|f| (format!("mode{k}"), f)))
        .collect::<asepkpz::Result<_>>()?;
    let mr = martingale_diagnostics(&arun, &tests, c.t, cfg.replicas, cfg.seed.wrapping_add(2))?;
    for r in &mr {
        run.check(
            format!("martingale_{}", r.label),
            r.passed(3.0),
            format!("N {} ± {}, gap {} ± {}", sci(r.n_stats.mean), sci(r.n_stats.sem()), sci(r.gap_stats.mean), sci(r.gap_stats.sem())),
        );
    }
    run.write_json("martingale.json", &mr)?;

    let setup = CompareSetup {
        n_list: c.n_list.clone(),
        slope_a: c.slope_a,
        slope_b: c.slope_b,
        initial: ic,
        t_list: vec![0.0, c.t],
        x_list: c.x_list(),
        replicas: cfg.replicas,
        seed: cfg.seed.wrapping_add(3),
        she_cells: c.she_cells,
    };
    let out = asep_she_compare(&setup)?;
    run.write("compare.csv", &compare_csv(&out.rows))?;
    let t0 = out.rows.iter().filter(|r| r.t == 0.0).map(|r| r.mean_gap.max(r.var_gap)).fold(0.0, f64::max);
    run.check("compare_t0_exact", t0 == 0.0, sci(t0));
    let trend = variance_trend(&out.rows, c.t);
    run.write("plots/convergence_trend.dat", &column_file(&trend.iter().map(|p| (p.epsilon, p.var_gap, p.mc_sigma)).collect::<Vec<_>>()))?;
    run.check("variance_trend", trend_non_increasing(&trend, 3.0), format!("{:?}", trend.iter().map(|p| p.var_gap).collect::<Vec<_>>()));
    let total = cfg.replicas * c.n_list.len();
    run.check("positivity_fault_rate", (out.positivity_faults as f64) < 1e-3 * total as f64, format!("{} faults", out.positivity_faults));
    Ok(())
}
