//! Acceptance suite. Prints one line per criterion and exits non-zero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use asepkpz::asep::{
    exact_generator, product_bernoulli, replica_rng, stationary_measure, total_variation, Configuration, Lattice,
};
use asepkpz::gartner::{drift_identity_residual, InitialCondition};
use asepkpz::green::{
    c_star_estimate, c_star_weighted, green_corner_closed_form, green_matrix, halfline_corner_limit, key_identity,
    KernelSource,
};
use asepkpz::io::{compare_csv, csv, sha256_hex, Cell};
use asepkpz::kernel::{interval_kernel_image, interval_kernel_spectral, kernel_bound_audit, solve_interval_spectrum};
use asepkpz::params::{build_params, equal_density_mu_a, ModelParams, ScalingParams};
use asepkpz::she::{
    asep_she_compare, martingale_diagnostics, mean_channel, trend_non_increasing, variance_trend, AsepRun,
    CompareSetup, MartingaleReport, MeanChannelReport, TestFunction,
};
use rand::Rng;

const SEED: u64 = 20241018;
const REPLICAS: usize = 2000;
const T_MACRO: f64 = 0.1;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

fn drift_identity() -> Outcome {
    let scaling = ScalingParams::interval(64, 1.0, 2.0);
    let mp = build_params(&scaling).unwrap();
    let lattice = Lattice::Interval(64);
    let mut rng = replica_rng(SEED, 1);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let rho = (i as f64 + 0.5) / 1000.0;
        let config = Configuration::bernoulli(64, rho, &mut rng);
        let res = drift_identity_residual(&config, &mp, &lattice);
        assert_eq!(res.len(), 65);
        worst = res.iter().fold(worst, |a, r| a.max(r.abs()));
    }
    outcome(worst <= 1e-12, format!("max relative residual {} over 1000 configurations", sci(worst)))
}

fn key_identity_check() -> Outcome {
    let scaling = ScalingParams::interval(100, 1.0, 1.0);
    let interval = KernelSource::Interval { n: 100, mu_a: scaling.mu_a(), mu_b: scaling.mu_b() };
    let half = KernelSource::HalfLine { mu: 1.0 - scaling.epsilon };
    let mut ok = true;
    let mut worst_quad: f64 = 0.0;
    let mut worst_spec: f64 = 0.0;
    let mut worst_half: f64 = 0.0;
    for (x, xb) in [(0, 0), (50, 50), (99, 99), (0, 1), (10, 40), (98, 99)] {
        let r = key_identity(&interval, x, xb, 1e-12).unwrap();
        let expected = if x == xb { 1.0 - 1.0 / 300.0 } else { -1.0 / 300.0 };
        worst_quad = worst_quad.max((r.quadrature - expected).abs());
        worst_spec = worst_spec.max((r.spectral - expected).abs());
        let h = key_identity(&half, x, xb, 1e-12).unwrap();
        let expected = if x == xb { 1.0 } else { 0.0 };
        worst_half = worst_half.max((h.quadrature - expected).abs());
    }
    ok &= worst_quad <= 1e-7 && worst_spec <= 1e-9 && worst_half <= 1e-7;
    outcome(
        ok,
        format!("interval quadrature {}, spectral {}, half line {}", sci(worst_quad), sci(worst_spec), sci(worst_half)),
    )
}

fn green_functions() -> Outcome {
    let mut rng = replica_rng(SEED, 3);
    let mut worst: f64 = 0.0;
    for n in [1usize, 8, 64, 200] {
        for _ in 0..20 {
            let (a, b): (f64, f64) = (rng.gen_range(0.0..0.999), rng.gen_range(0.0..0.999));
            let g = green_matrix(n, a, b).unwrap();
            let cf = green_corner_closed_form(n, a, b).unwrap();
            worst = worst.max((cf - g.values[(0, 0)]).abs() / cf.abs().max(1.0)).max(g.residual());
        }
    }
    let mu = 0.9;
    let target = 2.0 / (1.0 - mu);
    let lim = halfline_corner_limit(10_000, mu).unwrap();
    let rel = (lim - target).abs() / target;
    outcome(worst <= 1e-10 && rel <= 1e-6, format!("closed form vs inverse {}, half-line limit {}", sci(worst), sci(rel)))
}

fn spectrum() -> Outcome {
    let mut neu: f64 = 0.0;
    for n in [1usize, 16, 128] {
        let s = solve_interval_spectrum(n, 1.0, 1.0).unwrap();
        for k in 0..=n {
            neu = neu.max((s.omegas[k] - k as f64 * PI / (n + 1) as f64).abs());
        }
    }
    let mut rng = replica_rng(SEED, 4);
    let (mut bracket, mut resid, mut ortho) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = rng.gen_range(1..=128usize);
        let (a, b): (f64, f64) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        let s = solve_interval_spectrum(n, a, b).unwrap();
        let w = PI / (n + 1) as f64;
        for k in 0..=n {
            bracket = bracket.max(k as f64 * w - s.omegas[k]).max(s.omegas[k] - (k + 1) as f64 * w);
        }
        resid = resid.max(s.max_residual());
        ortho = ortho.max(s.orthonormality_error());
    }
    outcome(
        neu <= 1e-13 && bracket <= 0.0 && resid <= 1e-10 && ortho <= 1e-10,
        format!("neumann {}, bracket excess {}, residual {}, orthonormality {}", sci(neu), sci(bracket), sci(resid), sci(ortho)),
    )
}

fn image_vs_spectral() -> Outcome {
    let s = ScalingParams::interval(16, 1.0, 1.0);
    let spec = solve_interval_spectrum(16, s.mu_a(), s.mu_b()).unwrap();
    let mut worst: f64 = 0.0;
    for t in [1.0, 10.0, 100.0] {
        let (img, _) = interval_kernel_image(16, s.mu_a(), s.mu_b(), t, 6).unwrap();
        worst = worst.max(interval_kernel_spectral(&spec, t).max_gap(&img));
    }
    outcome(worst <= 1e-8, format!("sup gap {}", sci(worst)))
}

fn kernel_structure() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (a, b) in [(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (3.0, 2.0)] {
        let s = ScalingParams::interval(32, a, b);
        let spec = solve_interval_spectrum(32, s.mu_a(), s.mu_b()).unwrap();
        let (mut sym, mut neg, mut semi, mut mass) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for t in [0.5, 5.0, 50.0, 500.0] {
            let k = interval_kernel_spectral(&spec, t);
            let half = interval_kernel_spectral(&spec, 0.5 * t);
            sym = sym.max(k.symmetry_error());
            neg = neg.max(-k.min_entry());
            semi = semi.max((&half.values * &half.values - &k.values).amax());
            mass = mass.max(k.row_sums().iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max));
        }
        let conserving = a == 0.0 && b == 0.0;
        ok &= sym <= 1e-10 && neg <= 1e-10 && semi <= 1e-10 && (mass <= 1e-10) == conserving;
        notes.push(format!("A={a},B={b}: mass {}", sci(mass)));
    }
    for scaling in [ScalingParams::interval(32, 1.0, 1.0), ScalingParams::half_line(1.0 / 32.0, 1.0, 32)] {
        let audit = kernel_bound_audit(&scaling, 1.0).unwrap();
        ok &= audit.passed();
    }
    outcome(ok, format!("{}; bound audits finite and grid-stable", notes.join(", ")))
}

fn c_star() -> Outcome {
    let s = ScalingParams::interval(32, 1.0, 1.0);
    let sites: Vec<usize> = (1..32).collect();
    let src = KernelSource::Interval { n: 32, mu_a: s.mu_a(), mu_b: s.mu_b() };
    let cs = c_star_estimate(&src, s.epsilon, 1.0, 0.0, &sites).unwrap();
    let mut ratios = Vec::new();
    for n in [16usize, 32, 64] {
        let sc = ScalingParams::interval(n, 1.0, 1.0);
        let grid: Vec<usize> = (1..n).step_by(n / 8).collect();
        let src = KernelSource::Interval { n, mu_a: sc.mu_a(), mu_b: sc.mu_b() };
        let w = c_star_weighted(&src, sc.epsilon, 1.0, 0.0, &grid).unwrap();
        ratios.push(w.max / sc.epsilon);
    }
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    outcome(
        cs.max < 1.0 && hi < 2.0 * lo,
        format!("c_star = {:.6}, weighted/eps in [{lo:.4}, {hi:.4}]", cs.max),
    )
}

fn stationary() -> Outcome {
    let n = 5;
    let eps = 1.0 / n as f64;
    let mp = ModelParams::from_mu(eps, equal_density_mu_a(eps, 1.0), 1.0).unwrap();
    let pi = stationary_measure(&exact_generator(&mp, n).unwrap()).unwrap();
    let tv = total_variation(&pi, &product_bernoulli(n, mp.alpha / mp.p));
    outcome(tv <= 1e-10, format!("TV {}", sci(tv)))
}

fn asep_run(n: usize) -> AsepRun {
    AsepRun { scaling: ScalingParams::interval(n, 0.0, 0.0), initial: InitialCondition::Bernoulli(0.5) }
}

fn sites_grid(n: usize) -> Vec<usize> {
    (0..=n).step_by(n / 8).collect()
}

fn test_functions() -> Vec<(String, TestFunction)> {
    (0..3).map(|k| (format!("mode{k}"), TestFunction::interval_mode(k, 0.0, 0.0).unwrap())).collect()
}

fn run_mean_channel() -> MeanChannelReport {
    mean_channel(&asep_run(32), T_MACRO, &sites_grid(32), REPLICAS, SEED + 1).unwrap()
}

fn run_martingale() -> Vec<MartingaleReport> {
    martingale_diagnostics(&asep_run(32), &test_functions(), T_MACRO, REPLICAS, SEED + 2).unwrap()
}

fn compare_setup() -> CompareSetup {
    CompareSetup {
        n_list: vec![32, 64],
        slope_a: 0.0,
        slope_b: 0.0,
        initial: InitialCondition::Bernoulli(0.5),
        t_list: vec![0.0, T_MACRO],
        x_list: (0..9).map(|i| i as f64 / 8.0).collect(),
        replicas: REPLICAS,
        seed: SEED + 3,
        she_cells: 64,
    }
}

fn mean_channel_csv(r: &MeanChannelReport) -> String {
    let rows: Vec<Vec<Cell>> = r
        .sites
        .iter()
        .zip(&r.deviation)
        .map(|(&x, d)| vec![Cell::from(x), Cell::F(d.mean), Cell::F(d.sem())])
        .collect();
    csv(&["site", "deviation_mean", "deviation_sem"], &rows)
}

fn martingale_csv(reports: &[MartingaleReport]) -> String {
    let rows: Vec<Vec<Cell>> = reports
        .iter()
        .map(|r| {
            vec![
                Cell::from(r.label.as_str()),
                Cell::F(r.n_stats.mean),
                Cell::F(r.n_stats.sem()),
                Cell::F(r.gap_stats.mean),
                Cell::F(r.gap_stats.sem()),
            ]
        })
        .collect();
    csv(&["label", "n_mean", "n_sem", "gap_mean", "gap_sem"], &rows)
}

/// CSV hashes of criteria 9-11 computed on a dedicated pool.
fn hashes_with_threads(threads: usize) -> Vec<String> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let cmp = asep_she_compare(&compare_setup()).unwrap();
        vec![
            sha256_hex(mean_channel_csv(&run_mean_channel()).as_bytes()),
            sha256_hex(martingale_csv(&run_martingale()).as_bytes()),
            sha256_hex(compare_csv(&cmp.rows).as_bytes()),
        ]
    })
}

fn main() -> ExitCode {
    let mut all = true;
    let mut report = |id: usize, name: &str, limit: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let took = start.elapsed();
        let on_time = took <= limit;
        let passed = o.passed && on_time;
        all &= passed;
        let timing = if on_time { String::new() } else { format!(" (over the {}s budget)", limit.as_secs()) };
        println!(
            "criterion {id:>2} {name}: {} [{:.2}s] {}{timing}",
            if passed { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            o.detail
        );
    };
    let secs = Duration::from_secs;
    report(1, "drift identity", secs(1), &mut drift_identity);
    report(2, "key identity", secs(30), &mut key_identity_check);
    report(3, "green functions", secs(10), &mut green_functions);
    report(4, "spectrum", secs(5), &mut spectrum);
    report(5, "image vs spectral", secs(5), &mut image_vs_spectral);
    report(6, "kernel structure", secs(60), &mut kernel_structure);
    report(7, "c_star", secs(60), &mut c_star);
    report(8, "stationary measure", secs(1), &mut stationary);
    report(9, "mean channel", secs(300), &mut || {
        let r = run_mean_channel();
        let worst = r.deviation.iter().map(|d| (d.mean / d.sem()).abs()).fold(0.0, f64::max);
        outcome(r.passed(3.0), format!("max |z| {worst:.2} over {} sites", r.sites.len()))
    });
    report(10, "martingale diagnostics", secs(300), &mut || {
        let rs = run_martingale();
        let worst = rs
            .iter()
            .map(|r| (r.n_stats.mean / r.n_stats.sem()).abs().max((r.gap_stats.mean / r.gap_stats.sem()).abs()))
            .fold(0.0, f64::max);
        outcome(rs.len() == 3 && rs.iter().all(|r| r.passed(3.0)), format!("max |z| {worst:.2} over 3 test functions"))
    });
    report(11, "convergence trend", secs(1200), &mut || {
        let out = asep_she_compare(&compare_setup()).unwrap();
        let trend = variance_trend(&out.rows, T_MACRO);
        let detail: Vec<String> =
            trend.iter().map(|p| format!("eps {}: {} ± {}", p.epsilon, sci(p.var_gap), sci(p.mc_sigma))).collect();
        outcome(trend.len() == 2 && trend_non_increasing(&trend, 3.0), detail.join(", "))
    });
    report(12, "reproducibility", secs(1200), &mut || {
        let (one, four) = (hashes_with_threads(1), hashes_with_threads(4));
        outcome(one == four, format!("mean channel {}, martingale {}, compare {}", &one[0][..12], &one[1][..12], &one[2][..12]))
    });
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
