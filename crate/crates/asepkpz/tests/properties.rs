use asepkpz::asep::{event_rates, exact_generator, simulate, Configuration, HeightField, Lattice};
use asepkpz::gartner::{bracket_rate, drift_identity_residual, z_field};
use asepkpz::green::{f_matrix, green_corner_closed_form, green_matrix};
use asepkpz::io::fmt_f64;
use asepkpz::kernel::{interval_kernel_spectral, solve_interval_spectrum};
use asepkpz::params::{build_params, phase_point, ModelParams, Phase, ScalingParams};
use asepkpz::stats::MeanVar;
use proptest::prelude::*;

fn admissible_mu(eps: f64, u: f64) -> f64 {
    // keep a margin from the edges of [exp(-sqrt eps), exp(sqrt eps)]
    let (lo, hi) = ((-eps.sqrt()).exp(), eps.sqrt().exp());
    let pad = 1e-3 * (hi - lo);
    lo + pad + u * (hi - lo - 2.0 * pad)
}

fn spins(n: usize) -> impl Strategy<Value = Vec<i8>> {
    prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1i8 } else { -1 }), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn rate_relations(n in 16usize..4096, a in 0.0f64..2.0, b in 0.0f64..2.0) {
        let mp = build_params(&ScalingParams::interval(n, a, b)).unwrap();
        prop_assert!((mp.alpha / mp.p + mp.gamma / mp.q - 1.0).abs() <= 1e-14);
        prop_assert!((mp.beta / mp.p + mp.delta / mp.q - 1.0).abs() <= 1e-14);
        prop_assert!((mp.p * mp.q - 0.25).abs() <= 1e-15);
        prop_assert!((mp.nu - (mp.p + mp.q - 1.0)).abs() <= 1e-15);
    }

    #[test]
    fn densities_move_away_from_half_with_slope(k in 6u32..14, a in 0.0f64..4.0, da in 0.01f64..2.0) {
        let eps = 1.0 / (1u64 << k) as f64;
        let lo = phase_point(&ModelParams::from_mu(eps, 1.0 - eps * a, 1.0 - eps * a).unwrap()).unwrap();
        let hi = phase_point(&ModelParams::from_mu(eps, 1.0 - eps * (a + da), 1.0 - eps * (a + da)).unwrap()).unwrap();
        // the left density grows with A, the right one falls with B
        prop_assert!(hi.rho_a >= lo.rho_a - 1e-15);
        prop_assert!(hi.rho_b <= lo.rho_b + 1e-15);
    }

    #[test]
    fn neumann_point_is_maximal_current(eps in 1e-6f64..0.25) {
        let ph = phase_point(&ModelParams::from_mu(eps, 1.0, 1.0).unwrap()).unwrap();
        prop_assert_eq!(ph.phase, Phase::MaximalCurrent);
    }

    #[test]
    fn drift_identity_is_exact(
        eta in (1usize..=256).prop_flat_map(spins),
        k in 1u32..=8,
        ua in 0.0f64..1.0,
        ub in 0.0f64..1.0,
        half in prop::bool::ANY,
    ) {
        let eps = 1.0 / (1u64 << k) as f64;
        let mp = ModelParams::from_mu(eps, admissible_mu(eps, ua), admissible_mu(eps, ub)).unwrap();
        let n = eta.len();
        let lattice = if half { Lattice::HalfLineTruncated(n) } else { Lattice::Interval(n) };
        let config = Configuration::new(eta).unwrap();
        let worst = drift_identity_residual(&config, &mp, &lattice).iter().fold(0.0f64, |a, r| a.max(r.abs()));
        prop_assert!(worst <= 1e-13, "residual {worst:e}");
        for x in 0..=n {
            prop_assert!(bracket_rate(&config, &mp, &lattice, x).rate >= 0.0);
        }
    }

    #[test]
    fn z_ratios_are_quantized(eta in (2usize..64).prop_flat_map(spins), t in 0.0f64..10.0) {
        let mp = build_params(&ScalingParams::interval(eta.len(), 1.0, 1.0)).unwrap();
        let config = Configuration::new(eta).unwrap();
        let h = HeightField::from_config(&config, 0);
        let z = z_field(&h, t, &mp);
        let up = (-mp.lambda).exp();
        for x in 0..config.len() {
            let r = z.z(x + 1) / z.z(x);
            prop_assert!(z.z(x) > 0.0);
            prop_assert!((r - up).abs() <= 1e-12 * up || (r - 1.0 / up).abs() <= 1e-12 / up);
        }
    }

    #[test]
    fn generator_rows_balance(n in 1usize..=6, ua in 0.0f64..1.0, ub in 0.0f64..1.0) {
        let eps = 1.0 / 16.0;
        let mp = ModelParams::from_mu(eps, admissible_mu(eps, ua), admissible_mu(eps, ub)).unwrap();
        let q = exact_generator(&mp, n).unwrap();
        for s in 0..q.nrows() {
            let exit: f64 = event_rates(&Configuration::from_index(n, s), &mp, &Lattice::Interval(n))
                .iter()
                .map(|e| e.1)
                .sum();
            prop_assert!((q[(s, s)] + exit).abs() <= 1e-14);
            prop_assert!(q.row(s).sum().abs() <= 1e-14);
        }
    }

    #[test]
    fn trajectories_are_consistent_and_deterministic(
        eta in (2usize..40).prop_flat_map(spins),
        seed in any::<u64>(),
    ) {
        let n = eta.len();
        let mp = build_params(&ScalingParams::interval(n, 1.0, 0.5)).unwrap();
        let config = Configuration::new(eta).unwrap();
        let times = [0.0, 1.0, 5.0, 20.0];
        let a = simulate(&config, &mp, &Lattice::Interval(n), 20.0, &times, seed).unwrap();
        let b = simulate(&config, &mp, &Lattice::Interval(n), 20.0, &times, seed).unwrap();
        prop_assert_eq!(&a, &b);
        for sn in &a.snapshots {
            prop_assert!(sn.height.is_consistent_with(&sn.config));
        }
    }

    #[test]
    fn interval_kernel_structure(n in 1usize..40, ma in 0.0f64..=1.0, mb in 0.0f64..=1.0, s in 0.01f64..30.0, t in 0.01f64..30.0) {
        let spec = solve_interval_spectrum(n, ma, mb).unwrap();
        let w = std::f64::consts::PI / (n + 1) as f64;
        for k in 0..=n {
            prop_assert!(spec.omegas[k] >= k as f64 * w && spec.omegas[k] <= (k + 1) as f64 * w);
        }
        let (ks, kt, kst) = (interval_kernel_spectral(&spec, s), interval_kernel_spectral(&spec, t), interval_kernel_spectral(&spec, s + t));
        prop_assert!(kst.symmetry_error() <= 1e-12);
        prop_assert!(kst.min_entry() >= -1e-12);
        prop_assert!((&ks.values * &kt.values - &kst.values).amax() <= 1e-10);
        prop_assert!(kst.row_sums().iter().all(|&r| r <= 1.0 + 1e-12));
    }

    #[test]
    fn green_closed_form_matches_inverse(n in 1usize..=200, ma in 0.0f64..0.999, mb in 0.0f64..0.999) {
        let g = green_matrix(n, ma, mb).unwrap();
        let cf = green_corner_closed_form(n, ma, mb).unwrap();
        prop_assert!((cf - g.values[(0, 0)]).abs() <= 1e-10 * cf.abs().max(1.0));
        prop_assert!(g.symmetry_error() <= 1e-10);
    }

    #[test]
    fn f_matrix_gradient_structure(n in 1usize..48, ma in 0.0f64..0.99, mb in 0.0f64..=1.0) {
        let spec = solve_interval_spectrum(n, ma, mb).unwrap();
        let f = f_matrix(&spec).unwrap();
        prop_assert!(f.gradient_structure_error() <= 1e-9);
        prop_assert!(f.c >= -1e-12);
    }

    #[test]
    fn welford_merge(xs in prop::collection::vec(-1e3f64..1e3, 2..200), cut in 0usize..200) {
        let cut = cut.min(xs.len());
        let mut left: MeanVar = xs[..cut].iter().copied().collect();
        left.merge(&xs[cut..].iter().copied().collect());
        let whole: MeanVar = xs.iter().copied().collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        prop_assert_eq!(left.count, whole.count);
        prop_assert!((left.mean - mean).abs() <= 1e-9);
        prop_assert!((left.variance() - var).abs() <= 1e-9 * var.max(1.0));
        prop_assert!((whole.variance() - var).abs() <= 1e-9 * var.max(1.0));
    }

    #[test]
    fn doubles_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }
}
