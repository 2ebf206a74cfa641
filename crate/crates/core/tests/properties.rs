mod common;

use proptest::prelude::*;

use ldp_confseq::abtest::{ab_lower_cs, privatize_ab, pseudo_outcome, ABConfig, ABRecord};
use ldp_confseq::confseq::{
    gridkelly_cs, hoeffding_ci_with, hoeffding_cs, invert_monotone, laplace_hoeffding_cs, mixture_boundary_two_sided,
    mixture_cs_lower, mixture_cs_two_sided, one_sided_mixture_nsm, pmkelly_ci, pmkelly_log_wealth, sirr_lr_cs,
    two_sided_mixture_nsm, BoundSeries, GridKellyAccumulator, MartingaleAccumulator, SirrLrAccumulator,
};
use ldp_confseq::eprocess::{anytime_p_via_cs, eprocess_hoeffding, test_via_cs, EProcessSeries, NullSpec};
use ldp_confseq::mechanisms::{
    conditional_pmf, discretize, epsilon_of, laplace_privatize, nprr_privatize, nprr_stream, r_of, PrivacyParams,
    PrivateRecord, RandomSource,
};
use ldp_confseq::schedules::{
    beta_opt, lambda_fixed_n, normal_cdf, LambdaSchedule, MixtureConfig, VarianceState,
};

use common::{bernoulli_values, mean_and_se, nprr_records, sirr_records};

fn unit_values(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = RandomSource::new(seed, 77);
    (0..n).map(|_| rng.uniform()).collect()
}

fn records(seed: u64, n: usize, r: f64, g: u32) -> Vec<PrivateRecord> {
    let mut rng = RandomSource::new(seed, 1);
    nprr_records(&unit_values(seed, n), PrivacyParams::new(r, g).unwrap(), &mut rng)
}

fn contains(wide: &BoundSeries, narrow: &BoundSeries, tol: f64) -> bool {
    wide.entries.iter().zip(&narrow.entries).all(|(w, n)| {
        n.is_empty() || (w.lower <= n.lower + tol && n.upper <= w.upper + tol)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nprr_likelihood_ratio_is_bounded(r in 0.01f64..0.99, g in 1u32..8, i in 0usize..=100, j in 0usize..=100) {
        let params = PrivacyParams::new(r, g).unwrap();
        let cap = epsilon_of(r, g).unwrap().exp();
        let (x, y) = (i as f64 / 100.0, j as f64 / 100.0);
        for k in 0..=g {
            let z = k as f64 / g as f64;
            let ratio = conditional_pmf(z, x, params).unwrap() / conditional_pmf(z, y, params).unwrap();
            prop_assert!(ratio <= cap * (1.0 + 1e-12), "ratio {} > {}", ratio, cap);
        }
    }

    #[test]
    fn epsilon_and_r_round_trip(r in 1e-6f64..0.999_999, g in 1u32..1000) {
        let back = r_of(epsilon_of(r, g).unwrap(), g).unwrap();
        prop_assert!((back - r).abs() <= 1e-12);
    }

    #[test]
    fn same_source_same_records(seed in any::<u64>(), stream in any::<u64>(), r in 0.05f64..1.0, g in 1u32..6) {
        let xs = unit_values(seed, 50);
        let params = PrivacyParams::new(r, g).unwrap();
        let a = nprr_stream(&xs, params, &mut RandomSource::new(seed, stream)).unwrap();
        let b = nprr_stream(&xs, params, &mut RandomSource::new(seed, stream)).unwrap();
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn variance_state_matches_batch(zs in prop::collection::vec(0.0f64..=1.0, 1..60)) {
        let mut streaming = VarianceState::new();
        for t in 1..=zs.len() {
            streaming.update(zs[t - 1]);
            // recompute from scratch: ζ̂_j over the first j values, deviations against each ζ̂_j
            let mut sum = 0.0;
            let mut sq = 0.0;
            for (k, &z) in zs[..t].iter().enumerate() {
                sum += z;
                let zeta_j = (0.5 + sum) / (k as f64 + 2.0);
                sq += (z - zeta_j) * (z - zeta_j);
            }
            prop_assert_eq!(streaming.zeta_hat, (0.5 + sum) / (t as f64 + 1.0));
            prop_assert_eq!(streaming.gamma_sq_hat, (0.25 + sq) / (t as f64 + 1.0));
            prop_assert_eq!(streaming, VarianceState::from_slice(&zs[..t]));
        }
    }

    #[test]
    fn beta_opt_is_near_optimal(t0 in 10u64..20_000, alpha in 0.001f64..0.5, r in 0.1f64..1.0) {
        let beta = beta_opt(t0, alpha);
        let at = |b: f64| mixture_boundary_two_sided(t0, r, b, alpha);
        let best = (0..1000)
            .map(|k| beta / 10.0 * (100.0f64).powf(k as f64 / 999.0))
            .map(at)
            .fold(f64::INFINITY, f64::min);
        prop_assert!(at(beta) <= 1.01 * best);
    }

    #[test]
    fn hoeffding_width_scales_with_one_over_r(r in 0.05f64..1.0, lambda in 0.01f64..1.0, n in 1usize..500, alpha in 0.001f64..0.5) {
        let mut private = MartingaleAccumulator::default();
        let mut plain = MartingaleAccumulator::default();
        for _ in 0..n {
            private.push(0.5, r, lambda);
            plain.push(0.5, 1.0, lambda);
        }
        let ratio = private.boundary(alpha) * r / plain.boundary(alpha);
        prop_assert!((ratio - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn cs_contains_ci_at_n(seed in any::<u64>(), n in 1usize..300, r in 0.2f64..1.0, alpha in 0.01f64..0.3) {
        let recs = records(seed, n, r, 1);
        let schedule = LambdaSchedule::FixedN { n: n as u64, alpha };
        let ci = hoeffding_ci_with(&recs, n as u64, schedule, alpha).unwrap().entries[0];
        let cs = hoeffding_cs(&recs, schedule, alpha).unwrap();
        let at_n = cs.entries[n - 1];
        prop_assert!(ci.lower >= at_n.lower && ci.upper <= at_n.upper);
        let max_lower = cs.entries.iter().map(|e| e.lower).fold(f64::NEG_INFINITY, f64::max);
        if max_lower == at_n.lower {
            prop_assert_eq!(ci.lower, at_n.lower);
        }
    }

    #[test]
    fn ldot_p_is_at_most_bar_p(logs in prop::collection::vec(-20.0f64..20.0, 1..100)) {
        let e = EProcessSeries::from_log_values(logs);
        for s in &e.states {
            prop_assert!(e.fixed_n_p_value(s.t).unwrap() <= s.p_value());
        }
    }

    #[test]
    fn capping_keeps_decisions(logs in prop::collection::vec(-10.0f64..10.0, 1..100), alpha in 1e-4f64..0.999) {
        let e = EProcessSeries::from_log_values(logs);
        let by_e = e.decision(alpha).first_rejection_time;
        let by_p = e.states.iter().find(|s| s.p_value() <= alpha).map(|s| s.t);
        let by_raw_p = e.states.iter().find(|s| (-s.log_e).exp() <= alpha).map(|s| s.t);
        prop_assert_eq!(by_p, by_raw_p);
        if by_e != by_p {
            // only a rounding tie at E_t = 1/α may separate the two rules
            let t = by_e.or(by_p).unwrap() as usize;
            prop_assert!((e.states[t - 1].log_e + alpha.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn invert_monotone_is_outward_and_stable(shift in 0.0f64..1.0, slope in 1.0f64..50.0, tol in 1e-9f64..1e-4) {
        // f(x) = slope (shift - x) crosses 0 at x = shift
        let f = |x: f64| slope * (shift - x);
        let x = invert_monotone(f, 0.0, 0.0, 1.0, tol);
        prop_assert!(x <= shift + 1e-12 && shift - x <= 2.0 * tol + 1e-12);
        let again = invert_monotone(f, 0.0, 0.0, 1.0, tol);
        prop_assert_eq!(x, again);
    }

    #[test]
    fn lambda_fixed_n_is_locally_optimal(n in 2u64..5000, alpha in 0.001f64..0.5) {
        let half_width = |lambda: f64| {
            let mut acc = MartingaleAccumulator::default();
            for _ in 0..n {
                acc.push(0.5, 1.0, lambda);
            }
            acc.boundary(alpha)
        };
        let best = lambda_fixed_n(n, alpha);
        prop_assert!(half_width(best) <= half_width(best * 1.01) * (1.0 + 1e-12));
        prop_assert!(half_width(best) <= half_width(best * 0.99) * (1.0 + 1e-12));
    }

    #[test]
    fn ab_lower_cs_is_affine_image_of_mixture_lower(seed in any::<u64>(), n in 1usize..200, pi in 0.1f64..0.9) {
        let config = ABConfig::for_epsilon(pi, 2.0, 0.05, 100).unwrap();
        let mut rng = RandomSource::new(seed, 3);
        let ab: Vec<ABRecord> = (0..n)
            .map(|i| {
                let a = u8::from(rng.bernoulli(pi));
                let x = rng.uniform();
                privatize_ab(x, a, &config, i as u64 + 1, &mut rng).unwrap()
            })
            .collect();
        let psi: Vec<PrivateRecord> =
            ab.iter().map(|rec| PrivateRecord::nprr(rec.index, rec.psi, config.mechanism)).collect();
        let plain = mixture_cs_lower(&psi, MixtureConfig::new(config.beta, config.alpha).unwrap()).unwrap();
        let lifted = ab_lower_cs(&ab, &config).unwrap();
        for (a, b) in lifted.entries.iter().zip(&plain.entries) {
            prop_assert_eq!(a.lower, config.to_effect(b.lower));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn smaller_alpha_gives_wider_sets(seed in any::<u64>(), n in 5usize..80, a in 0.02f64..0.5, shrink in 0.1f64..0.9) {
        let (wide_alpha, narrow_alpha) = (a * shrink, a);
        let nprr = records(seed, n, 0.76, 1);
        let mut rng = RandomSource::new(seed, 9);
        let bits = bernoulli_values(0.4, n, &mut rng);
        let sirr = sirr_records(&bits, PrivacyParams::new(0.76, 1).unwrap(), &mut rng);
        let lap: Vec<PrivateRecord> = unit_values(seed, n)
            .iter()
            .enumerate()
            .map(|(i, &x)| laplace_privatize(x, 2.0, i as u64 + 1, &mut rng).unwrap())
            .collect();
        let pair = |f: &dyn Fn(f64) -> BoundSeries| (f(wide_alpha), f(narrow_alpha));
        let checks: Vec<(&str, (BoundSeries, BoundSeries), f64)> = vec![
            ("hoeffding", pair(&|al| hoeffding_cs(&nprr, LambdaSchedule::TimeUniform { alpha: al }, al).unwrap()), 0.0),
            ("mixture", pair(&|al| mixture_cs_two_sided(&nprr, MixtureConfig::new(0.2, al).unwrap()).unwrap()), 0.0),
            ("lower", pair(&|al| mixture_cs_lower(&nprr, MixtureConfig::new(0.2, al).unwrap()).unwrap()), 0.0),
            ("laplace", pair(&|al| laplace_hoeffding_cs(&lap, LambdaSchedule::Laplace { alpha: al, c: 0.1, n: None }, al).unwrap()), 0.0),
            ("gridkelly", pair(&|al| gridkelly_cs(&nprr, 30, 0.5, al).unwrap()), 2e-6),
            ("sirr-lr", pair(&|al| sirr_lr_cs(&sirr, al).unwrap()), 2e-6),
            ("pmkelly", pair(&|al| pmkelly_ci(&nprr, n as u64, al, 0.8).unwrap()), 2e-6),
        ];
        for (name, (wide, narrow), tol) in checks {
            prop_assert!(contains(&wide, &narrow, tol), "{} not nested", name);
        }
    }

    #[test]
    fn pmkelly_wealth_is_monotone_around_the_mean(seed in any::<u64>(), n in 10usize..200) {
        let recs = records(seed, n, 0.8, 1);
        let zs: Vec<f64> = recs.iter().map(|r| r.z).collect();
        let rs = vec![0.8; n];
        let ci = pmkelly_ci(&recs, n as u64, 0.05, 0.8).unwrap().entries[0];
        // the wealth for the lower bound grows as μ moves below the data
        let mut prev = f64::INFINITY;
        for k in 0..=20 {
            let mu = ci.lower * k as f64 / 20.0;
            let w = pmkelly_log_wealth(&zs, &rs, n, n as u64, 0.05, 0.8, mu);
            prop_assert!(w <= prev + 1e-9);
            prev = w;
        }
    }

    #[test]
    fn cs_tests_and_anytime_p_are_dual(seed in any::<u64>(), n in 5usize..150, mu0 in 0.0f64..1.0, alpha in 0.01f64..0.5) {
        let recs = records(seed, n, 0.76, 1);
        let factory = |a: f64| -> ldp_confseq::Result<BoundSeries> {
            Ok(hoeffding_cs(&recs, LambdaSchedule::Constant { lambda: 0.3 }, a)?.running_intersection())
        };
        let null = NullSpec::Point { mu0 };
        let tol = 1e-9;
        let p = anytime_p_via_cs(factory, null, n as u64, tol).unwrap();
        let rejected = test_via_cs(&factory(alpha).unwrap(), null).unwrap().rejected;
        if p < alpha - tol {
            prop_assert!(rejected);
        }
        if p > alpha + tol {
            prop_assert!(!rejected);
        }
    }
}

#[test]
fn normal_cdf_is_monotone_and_matches_series() {
    let mut prev = 0.0;
    for k in -80_000..=80_000 {
        let v = normal_cdf(k as f64 * 1e-4);
        assert!(v >= prev);
        prev = v;
    }
    // erf(x) = 2/√π Σ (-1)^k x^(2k+1) / (k! (2k+1))
    let x = 1.959_963_984_540_054 / std::f64::consts::SQRT_2;
    let mut term = x;
    let mut sum = x;
    for k in 1..60 {
        term *= -x * x / k as f64;
        sum += term / (2 * k + 1) as f64;
    }
    let oracle = 0.5 * (1.0 + 2.0 / std::f64::consts::PI.sqrt() * sum);
    assert!((oracle - 0.975).abs() < 1e-12);
    assert!((normal_cdf(1.959_963_984_540_054) - oracle).abs() < 1e-14);
}

#[test]
fn nprr_conditional_mean() {
    const N: usize = 1_000_000;
    for (x, r, g) in [(0.3, 0.76, 1u32), (0.62, 0.5, 4), (1.0, 0.9, 2)] {
        let params = PrivacyParams::new(r, g).unwrap();
        let mut rng = RandomSource::new(5, (x * 100.0) as u64);
        let zs: Vec<f64> = (0..N).map(|i| nprr_privatize(x, params, i as u64 + 1, &mut rng).unwrap().z).collect();
        let (mean, se) = mean_and_se(&zs);
        let target = r * x + (1.0 - r) / 2.0;
        assert!((mean - target).abs() <= 4.0 * se, "x={x}: {mean} vs {target} (se {se})");
    }
}

#[test]
fn discretize_preserves_the_mean() {
    let mut pick = RandomSource::new(12, 0);
    for case in 0..10 {
        let x = pick.uniform();
        let g = 1 + pick.index_inclusive(9);
        let mut rng = RandomSource::new(13, case);
        let ys: Vec<f64> = (0..200_000).map(|_| discretize(x, g, &mut rng).unwrap()).collect();
        let (mean, se) = mean_and_se(&ys);
        assert!((mean - x).abs() <= 4.0 * se.max(1e-12), "x={x}, G={g}: {mean}");
    }
}

#[test]
fn pseudo_outcome_mean_tracks_the_effect() {
    const N: usize = 400_000;
    for (pi, m1, m0) in [(0.5, 0.7, 0.4), (0.3, 0.2, 0.6), (0.8, 0.55, 0.5)] {
        let mut rng = RandomSource::new(21, (pi * 10.0) as u64);
        let phis: Vec<f64> = (0..N)
            .map(|_| {
                let a = u8::from(rng.bernoulli(pi));
                let x = if rng.bernoulli(if a == 1 { m1 } else { m0 }) { 1.0 } else { 0.0 };
                pseudo_outcome(x, a, pi).unwrap()
            })
            .collect();
        let (mean, se) = mean_and_se(&phis);
        let target = (m1 - m0 + 1.0 / (1.0 - pi)) / (1.0 / pi + 1.0 / (1.0 - pi));
        assert!((mean - target).abs() <= 4.0 * se, "pi={pi}: {mean} vs {target}");
    }
}

#[test]
fn wealth_stays_finite_on_constant_streams() {
    const T: usize = 1_000_000;
    let r = 0.76;
    for bit in [0.0, 1.0] {
        let mut gk = GridKellyAccumulator::new(30, 0.5).unwrap();
        let mut lr = SirrLrAccumulator::new();
        for _ in 0..T {
            gk.push(bit, r);
            lr.push(bit, r).unwrap();
        }
        let zs = vec![bit; T];
        let rs = vec![r; T];
        let params = PrivacyParams::new(r, 1).unwrap();
        let recs: Vec<PrivateRecord> = (0..T).map(|i| PrivateRecord::nprr(i as u64 + 1, bit, params)).collect();
        let hoeff = eprocess_hoeffding(&recs, LambdaSchedule::TimeUniform { alpha: 0.05 }, 0.5).unwrap();
        assert!(hoeff.states.iter().all(|s| s.log_e.is_finite()));
        for k in 0..=10 {
            let mu = k as f64 / 10.0;
            assert!(gk.log_wealth(mu).is_finite(), "GK at {mu}");
            assert!(lr.log_martingale(mu).is_finite(), "LR at {mu}");
            let s = zs.iter().map(|z| z - (1.0 - r) / 2.0).sum::<f64>() - T as f64 * r * mu;
            assert!(two_sided_mixture_nsm(s, T as u64, 0.3).is_finite());
            assert!(one_sided_mixture_nsm(s, T as u64, 0.3).is_finite());
            assert!(one_sided_mixture_nsm(-s, T as u64, 0.3).is_finite());
        }
        for mu in [0.0, 0.5, 1.0] {
            assert!(pmkelly_log_wealth(&zs, &rs, T, T as u64, 0.05, 0.8, mu).is_finite());
        }
    }
}
