use proptest::prelude::*;

use gpcover::credible::{self, CredibleBall};
use gpcover::gp_classification::{laplace_fit, ClassificationData};
use gpcover::gp_regression::{log_marginal_likelihood, RegressionData};
use gpcover::gwn::{simulate, ObservedSequence};
use gpcover::hb::{hyper_posterior, HyperFamily, HyperPrior};
use gpcover::mmle::{self, MmleConfig};
use gpcover::posterior::{posterior, PriorSpec};
use gpcover::signals::{make_f2, make_selfsimilar};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn precision_matches_closed_form_and_grows(a in 1.0f64..500.0, n in 1.0f64..1e7, i in 1usize..2000) {
        let p = PriorSpec::Exponential { a };
        let direct = (a * (i as f64 / a).exp() + n).ln();
        prop_assert!((p.log_precision(i, n) - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        prop_assert!(p.log_precision(i + 1, n) > p.log_precision(i, n));
    }

    #[test]
    fn shrinkage_in_unit_interval_and_decreasing(a in 1.0f64..200.0, n in 10.0f64..1e6, seed in 0u64..1000) {
        let y: Vec<f64> = (0..300).map(|k| 1.0 + ((k as u64 * 7919 + seed) % 13) as f64).collect();
        let post = posterior(&ObservedSequence::from_values(y.clone(), n).unwrap(), PriorSpec::Exponential { a }).unwrap();
        let mut last = 1.0;
        for (m, yi) in post.means.iter().zip(&y) {
            let s = m / yi;
            prop_assert!((0.0..1.0).contains(&s));
            prop_assert!(s <= last);
            last = s;
        }
    }

    #[test]
    fn mmle_stays_in_range(seed in 0u64..10_000, logn in 2.0f64..5.0) {
        let n = 10f64.powf(logn);
        let truth = make_selfsimilar(1.0, 1.0, 2000).unwrap();
        let y = simulate(&truth, n, 2000, seed).unwrap();
        let cfg = MmleConfig::default();
        let fit = mmle::fit(&y, &cfg).unwrap();
        prop_assert!(fit.a_hat >= 1.0 && fit.a_hat <= cfg.upper_endpoint(n).unwrap() * (1.0 + 1e-12));
        prop_assert!((fit.a_tilde - fit.a_hat * n.ln()).abs() <= 1e-12 * fit.a_tilde);
    }

    #[test]
    fn radius_shrinks_with_n_under_shared_noise(a in 1.0f64..50.0, seed in 0u64..1000) {
        let small = credible::radius_fixed_a(a, 1e2, 0.05, 200, seed).unwrap();
        let large = credible::radius_fixed_a(a, 1e4, 0.05, 200, seed).unwrap();
        prop_assert!(large < small);
    }

    #[test]
    fn inflation_preserves_coverage(r in 0.01f64..2.0, shift in -1.0f64..1.0) {
        let truth = make_f2(200).unwrap();
        let centre: Vec<f64> = truth.coeffs().iter().map(|c| c + shift / 20.0).collect();
        let ball = CredibleBall::new(centre, r, 1.0, 0.05, 2000, 0).unwrap();
        let wide = ball.with_inflation(1e3f64.ln()).unwrap();
        prop_assert!(!credible::covers(&ball, &truth) || credible::covers(&wide, &truth));
    }

    #[test]
    fn hyper_posterior_is_a_distribution(seed in 0u64..1000, rate in 0.05f64..5.0) {
        let truth = make_selfsimilar(1.0, 1.0, 2000).unwrap();
        let y = simulate(&truth, 1e3, 2000, seed).unwrap();
        let prior = HyperPrior::for_n(HyperFamily::Exponential { rate }, 1e3).unwrap();
        let h = hyper_posterior(&y, &prior, 200).unwrap();
        let total: f64 = h.weights.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(h.weights.iter().all(|&w| w >= 0.0));
        let m = h.mean_a();
        prop_assert!(m >= h.grid[0] && m <= *h.grid.last().unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn regression_evidence_ignores_order(seed in 0u64..1000, a in 0.5f64..500.0, s2 in 0.01f64..2.0) {
        let n = 25;
        let x: Vec<f64> = (0..n).map(|k| ((k as u64 * 37 + seed) % 101) as f64 / 100.0).collect();
        let y: Vec<f64> = x.iter().map(|t| (6.0 * t).sin()).collect();
        let d = RegressionData::new(x.clone(), y.clone()).unwrap();
        let rx: Vec<f64> = x.iter().rev().copied().collect();
        let ry: Vec<f64> = y.iter().rev().copied().collect();
        let r = RegressionData::new(rx, ry).unwrap();
        let (l1, l2) = (log_marginal_likelihood(&d, a, s2).unwrap(), log_marginal_likelihood(&r, a, s2).unwrap());
        prop_assert!((l1 - l2).abs() <= 1e-8 * l1.abs().max(1.0));
    }

    #[test]
    fn newton_objective_never_decreases(seed in 0u64..1000, a in 0.5f64..300.0) {
        let n = 40;
        let x: Vec<f64> = (0..n).map(|k| ((k as u64 * 53 + seed) % 97) as f64 / 96.0).collect();
        let y: Vec<u8> = x.iter().enumerate().map(|(k, t)| u8::from((t * 7.0).sin() > 0.0 || k % 5 == 0)).collect();
        let d = ClassificationData::new(x, y).unwrap();
        let fit = laplace_fit(&d, a).unwrap();
        prop_assert!(fit.converged);
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12 * w[0].abs());
        }
        // label flip negates the mode
        let flipped = ClassificationData::new(d.x.clone(), d.y.iter().map(|v| 1 - v).collect()).unwrap();
        let g = laplace_fit(&flipped, a).unwrap();
        for (u, v) in fit.mode.iter().zip(&g.mode) {
            prop_assert!((u + v).abs() <= 1e-6 * u.abs().max(1.0));
        }
    }
}
