mod common;

use proptest::prelude::*;
use rand::Rng;

use seqopt::bound::{BoundModel, RiskTracker};
use seqopt::cv::fold_partition;
use seqopt::domain::{norm, project_to_domain, ConvexityConstants};
use seqopt::drift::{combine_windowed, window_estimator_uniform, OneStepEstimate};
use seqopt::planner::{phi_loss, round_plan, total_cost, CostModel, PhiKind};
use seqopt::policy::{choose_k_update_past, k_star};
use seqopt::rng::{keyed_rng, Stream};
use seqopt::scenarios::roc_auc;

fn bm(c_alpha: f64, c_beta: f64, m: f64) -> BoundModel {
    BoundModel::new(c_alpha, c_beta, ConvexityConstants::new(m, 2.0 * m).unwrap(), 1_000_000).unwrap()
}

fn scored() -> impl Strategy<Value = Vec<(f64, bool)>> {
    prop::collection::vec(((0i32..20).prop_map(|v| v as f64 / 4.0), any::<bool>()), 2..40)
        .prop_filter("both classes", |v| v.iter().any(|p| p.1) && v.iter().any(|p| !p.1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projection_lands_in_ball_and_fixes_interior(
        w in prop::collection::vec(-50.0f64..50.0, 1..8),
        radius in 0.1f64..20.0,
    ) {
        let p = project_to_domain(&w, radius).unwrap();
        prop_assert!(norm(&p) <= radius * (1.0 + 1e-12));
        if norm(&w) <= radius {
            prop_assert_eq!(p, w);
        }
    }

    #[test]
    fn inversion_is_minimal_and_monotone_in_d0(
        ca in 0.0f64..5.0, cb in 0.01f64..5.0, m in 0.1f64..3.0,
        d0 in 0.0f64..20.0, extra in 0.0f64..5.0, eps in 0.001f64..1.0,
    ) {
        let b = bm(ca, cb, m);
        let inv = b.invert(d0, eps).unwrap();
        prop_assert!(!inv.saturated);
        prop_assert!(b.eval(d0, inv.k) <= eps);
        if inv.k > 1 {
            prop_assert!(b.eval(d0, inv.k - 1) > eps);
        }
        prop_assert!(b.invert(d0 + extra, eps).unwrap().k >= inv.k);
    }

    #[test]
    fn bound_decreases_in_k_and_grows_in_d0(
        ca in 0.0f64..5.0, cb in 0.01f64..5.0, d0 in 0.0f64..20.0, k in 1u64..10_000,
    ) {
        let b = bm(ca, cb, 1.0);
        prop_assert!(b.eval(d0, k + 1) < b.eval(d0, k));
        prop_assert!(b.eval(d0 + 1.0, k) >= b.eval(d0, k));
    }

    #[test]
    fn one_step_estimate_is_clipped(
        gap in 0.0f64..100.0, g1 in 0.0f64..100.0, g2 in 0.0f64..100.0,
        m in 0.01f64..5.0, diam in 0.1f64..50.0,
    ) {
        let e = OneStepEstimate::from_parts(3, gap, g1, g2, m, diam);
        prop_assert!(e.rho_tilde >= 0.0 && e.rho_tilde <= diam);
    }

    #[test]
    fn windowed_combiner_on_constant_history_is_exact(
        v in 0.0f64..10.0, len in 1usize..30, window in 1usize..10,
    ) {
        // Each truncated window of size w gives (w + 1) / w * v.
        let got = combine_windowed(&vec![v; len], window).unwrap();
        let want = (0..len)
            .map(|j| {
                let w = (j + 1).min(window) as f64;
                (w + 1.0) / w * v
            })
            .sum::<f64>() / len as f64;
        prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want));
        prop_assert!(got >= v);
    }

    #[test]
    fn window_statistic_dominates_the_max(values in prop::collection::vec(0.0f64..10.0, 1..20)) {
        let max = values.iter().copied().fold(0.0, f64::max);
        let h = window_estimator_uniform(&values).unwrap();
        prop_assert!(h >= max);
        prop_assert!(h <= 2.0 * max + 1e-12);
    }

    #[test]
    fn phi_relations(xi in prop::collection::vec(0.0f64..5.0, 1..30)) {
        let mean = phi_loss(PhiKind::Mean, &xi);
        let max = phi_loss(PhiKind::Max, &xi);
        let run = phi_loss(PhiKind::MaxIncreasingRun, &xi);
        prop_assert!(mean <= max + 1e-12);
        prop_assert!(run <= xi.iter().sum::<f64>() + 1e-9);
        prop_assert!((run - common::phi_run_brute(&xi)).abs() <= 1e-9);
        if xi.len() >= 2 {
            // A pair of a value and its larger neighbour is always a run.
            let best_pair = xi.windows(2).filter(|w| w[1] >= w[0]).map(|w| w[0] + w[1]).fold(0.0, f64::max);
            prop_assert!(run + 1e-12 >= best_pair);
        }
    }

    #[test]
    fn auc_is_a_probability_matching_all_pairs(s in scored()) {
        let a = roc_auc(&s).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a - common::auc_pairs(&s)).abs() <= 1e-12);
    }

    #[test]
    fn auc_invariant_under_monotone_transform(s in scored(), shift in -3.0f64..3.0, scale in 0.1f64..10.0) {
        let t: Vec<(f64, bool)> = s.iter().map(|&(v, l)| ((scale * v + shift).exp(), l)).collect();
        prop_assert!((roc_auc(&s).unwrap() - roc_auc(&t).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn folds_partition_the_samples(k in 0usize..200, folds in 2usize..10, seed: u64, step in 1usize..50) {
        let parts = fold_partition(k, folds, seed, step);
        prop_assert_eq!(parts.len(), folds.min(k).max(1));
        let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..k).collect::<Vec<_>>());
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn rounded_plans_stay_within_budget(
        x in prop::collection::vec(0.0f64..200.0, 1..25),
        p0 in 0.0f64..5.0, p1 in 0.1f64..3.0, budget in 0.0f64..2000.0,
    ) {
        let cm = CostModel::new(p0, p1, 0.5).unwrap();
        let k = round_plan(&x, &cm, budget);
        prop_assert_eq!(k.len(), x.len());
        prop_assert!(total_cost(&cm, &k) <= budget + 1e-9);
        for (ki, xi) in k.iter().zip(&x) {
            prop_assert!(*ki as f64 <= (xi + 0.5).floor());
        }
    }

    #[test]
    fn relaxed_cost_agrees_at_integers(p0 in 0.0f64..5.0, p1 in 0.1f64..3.0, k0 in 0.05f64..0.95, k in 0u64..10_000) {
        let cm = CostModel::new(p0, p1, k0).unwrap();
        prop_assert!((cm.relaxed(k as f64) - cm.cost(k)).abs() <= 1e-9 * (1.0 + cm.cost(k)));
    }

    #[test]
    fn keyed_streams_are_reproducible(seed: u64, step in 0u64..1000, index in 0u64..1000) {
        let a: [u64; 4] = keyed_rng(seed, Stream::Train, step, index).random();
        let b: [u64; 4] = keyed_rng(seed, Stream::Train, step, index).random();
        let c: [u64; 4] = keyed_rng(seed, Stream::Test, step, index).random();
        prop_assert_eq!(a, b);
        prop_assert_ne!(a, c);
    }

    #[test]
    fn k_star_monotone(rho in 0.0f64..2.0, drho in 0.0f64..1.0, eps in 0.01f64..1.0, shrink in 0.1f64..1.0) {
        let b = bm(1.0, 1.0, 1.0);
        let k = k_star(&b, rho, eps).unwrap().k;
        prop_assert!(k_star(&b, rho + drho, eps).unwrap().k >= k);
        prop_assert!(k_star(&b, rho, eps * shrink).unwrap().k >= k);
    }

    #[test]
    fn update_past_never_asks_less_than_no_update(
        ks in prop::collection::vec(1u64..400, 2..12), rho in 0.0f64..1.0, eps in 0.05f64..0.5,
    ) {
        let b = bm(1.0, 1.0, 1.0);
        let prev = vec![0.0; ks.len()];
        let (up, _) = choose_k_update_past(&prev, &b, eps, rho, &ks, 6.0).unwrap();
        let no = k_star(&b, rho, eps).unwrap();
        prop_assert!(up.k >= no.k);
    }

    #[test]
    fn tracker_records_sampled_steps(
        ks in prop::collection::vec(0u64..300, 1..15), rho in 0.0f64..0.5,
    ) {
        let b = bm(1.0, 1.0, 1.0);
        let mut t = RiskTracker::new(6.0);
        for (i, &k) in ks.iter().enumerate() {
            t = t.advance(&b, rho, k, i + 1);
            prop_assert!(t.current >= 0.0 && t.current.is_finite());
            if k > 0 {
                prop_assert_eq!(t.last_sampled, Some(i + 1));
                prop_assert_eq!(t.current, t.eps_at_last_sample);
            }
        }
    }
}
