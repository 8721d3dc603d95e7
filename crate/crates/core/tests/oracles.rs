mod common;

use rand::Rng;

use seqopt::bound::{descent_bound_e, BoundModel, RiskTracker};
use seqopt::domain::{distance, project_to_domain, ConvexityConstants, SampleSource};
use seqopt::drift::{correction_dn, window_estimator_uniform};
use seqopt::losses::{exact_excess_risk_quadratic, exact_minimizer_quadratic, exact_risk_quadratic};
use seqopt::policy::k_star;
use seqopt::rng::Stream;
use seqopt::scenarios::{roc_auc, test_loss, ClassificationDrift, RegressionDrift};

fn bm(c_alpha: f64, c_beta: f64, m: f64, big_m: f64) -> BoundModel {
    BoundModel::new(c_alpha, c_beta, ConvexityConstants::new(m, big_m).unwrap(), 1_000_000).unwrap()
}

#[test]
fn gradients_match_central_differences() {
    for loss in [common::quadratic(0.0, 3), common::quadratic(0.7, 5), common::hinge(0.1, 2), common::hinge(1.0, 4)] {
        let err = common::fd_gradient_error(&loss, 100, 1e-6, 3);
        assert!(err <= 1e-5, "{loss:?}: {err}");
    }
}

#[test]
fn quadratic_risk_matches_monte_carlo() {
    let worst = common::quadratic_risk_vs_mc(4, 1_000_000, 5);
    assert!(worst <= 3.0, "{worst} standard errors");
}

#[test]
fn quadratic_minimizer_examples() {
    // Numerical minimization of the closed-form risk by coordinate search.
    let numeric = |sigma_x2: f64, r: &[f64]| {
        let sy2 = r.iter().map(|v| v * v).sum::<f64>() / sigma_x2 + 1.0;
        let mut w = vec![0.0; r.len()];
        let mut step = 1.0;
        while step > 1e-10 {
            let mut moved = false;
            for j in 0..w.len() {
                for dir in [-1.0, 1.0] {
                    let mut c = w.clone();
                    c[j] += dir * step;
                    if exact_risk_quadratic(&c, sigma_x2, sy2, r, 0.0).unwrap()
                        < exact_risk_quadratic(&w, sigma_x2, sy2, r, 0.0).unwrap()
                    {
                        w = c;
                        moved = true;
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        w
    };
    for (sigma_x2, r, expect) in [
        (1.0, vec![0.3, 0.4, 0.0], vec![0.3, 0.4, 0.0]),
        (2.0, vec![1.0, 0.0, 0.0], vec![0.5, 0.0, 0.0]),
    ] {
        let w = exact_minimizer_quadratic(sigma_x2, 0.0, &r).unwrap();
        let n = numeric(sigma_x2, &r);
        for ((a, b), c) in w.iter().zip(&n).zip(&expect) {
            assert!((a - c).abs() < 1e-12);
            assert!((b - c).abs() < 1e-8);
        }
    }
}

#[test]
fn phi_scan_matches_brute_force_exhaustively() {
    let (bad, total) = common::phi_exhaustive_mismatches();
    assert_eq!(total, 9841);
    assert_eq!(bad, 0);
}

#[test]
fn auc_matches_all_pairs() {
    assert!(common::auc_worst_gap(50, 9) < 1e-12);
    let s = [(0.9, true), (0.8, false), (0.7, true), (0.1, false)];
    assert_eq!(roc_auc(&s).unwrap(), 0.75);
    assert_eq!(common::auc_pairs(&s), 0.75);
}

#[test]
fn inversion_is_minimal() {
    assert_eq!(common::invert_violations(1000, 21), 0);
}

#[test]
fn inversion_monotone_in_start_distance() {
    let mut r = common::rng(22);
    for _ in 0..1000 {
        let b = bm(r.random_range(0.0..50.0), r.random_range(0.1..10.0), 1.0, 2.0);
        let eps = r.random_range(0.01..1.0);
        let d = r.random_range(0.0..20.0);
        let k1 = b.invert(d, eps).unwrap().k;
        let k2 = b.invert(d + r.random_range(0.0..5.0), eps).unwrap().k;
        assert!(k2 >= k1);
    }
}

#[test]
fn bound_decreases_in_k() {
    let mut r = common::rng(23);
    for _ in 0..1000 {
        let b = bm(r.random_range(0.0..50.0), r.random_range(0.1..10.0), 1.0, 1.0);
        let d0 = r.random_range(0.0..20.0);
        let k = r.random_range(1..100_000u64);
        assert!(b.eval(d0, k + 1) <= b.eval(d0, k));
    }
}

#[test]
fn descent_bound_covers_exact_excess() {
    let src = RegressionDrift::new(3, 1.0, 0.0, 2.0, 1.0, 1.0).unwrap();
    let radius = 5.0;
    let constants = ConvexityConstants::new(1.0, 1.0).unwrap();
    let cap = descent_bound_e(&constants, (2.0 * radius) * (2.0 * radius));
    let mut r = common::rng(24);
    for i in 0..100 {
        let w: Vec<f64> = (0..3).map(|_| r.random_range(-radius..radius)).collect();
        let w = project_to_domain(&w, radius).unwrap();
        let step = 1 + i % 25;
        let e = exact_excess_risk_quadratic(&w, 1.0, src.sigma_y2(), &src.r(step), 0.0).unwrap();
        assert!(e <= cap);
    }
}

#[test]
fn recursion_fixed_point_without_drift() {
    let b = bm(30.0, 3.0, 1.0, 1.0);
    for k in [100u64, 1_000, 10_000] {
        let mut eps = 1.0;
        for _ in 0..100_000 {
            let next = b.epsilon_recursion(eps, 0.0, k);
            if (next - eps).abs() < 1e-10 {
                eps = next;
                break;
            }
            eps = next;
        }
        let image = b.eval((2.0 * eps / b.m()).sqrt(), k);
        assert!(eps <= image + 1e-10, "K = {k}: {eps} vs {image}");
    }
}

#[test]
fn k_star_keeps_the_recursion_inside_the_target() {
    let b = bm(30.0, 3.0, 1.0, 1.0);
    for (rho, eps) in [(0.0, 0.1), (1.0, 0.1), (0.3, 0.02), (2.0, 0.5)] {
        let k = k_star(&b, rho, eps).unwrap().k;
        for i in 0..=100 {
            let prev = eps * i as f64 / 100.0;
            assert!(b.epsilon_recursion(prev, rho, k) <= eps * (1.0 + 1e-12));
        }
    }
}

#[test]
fn case_four_step_lands_on_target() {
    let b = bm(30.0, 3.0, 1.0, 1.0);
    let mut r = common::rng(25);
    for _ in 0..200 {
        let eps = r.random_range(0.02..0.5);
        let rho = r.random_range(0.0..2.0);
        let ts = r.random_range(1..10usize);
        let gap = r.random_range(2..6usize);
        let eps_ts = r.random_range(0.0..3.0);
        let t = RiskTracker {
            diameter: 10.0,
            last_sampled: Some(ts),
            eps_at_last_sample: eps_ts,
            current: eps_ts,
        };
        let n = ts + gap;
        let drift = (n - ts) as f64 * rho;
        let d0 = (4.0 / b.m() * eps_ts + 2.0 * drift * drift).sqrt();
        let k = b.invert(d0, eps).unwrap().k;
        assert!(t.advance(&b, rho, k, n).current <= eps);
    }
}

#[test]
fn window_statistic_is_biased_upward() {
    let mut r = common::rng(26);
    let rho = 0.7;
    for w in [1usize, 3, 8] {
        let draws = 100_000;
        let mean = (0..draws)
            .map(|_| {
                let v: Vec<f64> = (0..w).map(|_| r.random_range(0.0..rho)).collect();
                window_estimator_uniform(&v).unwrap()
            })
            .sum::<f64>()
            / draws as f64;
        assert!(mean >= rho * (1.0 - 2e-3), "W = {w}: {mean}");
    }
}

#[test]
fn correction_decreases_in_every_sample_count() {
    let c = ConvexityConstants { sigma: 2.0, ..ConvexityConstants::new(0.5, 1.5).unwrap() };
    let ks = [10u64, 40, 25, 80, 5];
    let dn = |ks: &[u64]| {
        let cs: Vec<f64> = ks.iter().map(|&k| (10.0 / k as f64).sqrt()).collect();
        correction_dn(&cs, ks, &c).unwrap()
    };
    let base = dn(&ks);
    for i in 0..ks.len() {
        let mut more = ks;
        more[i] += 7;
        assert!(dn(&more) < base);
    }
}

#[test]
fn k_star_monotone_in_rho_and_eps() {
    let b = bm(30.0, 3.0, 1.0, 1.0);
    let mut last = 0;
    for i in 0..50 {
        let k = k_star(&b, i as f64 * 0.1, 0.1).unwrap().k;
        assert!(k >= last);
        last = k;
    }
    let mut last = u64::MAX;
    for i in 1..50 {
        let k = k_star(&b, 1.0, i as f64 * 0.02).unwrap().k;
        assert!(k <= last);
        last = k;
    }
}

#[test]
fn regression_minimizers_step_exactly_rho() {
    let src = RegressionDrift::new(3, 1.0, 0.0, 2.0, 1.0, 1.0).unwrap();
    for n in 2..=25 {
        let d = distance(&src.minimizer(n).unwrap(), &src.minimizer(n - 1).unwrap());
        assert!((d - 1.0).abs() < 1e-12, "n = {n}: {d}");
    }
    let still = RegressionDrift::new(3, 1.0, 0.0, 2.0, 0.0, 1.0).unwrap();
    assert_eq!(still.minimizer(1), still.minimizer(9));
}

#[test]
fn regression_draw_covariance() {
    let src = RegressionDrift::new(3, 1.5, 0.0, 2.0, 1.0, 0.8).unwrap();
    let step = 4;
    let n = 1_000_000;
    let z = src.draw(77, Stream::Calibration, step, n).unwrap();
    let dim = 4;
    let mut cov = vec![vec![0.0; dim]; dim];
    for s in &z {
        let v: Vec<f64> = s.x.iter().copied().chain([s.y]).collect();
        for i in 0..dim {
            for j in 0..dim {
                cov[i][j] += v[i] * v[j] / n as f64;
            }
        }
    }
    let r = src.r(step);
    let mut expect = vec![vec![0.0; dim]; dim];
    for i in 0..3 {
        expect[i][i] = 1.5;
        expect[i][3] = r[i];
        expect[3][i] = r[i];
    }
    expect[3][3] = src.sigma_y2();
    // Entries relative to the scale of their row and column.
    for i in 0..dim {
        for j in 0..dim {
            let scale = (expect[i][i] * expect[j][j]).sqrt();
            assert!((cov[i][j] - expect[i][j]).abs() <= 0.01 * scale, "({i},{j}): {} vs {}", cov[i][j], expect[i][j]);
        }
    }
}

#[test]
fn classification_class_means() {
    let src = ClassificationDrift::with_theta(3, 0.5, 0.1, 0.4).unwrap();
    let step = 6;
    let z = src.draw(78, Stream::Calibration, step, 100_000).unwrap();
    let mu = src.mean(step);
    let sd = 0.5f64.sqrt();
    for label in [1.0, -1.0] {
        let cls: Vec<_> = z.iter().filter(|s| s.y == label).collect();
        let n = cls.len() as f64;
        for (j, mu_j) in mu.iter().enumerate() {
            let m = cls.iter().map(|s| s.x[j]).sum::<f64>() / n;
            assert!((m - label * mu_j).abs() <= 3.0 * sd / n.sqrt(), "class {label}, coord {j}: {m}");
        }
    }
}

#[test]
fn test_loss_converges_to_exact_risk() {
    let src = RegressionDrift::new(3, 1.0, 0.0, 2.0, 1.0, 1.0).unwrap();
    let loss = common::quadratic(0.0, 3);
    let w = vec![0.4, -0.2, 0.9];
    let step = 3;
    let z = src.draw(79, Stream::Test, step, 100_000).unwrap();
    let tl = test_loss(&loss, &w, &z).unwrap();
    let (_, se) = seqopt::losses::monte_carlo_risk(&loss, &w, &z).unwrap();
    let exact = exact_risk_quadratic(&w, 1.0, src.sigma_y2(), &src.r(step), 0.0).unwrap();
    assert!((tl - exact).abs() <= 3.0 * se);
}
