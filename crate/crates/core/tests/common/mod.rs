#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use seqopt::bound::BoundModel;
use seqopt::domain::{ConvexityConstants, Sample, SampleSource};
use seqopt::losses::{exact_risk_quadratic, monte_carlo_risk, Loss, QuadraticRegressionLoss, SmoothedHingeLoss};
use seqopt::planner::{phi_loss, PhiKind};
use seqopt::rng::Stream;
use seqopt::scenarios::{roc_auc, RegressionDrift};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

fn normal_vec(r: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| normal(r)).collect()
}

/// Largest componentwise gap between the analytic gradient and a central
/// difference with step `h`, over `points` random `(w, z)`.
pub fn fd_gradient_error(loss: &Loss, points: usize, h: f64, seed: u64) -> f64 {
    let mut r = rng(seed);
    let d = loss.dim();
    let mut worst = 0.0f64;
    for _ in 0..points {
        let w = normal_vec(&mut r, d);
        let x = normal_vec(&mut r, d);
        let y = match loss {
            Loss::Quadratic(_) => 2.0 * normal(&mut r),
            Loss::SmoothedHinge(_) => {
                if r.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        let z = Sample::new(x, y);
        let g = loss.gradient(&w, &z).unwrap();
        for j in 0..d {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[j] += h;
            wm[j] -= h;
            let fd = (loss.value(&wp, &z).unwrap() - loss.value(&wm, &z).unwrap()) / (2.0 * h);
            worst = worst.max((fd - g[j]).abs());
        }
    }
    worst
}

pub fn quadratic(lambda: f64, d: usize) -> Loss {
    Loss::Quadratic(QuadraticRegressionLoss::new(lambda, 1.0, d).unwrap())
}

pub fn hinge(lambda: f64, d: usize) -> Loss {
    Loss::SmoothedHinge(SmoothedHingeLoss::new(lambda, d).unwrap())
}

/// Worst `|exact - mc| / se` for the regression law over `points` random
/// iterates, each with `draws` Monte-Carlo samples.
pub fn quadratic_risk_vs_mc(points: usize, draws: usize, seed: u64) -> f64 {
    let lambda = 0.5;
    let src = RegressionDrift::new(3, 1.0, lambda, 2.0, 1.0, 1.0).unwrap();
    let loss = Loss::Quadratic(QuadraticRegressionLoss::new(lambda, 1.0, 3).unwrap());
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for p in 0..points {
        let step = 1 + p * 3;
        let w = normal_vec(&mut r, 3);
        let samples = src.draw(seed, Stream::Calibration, step, draws).unwrap();
        let (mc, se) = monte_carlo_risk(&loss, &w, &samples).unwrap();
        let exact = exact_risk_quadratic(&w, src.sigma_x2, src.sigma_y2(), &src.r(step), lambda).unwrap();
        worst = worst.max((mc - exact).abs() / se);
    }
    worst
}

/// Definition of the increasing-run aggregate: best sum over every pair
/// `a < b` with `xi[a..=b]` non-decreasing.
pub fn phi_run_brute(xi: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for a in 0..xi.len() {
        for b in a + 1..xi.len() {
            if (a..b).all(|i| xi[i] <= xi[i + 1]) {
                best = best.max(xi[a..=b].iter().sum());
            }
        }
    }
    best
}

/// Number of vectors of length `<= 8` over `{0, 1, 2}` where the scan and
/// the brute force disagree, and the number checked.
pub fn phi_exhaustive_mismatches() -> (usize, usize) {
    let mut bad = 0;
    let mut total = 0;
    for len in 0..=8u32 {
        for code in 0..3usize.pow(len) {
            let mut c = code;
            let xi: Vec<f64> = (0..len)
                .map(|_| {
                    let v = (c % 3) as f64;
                    c /= 3;
                    v
                })
                .collect();
            total += 1;
            if phi_loss(PhiKind::MaxIncreasingRun, &xi) != phi_run_brute(&xi) {
                bad += 1;
            }
        }
    }
    (bad, total)
}

pub fn auc_pairs(scores: &[(f64, bool)]) -> f64 {
    let mut credit = 0.0;
    let mut pairs = 0.0;
    for &(sp, _) in scores.iter().filter(|s| s.1) {
        for &(sn, _) in scores.iter().filter(|s| !s.1) {
            pairs += 1.0;
            if sp > sn {
                credit += 1.0;
            } else if sp == sn {
                credit += 0.5;
            }
        }
    }
    credit / pairs
}

/// Worst gap between `roc_auc` and the all-pairs count over `sets` random
/// score sets with ties.
pub fn auc_worst_gap(sets: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < sets {
        let n = r.random_range(2..80);
        let scores: Vec<(f64, bool)> = (0..n)
            .map(|_| ((r.random::<f64>() * 10.0).round() / 10.0, r.random::<bool>()))
            .collect();
        if scores.iter().all(|s| s.1) || scores.iter().all(|s| !s.1) {
            continue;
        }
        worst = worst.max((roc_auc(&scores).unwrap() - auc_pairs(&scores)).abs());
        done += 1;
    }
    worst
}

/// Random bound instances where the inversion is not the minimal feasible
/// `K`.
pub fn invert_violations(instances: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    let mut bad = 0;
    for _ in 0..instances {
        let m = r.random_range(0.05..5.0);
        let constants = ConvexityConstants::new(m, m * r.random_range(1.0..10.0)).unwrap();
        let bm = BoundModel::new(
            r.random_range(0.0..100.0),
            r.random_range(0.01..20.0),
            constants,
            1_000_000,
        )
        .unwrap();
        let d0 = r.random_range(0.0..30.0);
        let eps = 10f64.powf(r.random_range(-3.0..1.0));
        let inv = bm.invert(d0, eps).unwrap();
        let ok = if inv.saturated {
            inv.k == bm.k_cap && bm.eval(d0, inv.k) > eps
        } else {
            bm.eval(d0, inv.k) <= eps && (inv.k == 1 || bm.eval(d0, inv.k - 1) > eps)
        };
        if !ok {
            bad += 1;
        }
    }
    bad
}
