//! Cross-validated choice of the ridge weight across parallel tracks.
//!
//! Every track owns an iterate, a drift estimator, a bound tracker and a
//! policy. At each step the largest proposal is drawn once and shared by all
//! tracks; a `P`-fold split scores each track's weight with the unpenalized
//! loss, and the winner's retrained iterate is reported.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::bound::{BoundModel, RiskTracker};
use crate::domain::{ProblemSequence, Sample};
use crate::drift::{one_step_estimate, DriftState};
use crate::error::{Error, Result};
use crate::losses::Loss;
use crate::policy::{SamplePolicy, StepContext};
use crate::rng::{keyed_rng, Stream};
use crate::run::{check_decision, evaluate, reported_bound, RunRecord, RunSetup, StepRecord};
use crate::sgd::{optimize, SgdConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    pub lambdas: Vec<f64>,
    pub folds: usize,
}

impl CvConfig {
    pub fn validated(self) -> Result<Self> {
        if self.lambdas.is_empty() {
            return Err(Error::config("cv.lambdas", "needs at least one value"));
        }
        if self.lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::config("cv.lambdas", "values must be finite and >= 0"));
        }
        for (i, a) in self.lambdas.iter().enumerate() {
            if self.lambdas[..i].contains(a) {
                return Err(Error::config("cv.lambdas", format!("duplicate value {a}")));
            }
        }
        if self.folds < 2 {
            return Err(Error::config("cv.folds", "must be >= 2"));
        }
        Ok(self)
    }
}

/// Strong-convexity modulus of the risk for a loss.
fn modulus(loss: &Loss) -> f64 {
    match loss {
        Loss::Quadratic(q) => q.modulus(),
        Loss::SmoothedHinge(h) => h.lambda,
    }
}

/// Held-out pieces of a seeded permutation of `0..k`. With fewer samples
/// than folds every sample is its own piece.
pub fn fold_partition(k: usize, folds: usize, seed: u64, step: usize) -> Vec<Vec<usize>> {
    let p = folds.min(k).max(1);
    let mut idx: Vec<usize> = (0..k).collect();
    idx.shuffle(&mut keyed_rng(seed, Stream::Folds, step as u64, 0));
    let mut out = vec![Vec::new(); p];
    for (j, i) in idx.into_iter().enumerate() {
        out[j % p].push(i);
    }
    out
}

/// Mean held-out unpenalized loss of each track, averaged over folds.
/// Returns the scores and the winning index (smallest on ties).
pub fn cv_scores(
    samples: &[Sample],
    pieces: &[Vec<usize>],
    losses: &[Loss],
    sgds: &[SgdConfig],
    starts: &[Vec<f64>],
    radius: f64,
) -> Result<(Vec<f64>, usize)> {
    if pieces.len() < 2 {
        return Err(Error::param("cv", "needs at least two samples"));
    }
    let mut scores = Vec::with_capacity(losses.len());
    for ((loss, sgd), w0) in losses.iter().zip(sgds).zip(starts) {
        let plain = loss.with_lambda(0.0);
        let mut total = 0.0;
        for (f, held) in pieces.iter().enumerate() {
            let train: Vec<Sample> = pieces
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, p)| p.iter().map(|&i| samples[i].clone()))
                .collect();
            let w = optimize(w0, &train, loss, sgd, radius)?;
            let test: Vec<Sample> = held.iter().map(|&i| samples[i].clone()).collect();
            total += plain.mean_loss(&w, &test)?;
        }
        scores.push(total / pieces.len() as f64);
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = i;
        }
    }
    Ok((scores, best))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvRunRecord {
    pub run: RunRecord,
    /// Chosen track per step.
    pub chosen: Vec<usize>,
    /// Per-step proposals of every track.
    pub proposals: Vec<Vec<u64>>,
    pub scores: Vec<Vec<f64>>,
}

struct Track {
    loss: Loss,
    sgd: SgdConfig,
    bound: BoundModel,
    w: Vec<f64>,
    drift: DriftState,
    tracker: RiskTracker,
    policy: Box<dyn SamplePolicy>,
}

/// Cross-validated run. `make_policy` builds one policy per track.
pub fn run_cv(
    setup: &RunSetup,
    cv: &CvConfig,
    make_policy: &dyn Fn() -> Result<Box<dyn SamplePolicy>>,
    seed: u64,
) -> Result<CvRunRecord> {
    let seq: &ProblemSequence = &setup.sequence;
    let d = seq.dim();
    let diameter = seq.diameter();
    let base_lambda = setup.loss.lambda();
    let base_m = modulus(&setup.loss);
    let mut tracks = Vec::with_capacity(cv.lambdas.len());
    for &lambda in &cv.lambdas {
        let loss = setup.loss.with_lambda(lambda);
        let m = modulus(&loss);
        if !(m > 0.0) {
            return Err(Error::config("cv.lambdas", format!("lambda = {lambda} leaves the loss without strong convexity")));
        }
        let shift = lambda - base_lambda;
        let mut bound = setup.bound;
        bound.constants.m = m;
        bound.constants.big_m = (bound.constants.big_m + shift).max(m);
        tracks.push(Track {
            loss,
            sgd: SgdConfig::new(setup.sgd.c * base_m / m, setup.sgd.k0)?,
            bound,
            w: setup.w_init.clone().unwrap_or_else(|| vec![0.0; d]),
            drift: DriftState::new(setup.drift),
            tracker: RiskTracker::new(diameter),
            policy: make_policy()?,
        });
    }
    let mut k_history = Vec::with_capacity(seq.horizon);
    let mut prev_samples: Vec<Sample> = Vec::new();
    let mut spent = 0.0;
    let mut chosen_prev = 0;
    let mut out = CvRunRecord {
        run: RunRecord {
            policy: format!("cv-{}", tracks[0].policy.name()),
            seed,
            steps: Vec::new(),
            warnings: Vec::new(),
        },
        chosen: Vec::new(),
        proposals: Vec::new(),
        scores: Vec::new(),
    };

    for n in 1..=seq.horizon {
        let mut proposals = Vec::with_capacity(tracks.len());
        let mut saturated = false;
        let mut uppers = Vec::with_capacity(tracks.len());
        for t in tracks.iter_mut() {
            let rho_upper = t
                .drift
                .snapshot(&t.bound.constants)
                .map(|s| s.upper(setup.drift.use_dn).min(diameter));
            let ctx = StepContext {
                n,
                horizon: seq.horizon,
                k_history: &k_history,
                rho_upper,
                eps_target: setup.eps_target,
                bound: &t.bound,
                diameter,
                tracker: t.tracker,
                spent,
            };
            let dec = t.policy.decide(&ctx)?;
            check_decision(t.policy.as_ref(), &ctx, dec.k)?;
            saturated |= dec.saturated;
            proposals.push(dec.k);
            uppers.push(rho_upper);
        }
        let k = proposals.iter().copied().max().unwrap_or(0);
        let samples = seq.source.draw(seed, Stream::Train, n, k as usize)?;

        let (chosen, scores) = if tracks.len() == 1 {
            (0, vec![f64::NAN])
        } else if samples.len() < 2 {
            out.run
                .warnings
                .push(format!("step {n}: {} samples, cross-validation skipped", samples.len()));
            (chosen_prev, vec![f64::NAN; tracks.len()])
        } else {
            if samples.len() < cv.folds {
                out.run.warnings.push(format!(
                    "step {n}: K_n = {} < {} folds, using leave-one-out",
                    samples.len(),
                    cv.folds
                ));
            }
            let pieces = fold_partition(samples.len(), cv.folds, seed, n);
            let losses: Vec<Loss> = tracks.iter().map(|t| t.loss).collect();
            let sgds: Vec<SgdConfig> = tracks.iter().map(|t| t.sgd).collect();
            let starts: Vec<Vec<f64>> = tracks.iter().map(|t| t.w.clone()).collect();
            let (scores, best) = cv_scores(&samples, &pieces, &losses, &sgds, &starts, seq.domain_radius)?;
            (best, scores)
        };

        for (t, upper) in tracks.iter_mut().zip(&uppers) {
            let w_prev = std::mem::take(&mut t.w);
            t.w = optimize(&w_prev, &samples, &t.loss, &t.sgd, seq.domain_radius)?;
            t.drift.record_sampled_step(k);
            if n >= 2 {
                let est = one_step_estimate(n, &t.w, &w_prev, &samples, &prev_samples, &t.loss, t.bound.m(), diameter)?;
                if let Some(e) = est {
                    t.drift.push(e.rho_tilde);
                }
            }
            let rho = setup.rho_known.or(*upper).unwrap_or(diameter);
            t.tracker = reported_bound(&t.tracker, &t.bound, rho, k, n);
        }

        let win = &tracks[chosen];
        let snap = win.drift.snapshot(&win.bound.constants);
        let test = seq.source.draw(seed, Stream::Test, n, setup.test_size)?;
        let (tl, auc) = evaluate(&win.loss, &win.w, &test)?;
        let cum_cost = setup.cost.map(|c| {
            spent += c.cost(k);
            spent
        });
        out.run.steps.push(StepRecord {
            n,
            k,
            w: win.w.clone(),
            rho_hat: snap.map(|s| s.rho_hat),
            slack: snap.map(|s| s.slack),
            rho_used: uppers[chosen],
            eps_hat: win.tracker.current,
            xi: (win.tracker.current - setup.eps_target).max(0.0),
            excess_exact: seq.source.excess_risk(n, &win.w),
            test_loss: tl,
            auc,
            cum_cost,
            saturated,
        });
        out.chosen.push(chosen);
        out.proposals.push(proposals);
        out.scores.push(scores);
        chosen_prev = chosen;
        k_history.push(k);
        prev_samples = samples;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_all_samples() {
        for (k, p) in [(10, 3), (7, 7), (3, 5), (100, 10)] {
            let parts = fold_partition(k, p, 5, 2);
            assert_eq!(parts.len(), p.min(k));
            let mut all: Vec<usize> = parts.concat();
            all.sort();
            assert_eq!(all, (0..k).collect::<Vec<_>>());
            let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
        assert_eq!(fold_partition(20, 4, 1, 1), fold_partition(20, 4, 1, 1));
        assert_ne!(fold_partition(20, 4, 1, 1), fold_partition(20, 4, 1, 2));
    }

    #[test]
    fn config_validation() {
        assert!(CvConfig { lambdas: vec![0.0, 1.0], folds: 5 }.validated().is_ok());
        assert!(CvConfig { lambdas: vec![1.0, 1.0], folds: 5 }.validated().is_err());
        assert!(CvConfig { lambdas: vec![0.0], folds: 1 }.validated().is_err());
        assert!(CvConfig { lambdas: vec![-1.0], folds: 3 }.validated().is_err());
    }

    #[test]
    fn identical_tracks_tie_to_first() {
        use crate::losses::QuadraticRegressionLoss;
        let loss = Loss::Quadratic(QuadraticRegressionLoss::new(0.5, 1.0, 1).unwrap());
        let samples: Vec<Sample> = (0..12).map(|i| Sample::new(vec![i as f64 / 6.0 - 1.0], i as f64 / 12.0)).collect();
        let pieces = fold_partition(12, 3, 0, 1);
        let sgd = SgdConfig::for_modulus(1.5).unwrap();
        let (scores, best) = cv_scores(
            &samples,
            &pieces,
            &[loss, loss],
            &[sgd, sgd],
            &[vec![0.0], vec![0.0]],
            10.0,
        )
        .unwrap();
        assert_eq!(scores[0], scores[1]);
        assert_eq!(best, 0);
    }
}
