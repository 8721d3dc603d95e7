//! The per-run simulation loop.

use serde::Serialize;

use crate::bound::{BoundModel, RiskTracker};
use crate::domain::{dot, ProblemSequence, Sample};
use crate::drift::{one_step_estimate, DriftConfig, DriftState};
use crate::error::{Error, Result};
use crate::losses::Loss;
use crate::planner::CostModel;
use crate::policy::{SamplePolicy, StepContext};
use crate::rng::Stream;
use crate::scenarios::{roc_auc, test_loss};
use crate::sgd::{optimize, SgdConfig};

/// Everything a single run needs besides the policy and the seed.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub sequence: ProblemSequence,
    pub loss: Loss,
    pub bound: BoundModel,
    pub sgd: SgdConfig,
    pub drift: DriftConfig,
    pub eps_target: f64,
    /// Held-out draws per step for test loss and AUC.
    pub test_size: usize,
    pub cost: Option<CostModel>,
    /// Known drift bound; when set the reported bound uses it instead of the
    /// estimate.
    pub rho_known: Option<f64>,
    /// Starting iterate `w_0`; zero when absent.
    pub w_init: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub n: usize,
    pub k: u64,
    pub w: Vec<f64>,
    /// Combined drift estimate after step `n`.
    pub rho_hat: Option<f64>,
    /// Slack `t_n` matching `rho_hat`.
    pub slack: Option<f64>,
    /// Drift value the policy saw when choosing `K_n`.
    pub rho_used: Option<f64>,
    pub eps_hat: f64,
    pub xi: f64,
    pub excess_exact: Option<f64>,
    pub test_loss: f64,
    pub auc: Option<f64>,
    pub cum_cost: Option<f64>,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub policy: String,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub warnings: Vec<String>,
}

impl RunRecord {
    pub fn schedule(&self) -> Vec<u64> {
        self.steps.iter().map(|s| s.k).collect()
    }

    pub fn total_samples(&self) -> u64 {
        self.steps.iter().map(|s| s.k).sum()
    }
}

/// Bound reported after step `n`. Steps 1-2 use the start-distance bound,
/// consecutive sampled steps the scalar recursion, everything else the
/// four-case tracker.
pub(crate) fn reported_bound(
    prev: &RiskTracker,
    bm: &BoundModel,
    rho: f64,
    k: u64,
    n: usize,
) -> RiskTracker {
    let value = if k > 0 && n <= 2 {
        bm.eval(prev.diameter, k)
    } else if k > 0 && n >= 2 && prev.last_sampled == Some(n - 1) {
        bm.epsilon_recursion(prev.eps_at_last_sample, rho, k)
    } else {
        return prev.advance(bm, rho, k, n);
    };
    RiskTracker {
        diameter: prev.diameter,
        last_sampled: Some(n),
        eps_at_last_sample: value,
        current: value,
    }
}

/// Test loss and, for classification losses, the AUC of `x'w` on held-out
/// draws.
pub(crate) fn evaluate(loss: &Loss, w: &[f64], test: &[Sample]) -> Result<(f64, Option<f64>)> {
    if test.is_empty() {
        return Ok((f64::NAN, None));
    }
    let tl = test_loss(loss, w, test)?;
    let auc = match loss {
        Loss::SmoothedHinge(_) => {
            let scores: Vec<(f64, bool)> = test.iter().map(|z| (dot(&z.x, w), z.y > 0.0)).collect();
            match roc_auc(&scores) {
                Ok(a) => Some(a),
                Err(Error::SingleClass) => None,
                Err(e) => return Err(e),
            }
        }
        Loss::Quadratic(_) => None,
    };
    Ok((tl, auc))
}

pub(crate) fn check_decision(
    policy: &dyn SamplePolicy,
    ctx: &StepContext<'_>,
    k: u64,
) -> Result<()> {
    let (min, max) = policy.k_range(ctx);
    if k < min || k > max {
        return Err(Error::PolicyBounds {
            policy: policy.name().to_string(),
            step: ctx.n,
            k,
            min,
            max,
        });
    }
    Ok(())
}

/// Simulates `n = 1..T` under `policy`. All draws are addressed by `seed`.
pub fn run_sequence(setup: &RunSetup, policy: &mut dyn SamplePolicy, seed: u64) -> Result<RunRecord> {
    let seq = &setup.sequence;
    let d = seq.dim();
    if setup.loss.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: setup.loss.dim() });
    }
    let diameter = seq.diameter();
    let bm = &setup.bound;
    let m = bm.m();
    let mut w = match &setup.w_init {
        Some(w0) if w0.len() != d => return Err(Error::DimensionMismatch { expected: d, got: w0.len() }),
        Some(w0) => crate::domain::project_to_domain(w0, seq.domain_radius)?,
        None => vec![0.0; d],
    };
    let mut drift = DriftState::new(setup.drift);
    let mut tracker = RiskTracker::new(diameter);
    let mut k_history: Vec<u64> = Vec::with_capacity(seq.horizon);
    let mut prev_samples: Vec<Sample> = Vec::new();
    let mut spent = 0.0;
    let mut steps = Vec::with_capacity(seq.horizon);

    for n in 1..=seq.horizon {
        let rho_upper = drift
            .snapshot(&bm.constants)
            .map(|s| s.upper(setup.drift.use_dn).min(diameter));
        let ctx = StepContext {
            n,
            horizon: seq.horizon,
            k_history: &k_history,
            rho_upper,
            eps_target: setup.eps_target,
            bound: bm,
            diameter,
            tracker,
            spent,
        };
        let decision = policy.decide(&ctx)?;
        check_decision(policy, &ctx, decision.k)?;
        let k = decision.k;

        let samples = seq.source.draw(seed, Stream::Train, n, k as usize)?;
        let w_prev = std::mem::take(&mut w);
        w = optimize(&w_prev, &samples, &setup.loss, &setup.sgd, seq.domain_radius)?;

        drift.record_sampled_step(k);
        if n >= 2 {
            let est = one_step_estimate(n, &w, &w_prev, &samples, &prev_samples, &setup.loss, m, diameter)?;
            if let Some(e) = est {
                drift.push(e.rho_tilde);
            }
        }
        let snap = drift.snapshot(&bm.constants);

        let rho_for_bound = setup.rho_known.or(rho_upper).unwrap_or(diameter);
        tracker = reported_bound(&tracker, bm, rho_for_bound, k, n);

        let test = seq.source.draw(seed, Stream::Test, n, setup.test_size)?;
        let (tl, auc) = evaluate(&setup.loss, &w, &test)?;
        let cum_cost = setup.cost.map(|c| {
            spent += c.cost(k);
            spent
        });

        steps.push(StepRecord {
            n,
            k,
            rho_hat: snap.map(|s| s.rho_hat),
            slack: snap.map(|s| s.slack),
            rho_used: rho_upper,
            eps_hat: tracker.current,
            xi: (tracker.current - setup.eps_target).max(0.0),
            excess_exact: seq.source.excess_risk(n, &w),
            test_loss: tl,
            auc,
            cum_cost,
            saturated: decision.saturated,
            w: w.clone(),
        });
        k_history.push(k);
        prev_samples = samples;
    }
    Ok(RunRecord {
        policy: policy.name().to_string(),
        seed,
        steps,
        warnings: Vec::new(),
    })
}
