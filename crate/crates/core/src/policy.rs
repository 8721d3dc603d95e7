//! Sample-size selection rules.
//!
//! Every policy is handed a [`StepContext`] built only from steps `< n`, so a
//! decision at step `n` cannot look at step-`n` data.

use serde::{Deserialize, Serialize};

use crate::bound::{BoundModel, Inversion, RiskTracker};
use crate::error::{Error, Result};

/// Everything a policy may read when choosing `K_n`.
#[derive(Debug, Clone)]
pub struct StepContext<'a> {
    /// Current step (1-based).
    pub n: usize,
    pub horizon: usize,
    /// `K_1 .. K_{n-1}`.
    pub k_history: &'a [u64],
    /// `rho_hat_{n-1} + t_{n-1}` (plus `D_{n-1}` when enabled); `None` until
    /// the first one-step estimate exists.
    pub rho_upper: Option<f64>,
    pub eps_target: f64,
    pub bound: &'a BoundModel,
    pub diameter: f64,
    /// Four-case tracker after step `n - 1`, advanced with the estimates
    /// available at each step.
    pub tracker: RiskTracker,
    /// Cost spent over steps `1 .. n-1` (zero without a cost model).
    pub spent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub k: u64,
    pub saturated: bool,
}

impl From<Inversion> for Decision {
    fn from(i: Inversion) -> Self {
        Decision {
            k: i.k,
            saturated: i.saturated,
        }
    }
}

pub trait SamplePolicy: Send {
    fn name(&self) -> &str;

    fn decide(&mut self, ctx: &StepContext<'_>) -> Result<Decision>;

    /// Declared admissible range of `K_n`; the run loop rejects decisions
    /// outside it.
    fn k_range(&self, ctx: &StepContext<'_>) -> (u64, u64);
}

/// Initial sample count `min{K : b(diam(X), K) <= eps}` for steps 1 and 2.
pub fn initial_k(bm: &BoundModel, diameter: f64, eps: f64) -> Result<Inversion> {
    bm.invert(diameter, eps)
}

/// `K* = min{K >= 1 : b(sqrt(2 eps / m) + rho, K) <= eps}`.
pub fn k_star(bm: &BoundModel, rho: f64, eps: f64) -> Result<Inversion> {
    if !(rho >= 0.0) {
        return Err(Error::param("rho", "must be >= 0"));
    }
    if !(eps > 0.0) {
        return Err(Error::param("eps_target", "must be > 0"));
    }
    bm.invert((2.0 * eps / bm.m()).sqrt() + rho, eps)
}

/// No-update rule: `K*` with `rho_hat_{n-1} + t_{n-1}` in place of `rho`.
pub fn choose_k_no_update(bm: &BoundModel, eps: f64, rho_upper: f64) -> Result<Inversion> {
    k_star(bm, rho_upper.max(0.0), eps)
}

/// Update-past rule. Recomputes the whole bound chain with the current
/// drift estimate, then sizes `K_n` from `max(eps_hat_{n-1}, eps)`.
///
/// `previous` is the chain from the last call (aligned with `k_history`);
/// it is replaced by the returned refreshed chain. Steps 1 and 2 keep their
/// initial bounds `b(diam(X), K_i)`.
pub fn choose_k_update_past(
    previous: &[f64],
    bm: &BoundModel,
    eps: f64,
    rho_upper: f64,
    k_history: &[u64],
    diameter: f64,
) -> Result<(Inversion, Vec<f64>)> {
    if previous.len() != k_history.len() {
        return Err(Error::Misaligned(format!(
            "{} bounds vs {} sample counts",
            previous.len(),
            k_history.len()
        )));
    }
    let refreshed = refresh_chain(bm, rho_upper, k_history, diameter);
    let last = refreshed.last().copied().unwrap_or(eps);
    let d0 = (2.0 / bm.m() * last.max(eps)).sqrt() + rho_upper.max(0.0);
    Ok((bm.invert(d0, eps)?, refreshed))
}

fn refresh_chain(bm: &BoundModel, rho: f64, k_history: &[u64], diameter: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k_history.len());
    for (i, &k) in k_history.iter().enumerate() {
        let v = if i < 2 {
            bm.eval(diameter, k)
        } else {
            bm.epsilon_recursion(out[i - 1], rho, k)
        };
        out.push(v);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    UpFront,
    Periodic,
}

/// Naive schedules with a fixed total: everything at `n = 1`, or equal
/// batches at the steps where `delta_t` divides `n - 1`.
pub fn baseline_schedule(
    kind: BaselineKind,
    total: u64,
    horizon: usize,
    delta_t: usize,
) -> Result<Vec<u64>> {
    if horizon == 0 {
        return Err(Error::param("horizon", "must be >= 1"));
    }
    let mut ks = vec![0u64; horizon];
    match kind {
        BaselineKind::UpFront => ks[0] = total,
        BaselineKind::Periodic => {
            if delta_t == 0 || delta_t > horizon {
                return Err(Error::param(
                    "delta_t",
                    format!("must be in [1, T = {horizon}], got {delta_t}"),
                ));
            }
            let batches = horizon.div_ceil(delta_t) as u64;
            let each = total / batches;
            for n in (0..horizon).step_by(delta_t) {
                ks[n] = each;
            }
        }
    }
    Ok(ks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    KnownRho,
    UpdatePast,
    NoUpdate,
    UpFront,
    Periodic,
    Fixed,
    CostPlanned,
}

/// Policy selection as it appears in an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub eps_target: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_known: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_t: Option<usize>,
    /// Explicit schedule for `kind = "fixed"`; for `up-front` / `periodic`
    /// the first entry is the total.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<u64>>,
    /// Baseline arms run alongside the primary policy with paired seeds.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub baselines: Vec<BaselineKind>,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind, eps_target: f64) -> Self {
        Self {
            kind,
            eps_target,
            rho_known: None,
            delta_t: None,
            schedule: None,
            baselines: Vec::new(),
        }
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.eps_target > 0.0) || !self.eps_target.is_finite() {
            return Err(Error::config("policy.eps_target", "must be finite and > 0"));
        }
        let need = |ok: bool, field: &str, why: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(format!("policy.{field}"), why.to_string()))
            }
        };
        match self.kind {
            PolicyKind::KnownRho => need(
                self.rho_known.is_some_and(|r| r >= 0.0),
                "rho_known",
                "required (>= 0) for kind = known-rho",
            )?,
            PolicyKind::Periodic => need(
                self.delta_t.is_some_and(|d| d > 0),
                "delta_t",
                "required (>= 1) for kind = periodic",
            )?,
            PolicyKind::Fixed => need(
                self.schedule.as_ref().is_some_and(|s| !s.is_empty()),
                "schedule",
                "required for kind = fixed",
            )?,
            _ => {}
        }
        if self.kind != PolicyKind::KnownRho && self.rho_known.is_some() {
            return Err(Error::config("policy.rho_known", "only valid for kind = known-rho"));
        }
        Ok(self)
    }
}

/// `K_n = K*` for a known drift bound; steps 1-2 use the initial rule.
#[derive(Debug, Clone)]
pub struct KnownRhoPolicy {
    pub rho: f64,
}

impl SamplePolicy for KnownRhoPolicy {
    fn name(&self) -> &str {
        "known-rho"
    }

    fn decide(&mut self, ctx: &StepContext<'_>) -> Result<Decision> {
        if ctx.n <= 2 {
            return Ok(initial_k(ctx.bound, ctx.diameter, ctx.eps_target)?.into());
        }
        Ok(k_star(ctx.bound, self.rho, ctx.eps_target)?.into())
    }

    fn k_range(&self, ctx: &StepContext<'_>) -> (u64, u64) {
        (1, ctx.bound.k_cap)
    }
}

/// No-update rule with the estimated drift.
#[derive(Debug, Clone, Default)]
pub struct NoUpdatePolicy;

impl SamplePolicy for NoUpdatePolicy {
    fn name(&self) -> &str {
        "no-update"
    }

    fn decide(&mut self, ctx: &StepContext<'_>) -> Result<Decision> {
        match ctx.rho_upper {
            Some(rho) if ctx.n > 2 => Ok(choose_k_no_update(ctx.bound, ctx.eps_target, rho)?.into()),
            // No estimate yet: fall back to the initial rule.
            _ => Ok(initial_k(ctx.bound, ctx.diameter, ctx.eps_target)?.into()),
        }
    }

    fn k_range(&self, ctx: &StepContext<'_>) -> (u64, u64) {
        (1, ctx.bound.k_cap)
    }
}

/// Update-past rule; keeps the scalar bound chain between steps.
#[derive(Debug, Clone, Default)]
pub struct UpdatePastPolicy {
    chain: Vec<f64>,
}

impl SamplePolicy for UpdatePastPolicy {
    fn name(&self) -> &str {
        "update-past"
    }

    fn decide(&mut self, ctx: &StepContext<'_>) -> Result<Decision> {
        let Some(rho) = ctx.rho_upper.filter(|_| ctx.n > 2) else {
            return Ok(initial_k(ctx.bound, ctx.diameter, ctx.eps_target)?.into());
        };
        // Align the stored chain with the history: entries for steps decided
        // since the last refresh are recomputed anyway.
        self.chain.resize(ctx.k_history.len(), 0.0);
        let (inv, chain) = choose_k_update_past(
            &self.chain,
            ctx.bound,
            ctx.eps_target,
            rho,
            ctx.k_history,
            ctx.diameter,
        )?;
        self.chain = chain;
        Ok(inv.into())
    }

    fn k_range(&self, ctx: &StepContext<'_>) -> (u64, u64) {
        (1, ctx.bound.k_cap)
    }
}

/// Replays a precomputed schedule; zero beyond its end.
#[derive(Debug, Clone)]
pub struct FixedSchedulePolicy {
    pub label: String,
    pub schedule: Vec<u64>,
}

impl FixedSchedulePolicy {
    pub fn new(label: impl Into<String>, schedule: Vec<u64>) -> Self {
        Self {
            label: label.into(),
            schedule,
        }
    }
}

impl SamplePolicy for FixedSchedulePolicy {
    fn name(&self) -> &str {
        &self.label
    }

    fn decide(&mut self, ctx: &StepContext<'_>) -> Result<Decision> {
        Ok(Decision {
            k: self.schedule.get(ctx.n - 1).copied().unwrap_or(0),
            saturated: false,
        })
    }

    fn k_range(&self, _ctx: &StepContext<'_>) -> (u64, u64) {
        (0, self.schedule.iter().copied().max().unwrap_or(0))
    }
}
