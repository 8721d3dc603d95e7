//! Cost-budgeted sample planning.
//!
//! Sample counts are relaxed to reals, the fixed per-event cost is replaced
//! by the continuous ramp `p_hat`, and the horizon problem is solved by
//! projected gradient descent with backtracking. Under a receding horizon
//! only the first coordinate of each plan is committed.
//!
//! The relaxed tracker mixes the "sampled" and "not sampled" branches of the
//! four-case recursion with weight `s = min(K / K0, 1)`; at integer `K` it
//! reproduces [`RiskTracker`] exactly.

use serde::{Deserialize, Serialize};

use crate::bound::{descent_bound_e, BoundModel, RiskTracker};
use crate::error::{Error, Result};
use crate::policy::{initial_k, Decision, SamplePolicy, StepContext};

/// `p(K) = P0 [K > 0] + P1 K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub p0: f64,
    pub p1: f64,
    /// Breakpoint of the relaxed cost, in `(0, 1)`.
    pub k0: f64,
}

impl CostModel {
    pub fn new(p0: f64, p1: f64, k0: f64) -> Result<Self> {
        if !(p0 >= 0.0) || !p0.is_finite() {
            return Err(Error::param("cost.p0", "must be finite and >= 0"));
        }
        if !(p1 > 0.0) || !p1.is_finite() {
            return Err(Error::param("cost.p1", "must be finite and > 0"));
        }
        if !(k0 > 0.0 && k0 < 1.0) {
            return Err(Error::param("cost.k0", "must lie in (0, 1)"));
        }
        Ok(Self { p0, p1, k0 })
    }

    pub fn cost(&self, k: u64) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.p0 + self.p1 * k as f64
        }
    }

    fn cost_real(&self, k: f64) -> f64 {
        if k > 0.0 {
            self.p0 + self.p1 * k
        } else {
            0.0
        }
    }

    /// Continuous relaxation `p_hat`: linear from 0 to `p(K0)` on `[0, K0]`,
    /// then `p`.
    pub fn relaxed(&self, k: f64) -> f64 {
        if k <= 0.0 {
            0.0
        } else if k <= self.k0 {
            self.cost_real(self.k0) * k / self.k0
        } else {
            self.cost_real(k)
        }
    }

    /// Largest `K` with `p(K) <= budget`; zero when not even one sample fits.
    pub fn max_affordable(&self, budget: f64) -> u64 {
        if budget < self.p0 + self.p1 {
            0
        } else {
            let k = ((budget - self.p0) / self.p1).floor() as u64;
            // guard against round-off in the division
            let mut k = k.max(1);
            while k > 0 && self.cost(k) > budget {
                k -= 1;
            }
            k
        }
    }
}

pub fn total_cost(cm: &CostModel, schedule: &[u64]) -> f64 {
    schedule.iter().map(|&k| cm.cost(k)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhiKind {
    Mean,
    Max,
    MaxIncreasingRun,
}

/// Aggregate of excess-risk gaps. The increasing-run variant is the largest
/// sum over a contiguous non-decreasing stretch of length at least two.
pub fn phi_loss(kind: PhiKind, xi: &[f64]) -> f64 {
    if xi.is_empty() {
        return 0.0;
    }
    match kind {
        PhiKind::Mean => xi.iter().sum::<f64>() / xi.len() as f64,
        PhiKind::Max => xi.iter().copied().fold(0.0, f64::max),
        PhiKind::MaxIncreasingRun => {
            // Gaps are non-negative, so the best stretch inside a maximal
            // non-decreasing run is the whole run.
            let mut best = 0.0f64;
            let mut sum = xi[0];
            let mut len = 1;
            for w in xi.windows(2) {
                if w[1] >= w[0] {
                    sum += w[1];
                    len += 1;
                } else {
                    sum = w[1];
                    len = 1;
                }
                if len >= 2 {
                    best = best.max(sum);
                }
            }
            best
        }
    }
}

/// Gaps `(b_n - eps)_+`.
pub fn excess_gaps(bounds: &[f64], eps: f64) -> Vec<f64> {
    bounds.iter().map(|b| (b - eps).max(0.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub iterations: usize,
    /// Softplus temperature of the smoothed gaps.
    pub temperature: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            temperature: 0.01,
            fd_step: 1e-3,
        }
    }
}

/// Cost-to-go problem over steps `start ..= horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanProblem {
    pub start: usize,
    pub horizon: usize,
    pub budget: f64,
    pub phi: PhiKind,
    /// Drift used for planning (known `rho`, or estimate plus slack).
    pub rho: f64,
    /// Tracker state after step `start - 1`.
    pub tracker: RiskTracker,
    pub eps_target: f64,
    /// Committed `K_1 .. K_{start-1}`.
    pub committed: Vec<u64>,
    /// Gaps of the committed steps as tracked so far. The increasing-run
    /// aggregate continues the trailing non-decreasing stretch of these;
    /// the other aggregates ignore them.
    pub past_gaps: Vec<f64>,
}

impl PlanProblem {
    fn len(&self) -> usize {
        self.horizon + 1 - self.start
    }

    fn validate(&self) -> Result<()> {
        if self.start == 0 || self.start > self.horizon {
            return Err(Error::param("plan window", format!(
                "start {} outside [1, {}]", self.start, self.horizon
            )));
        }
        if !(self.budget >= 0.0) || !self.budget.is_finite() {
            return Err(Error::param("budget", "must be finite and >= 0"));
        }
        if !(self.rho >= 0.0) || !(self.eps_target > 0.0) {
            return Err(Error::param("plan", "rho must be >= 0 and eps > 0"));
        }
        Ok(())
    }

    /// Window gaps prefixed with whatever of the past the aggregate depends on.
    fn with_past(&self, xi: Vec<f64>) -> Vec<f64> {
        if self.phi != PhiKind::MaxIncreasingRun || self.past_gaps.is_empty() {
            return xi;
        }
        let g = &self.past_gaps;
        let mut from = g.len() - 1;
        while from > 0 && g[from - 1] <= g[from] {
            from -= 1;
        }
        g[from..].iter().copied().chain(xi).collect()
    }

    fn committed_k(&self, n: usize) -> f64 {
        n.checked_sub(1)
            .and_then(|i| self.committed.get(i))
            .copied()
            .unwrap_or(0) as f64
    }

    /// Lower bound on `K_start` implied by the committed steps.
    fn start_floor(&self, cm: &CostModel) -> f64 {
        let s = self.start;
        let floor = if s == 2 {
            self.committed_k(1)
        } else if s > 2 {
            self.committed_k(s - 1) - self.committed_k(s - 2)
        } else {
            0.0
        };
        floor.clamp(0.0, cm.max_affordable(self.budget) as f64)
    }

    /// Linear constraints `a'x <= rhs` of the relaxed ordering structure,
    /// restricted to window variables. Committed counts enter as constants,
    /// so the constraint of step `start - 1` becomes a lower bound on
    /// `K_start` (capped at what the budget buys).
    fn constraints(&self, cm: &CostModel) -> Vec<(Vec<(usize, f64)>, f64)> {
        let (s, t) = (self.start, self.horizon);
        let idx = |n: usize| n - s;
        let mut out = Vec::new();
        let floor = self.start_floor(cm);
        if floor > 0.0 {
            out.push((vec![(idx(s), -1.0)], -floor));
        }
        if s == 1 && t >= 2 {
            out.push((vec![(idx(1), 1.0), (idx(2), -1.0)], 0.0));
        }
        for n in s.max(2)..t {
            if n == s {
                out.push((vec![(idx(n), 1.0), (idx(n + 1), -1.0)], self.committed_k(s - 1)));
            } else {
                out.push((vec![(idx(n), 1.0), (idx(n - 1), -1.0), (idx(n + 1), -1.0)], 0.0));
            }
        }
        if t >= 2 && t > s {
            out.push((vec![(idx(t - 1), 1.0), (idx(t), -1.0)], 0.0));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub k: Vec<f64>,
    /// `phi` of the hard gaps under the relaxed tracker.
    pub objective: f64,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, Copy)]
struct RelaxedState {
    never: f64,
    last: f64,
    gap: f64,
}

fn relaxed_bounds(prob: &PlanProblem, bm: &BoundModel, cm: &CostModel, k: &[f64]) -> Vec<f64> {
    let m = bm.m();
    let diam = prob.tracker.diameter;
    let mut st = match prob.tracker.last_sampled {
        None => RelaxedState { never: 1.0, last: 0.0, gap: 0.0 },
        Some(ts) => RelaxedState {
            never: 0.0,
            last: prob.tracker.eps_at_last_sample,
            gap: (prob.start - 1).saturating_sub(ts) as f64,
        },
    };
    let c1 = descent_bound_e(&bm.constants, diam * diam);
    k.iter()
        .map(|&kn| {
            let s = (kn / cm.k0).clamp(0.0, 1.0);
            let kb = kn.max(cm.k0);
            let c2 = bm.eval_real(diam, kb);
            let drift = (st.gap + 1.0) * prob.rho;
            let d3 = (2.0 * st.last / m).sqrt() + drift;
            let c3 = descent_bound_e(&bm.constants, d3 * d3);
            let c4 = bm.eval_real((4.0 / m * st.last + 2.0 * drift * drift).sqrt(), kb);
            let nu = st.never;
            let value = nu * ((1.0 - s) * c1 + s * c2) + (1.0 - nu) * ((1.0 - s) * c3 + s * c4);
            let nu_next = nu * (1.0 - s);
            let have = 1.0 - nu_next;
            if have > 1e-15 {
                st.last = ((1.0 - nu) * ((1.0 - s) * st.last + s * c4) + nu * s * c2) / have;
                st.gap = (1.0 - nu) * (1.0 - s) * (st.gap + 1.0) / have;
            } else {
                st.gap += 1.0;
            }
            st.never = nu_next;
            value
        })
        .collect()
}

/// Relaxed tracker values for a real-valued plan.
pub fn relaxed_tracker_values(
    prob: &PlanProblem,
    bm: &BoundModel,
    cm: &CostModel,
    k: &[f64],
) -> Vec<f64> {
    relaxed_bounds(prob, bm, cm, k)
}

fn softplus(x: f64, tau: f64) -> f64 {
    let z = x / tau;
    if z > 30.0 {
        x
    } else {
        tau * z.exp().ln_1p()
    }
}

struct Objective<'a> {
    prob: &'a PlanProblem,
    bm: &'a BoundModel,
    cm: &'a CostModel,
    tau: f64,
}

impl Objective<'_> {
    fn smooth(&self, k: &[f64]) -> f64 {
        let xi: Vec<f64> = relaxed_bounds(self.prob, self.bm, self.cm, k)
            .into_iter()
            .map(|b| softplus(b - self.prob.eps_target, self.tau))
            .collect();
        phi_loss(self.prob.phi, &self.prob.with_past(xi))
    }

    fn hard(&self, k: &[f64]) -> f64 {
        let b = relaxed_bounds(self.prob, self.bm, self.cm, k);
        phi_loss(self.prob.phi, &self.prob.with_past(excess_gaps(&b, self.prob.eps_target)))
    }
}

/// Makes `x` feasible: non-negative, ordering constraints by cyclic
/// halfspace projections, then a uniform down-scaling onto the budget.
/// Scaling toward zero preserves the ordering constraints; the part of
/// `x[0]` below `floor` is left unscaled so the committed-step bound holds.
fn project(x: &mut [f64], cons: &[(Vec<(usize, f64)>, f64)], cm: &CostModel, budget: f64, floor: f64) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    for _ in 0..10_000 {
        let mut worst = 0.0f64;
        for (a, rhs) in cons {
            let v: f64 = a.iter().map(|&(i, c)| c * x[i]).sum::<f64>() - rhs;
            if v > 0.0 {
                worst = worst.max(v);
                let nn: f64 = a.iter().map(|&(_, c)| c * c).sum();
                for &(i, c) in a {
                    x[i] -= v * c / nn;
                }
            }
        }
        if worst <= 1e-11 {
            break;
        }
    }
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    let scaled = |s: f64, i: usize, v: f64| if i == 0 { (s * v).max(floor.min(v)) } else { s * v };
    let spend = |s: f64, x: &[f64]| x.iter().enumerate().map(|(i, &v)| cm.relaxed(scaled(s, i, v))).sum::<f64>();
    if spend(1.0, x) > budget {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if spend(mid, x) <= budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        x.iter_mut().enumerate().for_each(|(i, v)| *v = scaled(lo, i, *v));
    }
}

fn violation(x: &[f64], cons: &[(Vec<(usize, f64)>, f64)], cm: &CostModel, budget: f64) -> f64 {
    let lin = cons
        .iter()
        .map(|(a, rhs)| a.iter().map(|&(i, c)| c * x[i]).sum::<f64>() - rhs)
        .fold(0.0, f64::max);
    let neg = x.iter().map(|v| -v).fold(0.0, f64::max);
    let spend: f64 = x.iter().map(|&v| cm.relaxed(v)).sum();
    lin.max(neg).max(spend - budget)
}

fn scaled_to_budget(pattern: &[f64], cm: &CostModel, budget: f64) -> Vec<f64> {
    let total: f64 = pattern.iter().sum();
    if total <= 0.0 {
        return vec![0.0; pattern.len()];
    }
    // Start above the budget; projection scales down.
    let scale = budget / cm.p1.max(1e-12) / total;
    pattern.iter().map(|p| p * scale).collect()
}

fn descend(obj: &Objective<'_>, mut x: Vec<f64>, cons: &[(Vec<(usize, f64)>, f64)], solver: &SolverConfig) -> Vec<f64> {
    let (cm, budget) = (obj.cm, obj.prob.budget);
    let floor = obj.prob.start_floor(cm);
    project(&mut x, cons, cm, budget, floor);
    let len = x.len();
    let scale = (budget / cm.p1 / len as f64).max(1.0);
    let mut alpha = 0.25 * scale;
    let mut f = obj.smooth(&x);
    let mut g = vec![0.0; len];
    for _ in 0..solver.iterations {
        for i in 0..len {
            let h = solver.fd_step * x[i].abs().max(1.0);
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] = (xm[i] - h).max(0.0);
            g[i] = (obj.smooth(&xp) - obj.smooth(&xm)) / (xp[i] - xm[i]);
        }
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(gn > 0.0) || !gn.is_finite() {
            break;
        }
        let mut y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - alpha * b / gn).collect();
        project(&mut y, cons, cm, budget, floor);
        let fy = obj.smooth(&y);
        if fy < f - 1e-12 {
            x = y;
            f = fy;
            alpha *= 1.5;
        } else {
            alpha *= 0.5;
            if alpha < 1e-6 * scale {
                break;
            }
        }
    }
    x
}

/// Solves the relaxed horizon problem and returns the best plan found.
///
/// Descents start from a uniform, a front-loaded and paired periodic
/// allocations (on-on-off and on-on-off-off, every phase). The naive schedules (all up front,
/// and one batch every five steps) are projected into the feasible set and
/// kept as candidates, so the result is never worse than either of them.
pub fn plan_relaxed(
    prob: &PlanProblem,
    bm: &BoundModel,
    cm: &CostModel,
    solver: &SolverConfig,
) -> Result<Plan> {
    prob.validate()?;
    let len = prob.len();
    if prob.budget < cm.cost(1) {
        let zeros = vec![0.0; len];
        let obj = Objective { prob, bm, cm, tau: solver.temperature };
        return Ok(Plan {
            objective: obj.hard(&zeros),
            k: zeros,
            diagnostic: Some(format!(
                "budget {:.6} cannot buy a single sample (p(1) = {:.6}); plan is all zero",
                prob.budget,
                cm.cost(1)
            )),
        });
    }
    let cons = prob.constraints(cm);
    let obj = Objective { prob, bm, cm, tau: solver.temperature };

    let mut patterns = vec![vec![1.0; len], (0..len).map(|i| (len - i) as f64).collect()];
    // Paired on/off patterns in every phase: a sampled step needs a sampled
    // neighbour, and a receding horizon needs starts that skip step one.
    for (on, period) in [(2, 3), (2, 4)] {
        for phase in 0..period {
            patterns.push(
                (0..len)
                    .map(|i| if (i + phase) % period < on { 1.0 } else { 0.0 })
                    .collect(),
            );
        }
    }
    let mut candidates = Vec::new();
    for pattern in patterns {
        let x0 = scaled_to_budget(&pattern, cm, prob.budget);
        candidates.push(descend(&obj, x0, &cons, solver));
    }
    for baseline in naive_candidates(prob, cm) {
        let mut x: Vec<f64> = baseline.iter().map(|&k| k as f64).collect();
        project(&mut x, &cons, cm, prob.budget, prob.start_floor(cm));
        candidates.push(x);
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for x in candidates {
        if violation(&x, &cons, cm, prob.budget) > 1e-6 {
            continue;
        }
        let f = obj.hard(&x);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, x));
        }
    }
    let (objective, k) = best.ok_or_else(|| Error::NonFinite("planner found no feasible candidate".into()))?;
    Ok(Plan {
        k,
        objective,
        diagnostic: None,
    })
}

fn naive_candidates(prob: &PlanProblem, cm: &CostModel) -> Vec<Vec<u64>> {
    let len = prob.len();
    let mut out = vec![up_front_for_budget(cm, prob.budget, len)];
    if len >= 5 {
        if let Ok(p) = periodic_for_budget(cm, prob.budget, len, 5) {
            out.push(p);
        }
    }
    out
}

/// Half-up rounding, then decrement the largest entry until `sum p(K) <= budget`.
pub fn round_plan(x: &[f64], cm: &CostModel, budget: f64) -> Vec<u64> {
    let mut k: Vec<u64> = x.iter().map(|&v| (v.max(0.0) + 0.5).floor() as u64).collect();
    while total_cost(cm, &k) > budget {
        let (i, _) = k
            .iter()
            .enumerate()
            .max_by_key(|&(i, &v)| (v, std::cmp::Reverse(i)))
            .expect("non-empty plan");
        if k[i] == 0 {
            break;
        }
        k[i] -= 1;
    }
    k
}

/// One receding-horizon step: plan `[start, T]` and commit the rounded first
/// coordinate, clamped so the spend stays within the remaining budget.
pub fn replan_receding(
    prob: &PlanProblem,
    bm: &BoundModel,
    cm: &CostModel,
    solver: &SolverConfig,
) -> Result<(u64, Plan)> {
    let plan = plan_relaxed(prob, bm, cm, solver)?;
    let mut k = (plan.k[0].max(0.0) + 0.5).floor() as u64;
    if cm.cost(k) > prob.budget {
        k = cm.max_affordable(prob.budget);
    }
    Ok((k, plan))
}

/// All affordable samples at `n = 1`.
pub fn up_front_for_budget(cm: &CostModel, budget: f64, horizon: usize) -> Vec<u64> {
    let mut ks = vec![0u64; horizon];
    if horizon > 0 {
        ks[0] = cm.max_affordable(budget);
    }
    ks
}

/// Sample every `delta_t` steps, splitting the budget evenly over the
/// sampling steps.
pub fn periodic_for_budget(cm: &CostModel, budget: f64, horizon: usize, delta_t: usize) -> Result<Vec<u64>> {
    if delta_t == 0 || delta_t > horizon {
        return Err(Error::param("delta_t", format!("must be in [1, {horizon}]")));
    }
    let events = horizon.div_ceil(delta_t);
    let per = (budget / events as f64).floor();
    let k = cm.max_affordable(per);
    Ok((0..horizon).map(|i| if i % delta_t == 0 { k } else { 0 }).collect())
}

/// Budgeted policy: initial rule for steps 1-2 (within budget), then a
/// receding-horizon re-plan at every step with the current drift estimate.
#[derive(Debug, Clone)]
pub struct CostPlannedPolicy {
    pub cost: CostModel,
    pub budget: f64,
    pub phi: PhiKind,
    pub solver: SolverConfig,
    pub last_plan: Option<Plan>,
    /// Tracked gaps of the steps decided so far.
    pub gaps: Vec<f64>,
}

impl CostPlannedPolicy {
    pub fn new(cost: CostModel, budget: f64, phi: PhiKind, solver: SolverConfig) -> Self {
        Self {
            cost,
            budget,
            phi,
            solver,
            last_plan: None,
            gaps: Vec::new(),
        }
    }

    fn remaining(&self, ctx: &StepContext<'_>) -> f64 {
        (self.budget - ctx.spent).max(0.0)
    }
}

impl SamplePolicy for CostPlannedPolicy {
    fn name(&self) -> &str {
        "cost-planned"
    }

    fn decide(&mut self, ctx: &StepContext<'_>) -> Result<Decision> {
        let remaining = self.remaining(ctx);
        if ctx.n >= 2 {
            self.gaps.truncate(ctx.n - 2);
            self.gaps.push((ctx.tracker.current - ctx.eps_target).max(0.0));
        }
        if ctx.n <= 2 {
            let init = initial_k(ctx.bound, ctx.diameter, ctx.eps_target)?;
            return Ok(Decision {
                k: init.k.min(self.cost.max_affordable(remaining)),
                saturated: init.saturated,
            });
        }
        let prob = PlanProblem {
            start: ctx.n,
            horizon: ctx.horizon,
            budget: remaining,
            phi: self.phi,
            rho: ctx.rho_upper.unwrap_or(ctx.diameter),
            tracker: ctx.tracker,
            eps_target: ctx.eps_target,
            committed: ctx.k_history.to_vec(),
            past_gaps: self.gaps.clone(),
        };
        let (k, plan) = replan_receding(&prob, ctx.bound, &self.cost, &self.solver)?;
        self.last_plan = Some(plan);
        Ok(Decision { k, saturated: false })
    }

    fn k_range(&self, ctx: &StepContext<'_>) -> (u64, u64) {
        (0, self.cost.max_affordable(self.remaining(ctx)))
    }
}
