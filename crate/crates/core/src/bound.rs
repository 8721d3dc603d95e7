//! Excess-risk bound machinery.
//!
//! The optimizer's guarantee is modelled as `b(d0, K) = alpha(K) d0^2 + beta(K)`
//! with `alpha(K) = c_alpha / K^2` and `beta(K) = c_beta / K`. With no samples
//! (`K = 0`) the descent-lemma bound `e(d0^2) = M d0^2 / 2` applies.

use serde::{Deserialize, Serialize};

use crate::domain::ConvexityConstants;
use crate::error::{Error, Result};

pub const DEFAULT_K_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundModel {
    pub c_alpha: f64,
    pub c_beta: f64,
    pub constants: ConvexityConstants,
    pub k_cap: u64,
}

/// Result of inverting the bound for a sample count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inversion {
    pub k: u64,
    /// No `K <= k_cap` reaches the target; `k == k_cap`.
    pub saturated: bool,
}

impl BoundModel {
    pub fn new(c_alpha: f64, c_beta: f64, constants: ConvexityConstants, k_cap: u64) -> Result<Self> {
        if !(c_alpha >= 0.0) || !c_alpha.is_finite() {
            return Err(Error::param("bound.c_alpha", "must be finite and >= 0"));
        }
        if !(c_beta > 0.0) || !c_beta.is_finite() {
            return Err(Error::param("bound.c_beta", "must be finite and > 0"));
        }
        if k_cap == 0 {
            return Err(Error::param("bound.k_cap", "must be >= 1"));
        }
        Ok(Self {
            c_alpha,
            c_beta,
            constants: constants.validated()?,
            k_cap,
        })
    }

    pub fn m(&self) -> f64 {
        self.constants.m
    }

    pub fn alpha(&self, k: f64) -> f64 {
        self.c_alpha / (k * k)
    }

    pub fn beta(&self, k: f64) -> f64 {
        self.c_beta / k
    }

    /// `b(d0, K)`; `K = 0` falls back to `e(d0^2)`.
    pub fn eval(&self, d0: f64, k: u64) -> f64 {
        if k == 0 {
            descent_bound_e(&self.constants, d0 * d0)
        } else {
            self.eval_real(d0, k as f64)
        }
    }

    /// `b(d0, K)` for real `K > 0`, used by the relaxed planner.
    pub fn eval_real(&self, d0: f64, k: f64) -> f64 {
        self.alpha(k) * d0 * d0 + self.beta(k)
    }

    /// Smallest `K` in `[1, k_cap]` with `b(d0, K) <= eps`.
    pub fn invert(&self, d0: f64, eps: f64) -> Result<Inversion> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::param("eps_target", format!("must be > 0, got {eps}")));
        }
        if !(d0 >= 0.0) || !d0.is_finite() {
            return Err(Error::param("d0", format!("must be finite and >= 0, got {d0}")));
        }
        // eps K^2 - c_beta K - c_alpha d0^2 >= 0
        let disc = self.c_beta * self.c_beta + 4.0 * eps * self.c_alpha * d0 * d0;
        let root = (self.c_beta + disc.sqrt()) / (2.0 * eps);
        if !root.is_finite() || root > self.k_cap as f64 + 1.0 {
            return Ok(self.saturated_or_fit(d0, eps));
        }
        let mut k = (root.ceil() as u64).clamp(1, self.k_cap);
        // Round-off guard around the analytic root.
        while k > 1 && self.eval(d0, k - 1) <= eps {
            k -= 1;
        }
        while k < self.k_cap && self.eval(d0, k) > eps {
            k += 1;
        }
        Ok(Inversion {
            k,
            saturated: self.eval(d0, k) > eps,
        })
    }

    fn saturated_or_fit(&self, d0: f64, eps: f64) -> Inversion {
        Inversion {
            k: self.k_cap,
            saturated: self.eval(d0, self.k_cap) > eps,
        }
    }

    /// One step of `eps_n = b(sqrt(2 eps_{n-1} / m) + rho, K_n)`.
    pub fn epsilon_recursion(&self, eps_prev: f64, rho: f64, k: u64) -> f64 {
        self.eval((2.0 * eps_prev.max(0.0) / self.m()).sqrt() + rho, k)
    }
}

/// Descent-lemma bound `e(||w - w*||^2) = M ||w - w*||^2 / 2`.
pub fn descent_bound_e(constants: &ConvexityConstants, dist2: f64) -> f64 {
    0.5 * constants.big_m * dist2
}

/// Four-case recursive excess-risk tracker for schedules that may skip steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskTracker {
    pub diameter: f64,
    /// Last step `t_s` with `K > 0`; `None` means no samples yet.
    pub last_sampled: Option<usize>,
    /// Bound at `t_s`.
    pub eps_at_last_sample: f64,
    /// Bound at the most recent step.
    pub current: f64,
}

impl RiskTracker {
    pub fn new(diameter: f64) -> Self {
        Self {
            diameter,
            last_sampled: None,
            eps_at_last_sample: 0.0,
            current: 0.0,
        }
    }

    /// Advance to step `n` with `k` samples, using `rho` (estimate plus slack)
    /// as the per-step drift.
    pub fn advance(&self, bm: &BoundModel, rho: f64, k: u64, n: usize) -> RiskTracker {
        let m = bm.m();
        let value = match self.last_sampled {
            None if k == 0 => descent_bound_e(&bm.constants, self.diameter * self.diameter),
            None => bm.eval(self.diameter, k),
            Some(ts) => {
                let drift = n.saturating_sub(ts) as f64 * rho;
                if k == 0 {
                    let d = (2.0 * self.eps_at_last_sample / m).sqrt() + drift;
                    descent_bound_e(&bm.constants, d * d)
                } else {
                    let d2 = 4.0 / m * self.eps_at_last_sample + 2.0 * drift * drift;
                    bm.eval(d2.sqrt(), k)
                }
            }
        };
        if k > 0 {
            RiskTracker {
                diameter: self.diameter,
                last_sampled: Some(n),
                eps_at_last_sample: value,
                current: value,
            }
        } else {
            RiskTracker {
                current: value,
                ..*self
            }
        }
    }
}

/// Runs the tracker over a whole schedule starting from step `first`.
pub fn track_schedule(
    start: RiskTracker,
    bm: &BoundModel,
    rho: f64,
    first: usize,
    schedule: &[u64],
) -> Vec<f64> {
    let mut t = start;
    schedule
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            t = t.advance(bm, rho, k, first + i);
            t.current
        })
        .collect()
}
