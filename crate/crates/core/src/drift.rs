//! Estimation of the minimizer drift `rho`.
//!
//! One-step direct estimates combine the iterate gap with sample-average
//! gradient norms. They are merged either by a running average (constant
//! drift) or by averaging a sliding-window statistic (bounded drift). The
//! slack `t_n = c_t / sqrt(n - 1)` turns the combined estimate into an
//! eventual upper bound.
//!
//! Note on the slack: with `t_n^2 (n - 1)` constant, the exponential series
//! in the coverage theorem have constant terms, so the printed summability
//! condition is not met by `c_t / sqrt(n - 1)`, while the accompanying remark
//! endorses exactly that choice. We follow the remark.

use serde::{Deserialize, Serialize};

use crate::domain::{distance, norm, Sample, SampleSource};
use crate::error::{Error, Result};
use crate::losses::Loss;
use crate::rng::Stream;
use crate::sgd::{optimize, SgdConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneStepEstimate {
    pub step: usize,
    pub rho_tilde: f64,
    pub grad_norm: f64,
    pub grad_norm_prev: f64,
    pub iterate_gap: f64,
}

impl OneStepEstimate {
    /// Assembles `rho~ = gap + (|G_i| + |G_{i-1}|) / m`, clipped to `diameter`.
    pub fn from_parts(
        step: usize,
        iterate_gap: f64,
        grad_norm: f64,
        grad_norm_prev: f64,
        m: f64,
        diameter: f64,
    ) -> Self {
        let raw = iterate_gap + (grad_norm + grad_norm_prev) / m;
        Self {
            step,
            rho_tilde: raw.clamp(0.0, diameter),
            grad_norm,
            grad_norm_prev,
            iterate_gap,
        }
    }
}

/// Direct one-step estimate at step `i`. Returns `None` when either step took
/// no samples; such steps produce no estimate.
#[allow(clippy::too_many_arguments)]
pub fn one_step_estimate(
    step: usize,
    w_i: &[f64],
    w_prev: &[f64],
    samples_i: &[Sample],
    samples_prev: &[Sample],
    loss: &Loss,
    m: f64,
    diameter: f64,
) -> Result<Option<OneStepEstimate>> {
    if samples_i.is_empty() || samples_prev.is_empty() {
        return Ok(None);
    }
    let g_i = norm(&loss.mean_gradient(w_i, samples_i)?);
    let g_prev = norm(&loss.mean_gradient(w_prev, samples_prev)?);
    Ok(Some(OneStepEstimate::from_parts(
        step,
        distance(w_i, w_prev),
        g_i,
        g_prev,
        m,
        diameter,
    )))
}

/// `(1/q) sum rho~_i`.
pub fn combine_average(history: &[f64]) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::Empty("drift history"));
    }
    Ok(history.iter().sum::<f64>() / history.len() as f64)
}

/// `h_W(values) = (W + 1) / W * max(values)`, unbiased from above for
/// i.i.d. `Unif[0, rho]` drifts.
pub fn window_estimator_uniform(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("window"));
    }
    let w = values.len() as f64;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((w + 1.0) / w * max)
}

/// Lipschitz coefficients `b_j` of the uniform window statistic. Each
/// coordinate may be the maximum, so every `b_j` is `(W + 1) / W`.
pub fn window_lipschitz(window: usize) -> Vec<f64> {
    let w = window as f64;
    vec![(w + 1.0) / w; window]
}

/// Average of sliding-window statistics, with the window truncated at the
/// start of the history.
pub fn combine_windowed(history: &[f64], window: usize) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::Empty("drift history"));
    }
    if window == 0 {
        return Err(Error::param("drift.window", "must be >= 1"));
    }
    let mut total = 0.0;
    for j in 0..history.len() {
        let lo = (j + 1).saturating_sub(window);
        total += window_estimator_uniform(&history[lo..=j])?;
    }
    Ok(total / history.len() as f64)
}

/// `t_n = c_t / sqrt(n - 1)`.
pub fn slack(n: usize, c_t: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::param("n", format!("slack needs n >= 2, got {n}")));
    }
    Ok(c_t / ((n - 1) as f64).sqrt())
}

/// Dispersion bound `C(K) = sqrt(c_C / K)`.
pub fn dispersion(c_c: f64, k: u64) -> f64 {
    if k == 0 {
        f64::INFINITY
    } else {
        (c_c / k as f64).sqrt()
    }
}

/// Correction term `D_n` over the sampled steps `1..n`. `dispersions[i]` is
/// `C_i(K_i)`; entries with `K_i = 0` must already be excluded.
pub fn correction_dn(
    dispersions: &[f64],
    k_history: &[u64],
    constants: &crate::domain::ConvexityConstants,
) -> Result<f64> {
    if dispersions.len() != k_history.len() {
        return Err(Error::Misaligned(format!(
            "{} dispersion terms vs {} sample counts",
            dispersions.len(),
            k_history.len()
        )));
    }
    let n = k_history.len();
    if n < 2 {
        return Err(Error::Empty("D_n needs at least two sampled steps"));
    }
    if k_history.contains(&0) {
        return Err(Error::Misaligned("K_i = 0 entries must be excluded".into()));
    }
    let ratio = 1.0 + constants.big_m / constants.m;
    let term = |i: usize| ratio * dispersions[i] + (constants.sigma / k_history[i] as f64).sqrt();
    let inner: f64 = (1..n - 1).map(term).sum();
    Ok((term(0) + 2.0 * inner + term(n - 1)) / (n - 1) as f64)
}

/// Asymptotic overshoot margin of the averaged estimate:
/// `2 sqrt(2) M / m^{3/2} eps + (2M/m) C(K~) + (1/m) sqrt(sigma / K~)`.
///
/// The `sqrt(2)` comes from the final limsup of the derivation; the headline
/// statement of the result drops it.
pub fn overshoot_bound(
    eps: f64,
    constants: &crate::domain::ConvexityConstants,
    k_tilde: u64,
    c_c: f64,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::param("eps", "must be > 0"));
    }
    if k_tilde == 0 {
        return Err(Error::param("k_tilde", "must be >= 1"));
    }
    let (m, big_m) = (constants.m, constants.big_m);
    let lead = 2.0 * std::f64::consts::SQRT_2 * big_m / m.powf(1.5) * eps;
    let g = 2.0 * big_m / m * dispersion(c_c, k_tilde)
        + (constants.sigma / k_tilde as f64).sqrt() / m;
    Ok(lead + g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftMode {
    ConstantChange,
    BoundedChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    pub mode: DriftMode,
    pub window: usize,
    pub c_t: f64,
    pub c_c: f64,
    pub use_dn: bool,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            mode: DriftMode::ConstantChange,
            window: 4,
            c_t: 1.0,
            c_c: 6.0,
            use_dn: false,
        }
    }
}

impl DriftConfig {
    pub fn validated(self) -> Result<Self> {
        if self.window == 0 {
            return Err(Error::param("drift.window", "must be >= 1"));
        }
        if !(self.c_t >= 0.0) || !self.c_t.is_finite() {
            return Err(Error::param("drift.c_t", "must be finite and >= 0"));
        }
        if !(self.c_c >= 0.0) || !self.c_c.is_finite() {
            return Err(Error::param("drift.c_c", "must be finite and >= 0"));
        }
        Ok(self)
    }
}

/// Running drift state owned by one run.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftState {
    pub config: DriftConfig,
    /// Produced one-step estimates, in step order.
    pub estimates: Vec<f64>,
    /// Sample counts of every sampled step so far (for `D_n`).
    pub sampled_k: Vec<u64>,
}

/// Snapshot of the combined estimate after a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSnapshot {
    pub rho_hat: f64,
    pub slack: f64,
    pub correction: f64,
}

impl DriftSnapshot {
    /// Quantity plugged into the policies in place of `rho`.
    pub fn upper(&self, use_dn: bool) -> f64 {
        self.rho_hat + self.slack + if use_dn { self.correction } else { 0.0 }
    }
}

impl DriftState {
    pub fn new(config: DriftConfig) -> Self {
        Self {
            config,
            estimates: Vec::new(),
            sampled_k: Vec::new(),
        }
    }

    pub fn record_sampled_step(&mut self, k: u64) {
        if k > 0 {
            self.sampled_k.push(k);
        }
    }

    pub fn push(&mut self, estimate: f64) {
        self.estimates.push(estimate);
    }

    pub fn rho_hat(&self) -> Option<f64> {
        if self.estimates.is_empty() {
            return None;
        }
        match self.config.mode {
            DriftMode::ConstantChange => combine_average(&self.estimates).ok(),
            DriftMode::BoundedChange => combine_windowed(&self.estimates, self.config.window).ok(),
        }
    }

    /// Combined estimate, slack and correction; `None` before the first
    /// one-step estimate exists. The slack index counts produced estimates,
    /// which equals `n - 1` when no step was skipped.
    pub fn snapshot(&self, constants: &crate::domain::ConvexityConstants) -> Option<DriftSnapshot> {
        let rho_hat = self.rho_hat()?;
        let q = self.estimates.len();
        let slack = slack(q + 1, self.config.c_t).ok()?;
        let correction = if self.sampled_k.len() >= 2 {
            let c: Vec<f64> = self.sampled_k.iter().map(|&k| dispersion(self.config.c_c, k)).collect();
            let dn = correction_dn(&c, &self.sampled_k, constants).unwrap_or(0.0);
            match self.config.mode {
                DriftMode::ConstantChange => dn,
                DriftMode::BoundedChange => {
                    let n = self.sampled_k.len();
                    let w = self.config.window;
                    let sum_b: f64 = window_lipschitz(w).iter().sum();
                    (n - 1) as f64 / (n.saturating_sub(w).max(1)) as f64 * sum_b * dn
                }
            }
        } else {
            0.0
        };
        Some(DriftSnapshot {
            rho_hat,
            slack,
            correction,
        })
    }
}

/// Estimates `c_C` in `C(K)^2 = c_C / K` by running the optimizer twice
/// from a common start on independent draws: `c_C ~ K * mean ||w - w~||^2`.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_dispersion(
    source: &dyn SampleSource,
    loss: &Loss,
    sgd: &SgdConfig,
    radius: f64,
    step: usize,
    w_start: &[f64],
    k: usize,
    reps: usize,
    seed: u64,
) -> Result<f64> {
    if k == 0 || reps == 0 {
        return Err(Error::param("calibration", "k and reps must be >= 1"));
    }
    let mut acc = 0.0;
    for r in 0..reps {
        let a = source.draw(seed.wrapping_add(2 * r as u64), Stream::Calibration, step, k)?;
        let b = source.draw(seed.wrapping_add(2 * r as u64 + 1), Stream::Calibration, step, k)?;
        let wa = optimize(w_start, &a, loss, sgd, radius)?;
        let wb = optimize(w_start, &b, loss, sgd, radius)?;
        let d = distance(&wa, &wb);
        acc += d * d;
    }
    Ok(k as f64 * acc / reps as f64)
}
