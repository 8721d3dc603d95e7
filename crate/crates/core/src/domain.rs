//! Shared domain types: samples, convexity constants, the Euclidean-ball
//! domain and the per-step problem sequence.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// One observation `z = (x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean projection onto the centered ball of the given radius.
pub fn project_to_domain(w: &[f64], radius: f64) -> Result<Vec<f64>> {
    let mut out = w.to_vec();
    project_in_place(&mut out, radius)?;
    Ok(out)
}

pub(crate) fn project_in_place(w: &mut [f64], radius: f64) -> Result<()> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::param("radius", format!("must be positive, got {radius}")));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("iterate has non-finite components".into()));
    }
    let n = norm(w);
    if n > radius {
        let s = radius / n;
        w.iter_mut().for_each(|v| *v *= s);
    }
    Ok(())
}

/// Strong convexity, smoothness and noise constants of a loss model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityConstants {
    /// Strong-convexity modulus `m`.
    pub m: f64,
    /// Gradient Lipschitz modulus `M`.
    #[serde(rename = "M")]
    pub big_m: f64,
    /// Bound on stochastic gradient norms.
    #[serde(default)]
    pub g: f64,
    /// Growth constants: `E||g(w)||^2 <= A + B ||w - w*||^2`.
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    /// Gradient-noise level; enters correction terms as `sqrt(sigma / K)`.
    #[serde(default)]
    pub sigma: f64,
    /// Lipschitz constant of stochastic gradients.
    #[serde(default)]
    pub m_noise: f64,
}

impl ConvexityConstants {
    pub fn new(m: f64, big_m: f64) -> Result<Self> {
        Self {
            m,
            big_m,
            g: 0.0,
            a: 0.0,
            b: 0.0,
            sigma: 0.0,
            m_noise: 0.0,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        let all = [self.m, self.big_m, self.g, self.a, self.b, self.sigma, self.m_noise];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("constants", "all fields must be finite"));
        }
        if !(self.m > 0.0) {
            return Err(Error::param("constants.m", format!("must be > 0, got {}", self.m)));
        }
        if self.big_m < self.m {
            return Err(Error::param(
                "constants.M",
                format!("M = {} must be >= m = {}", self.big_m, self.m),
            ));
        }
        if [self.g, self.a, self.b, self.sigma, self.m_noise].iter().any(|v| *v < 0.0) {
            return Err(Error::param("constants", "G, A, B, sigma, Mnoise must be >= 0"));
        }
        Ok(self)
    }
}

/// A source of i.i.d. draws for each step of a drifting problem.
///
/// Draws must be pure functions of `(seed, stream, step, index)`.
pub trait SampleSource: Send + Sync + fmt::Debug {
    /// Feature dimension `d`.
    fn dim(&self) -> usize;

    /// Draw `count` samples for `step` (1-based).
    fn draw(&self, seed: u64, stream: Stream, step: usize, count: usize) -> Result<Vec<Sample>>;

    /// Ground-truth minimizer `w_n*`, when known.
    fn minimizer(&self, _step: usize) -> Option<Vec<f64>> {
        None
    }

    /// Exact excess risk `f_n(w) - f_n(w_n*)`, when computable.
    fn excess_risk(&self, _step: usize, _w: &[f64]) -> Option<f64> {
        None
    }

    /// Maximum number of training draws available at `step` (finite pools).
    fn capacity(&self, _step: usize) -> Option<usize> {
        None
    }
}

/// The sequence of problems `f_1, ..., f_T` over a centered ball.
#[derive(Debug, Clone)]
pub struct ProblemSequence {
    pub domain_radius: f64,
    pub horizon: usize,
    pub source: Arc<dyn SampleSource>,
}

impl ProblemSequence {
    pub fn new(source: Arc<dyn SampleSource>, domain_radius: f64, horizon: usize) -> Result<Self> {
        if !(domain_radius > 0.0) || !domain_radius.is_finite() {
            return Err(Error::param("domain_radius", "must be finite and > 0"));
        }
        if horizon == 0 {
            return Err(Error::param("horizon", "must be >= 1"));
        }
        Ok(Self {
            domain_radius,
            horizon,
            source,
        })
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    /// `diam(X) = 2 * radius`.
    pub fn diameter(&self) -> f64 {
        2.0 * self.domain_radius
    }
}
