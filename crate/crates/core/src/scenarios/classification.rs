use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::domain::{dot, Sample, SampleSource};
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, Stream};

/// `E[(U)_+^2]` for `U ~ N(mean, sd^2)`.
pub fn gaussian_plus_sq_mean(mean: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return mean.max(0.0).powi(2);
    }
    let std = Normal::standard();
    let z = mean / sd;
    (mean * mean + sd * sd) * std.cdf(z) + mean * sd * std.pdf(z)
}

/// Two equiprobable classes `y = +1 / -1` with features
/// `x ~ N(y mu_n, sigma^2 I)`. The unit mean `mu_n` turns by `theta` per step
/// in the `e1`-`e2` plane.
///
/// Since `y x ~ N(mu_n, sigma^2 I)` for either label, the smoothed-hinge risk
/// only depends on the law of `y x'w ~ N(mu_n'w, sigma^2 ||w||^2)` and has a
/// closed form. The minimizer lies along `mu_n`, so consecutive minimizers
/// are `2 a sin(theta / 2)` apart with `a = ||w*||`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationDrift {
    pub d: usize,
    pub sigma2: f64,
    pub lambda: f64,
    pub theta: f64,
    minimizer_norm: f64,
}

impl ClassificationDrift {
    /// Angular step given directly.
    pub fn with_theta(d: usize, sigma2: f64, lambda: f64, theta: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::param("scenario.d", "rotation needs d >= 2"));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::param("scenario.sigma2", "must be finite and > 0"));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::param("scenario.lambda", "must be finite and > 0"));
        }
        if !theta.is_finite() {
            return Err(Error::param("scenario.theta", "must be finite"));
        }
        let minimizer_norm = optimal_scale(sigma2, lambda);
        Ok(Self {
            d,
            sigma2,
            lambda,
            theta,
            minimizer_norm,
        })
    }

    /// Angular step chosen so that consecutive minimizers are `rho` apart.
    pub fn with_rho(d: usize, sigma2: f64, lambda: f64, rho: f64) -> Result<Self> {
        let base = Self::with_theta(d, sigma2, lambda, 0.0)?;
        let a = base.minimizer_norm;
        if !(rho >= 0.0) || rho > 2.0 * a {
            return Err(Error::param(
                "scenario.rho",
                format!("must lie in [0, {}] for this law", 2.0 * a),
            ));
        }
        Ok(Self {
            theta: 2.0 * (rho / (2.0 * a)).asin(),
            ..base
        })
    }

    pub fn mean(&self, step: usize) -> Vec<f64> {
        let phi = self.theta * (step.max(1) - 1) as f64;
        let mut mu = vec![0.0; self.d];
        mu[0] = phi.cos();
        mu[1] = phi.sin();
        mu
    }

    pub fn minimizer_norm(&self) -> f64 {
        self.minimizer_norm
    }

    /// Drift between consecutive minimizers.
    pub fn rho(&self) -> f64 {
        2.0 * self.minimizer_norm * (self.theta / 2.0).sin().abs()
    }

    /// Closed-form risk `E[l(w, z)]` at `step`.
    pub fn risk(&self, step: usize, w: &[f64]) -> f64 {
        let mu = self.mean(step);
        let ww = dot(w, w);
        0.5 * gaussian_plus_sq_mean(1.0 - dot(&mu, w), (self.sigma2 * ww).sqrt()) + 0.5 * self.lambda * ww
    }
}

fn scale_risk(a: f64, sigma2: f64, lambda: f64) -> f64 {
    0.5 * gaussian_plus_sq_mean(1.0 - a, a * sigma2.sqrt()) + 0.5 * lambda * a * a
}

/// `argmin_a E[1/2 (1 - a s)_+^2] + lambda a^2 / 2` with `s ~ N(1, sigma^2)`
/// by golden-section search (the objective is convex in `a`).
fn optimal_scale(sigma2: f64, lambda: f64) -> f64 {
    // The minimizer satisfies a <= 1 / lambda.
    let (mut lo, mut hi) = (0.0f64, 1.0 / lambda + 1.0);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if scale_risk(a, sigma2, lambda) < scale_risk(b, sigma2, lambda) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

impl SampleSource for ClassificationDrift {
    fn dim(&self) -> usize {
        self.d
    }

    fn draw(&self, seed: u64, stream: Stream, step: usize, count: usize) -> Result<Vec<Sample>> {
        let mu = self.mean(step);
        let sd = self.sigma2.sqrt();
        Ok((0..count)
            .map(|k| {
                let mut rng = keyed_rng(seed, stream, step as u64, k as u64);
                let y = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let x = mu
                    .iter()
                    .map(|m| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        y * m + sd * e
                    })
                    .collect();
                Sample::new(x, y)
            })
            .collect())
    }

    fn minimizer(&self, step: usize) -> Option<Vec<f64>> {
        Some(self.mean(step).iter().map(|m| m * self.minimizer_norm).collect())
    }

    fn excess_risk(&self, step: usize, w: &[f64]) -> Option<f64> {
        let w_star = self.minimizer(step)?;
        Some((self.risk(step, w) - self.risk(step, &w_star)).max(0.0))
    }
}
