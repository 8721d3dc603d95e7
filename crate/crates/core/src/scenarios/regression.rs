use rand_distr::{Distribution, StandardNormal};

use crate::domain::{Sample, SampleSource};
use crate::error::{Error, Result};
use crate::losses::{exact_excess_risk_quadratic, exact_minimizer_quadratic};
use crate::rng::{keyed_rng, Stream};

/// Jointly Gaussian `(x, y)` whose cross-covariance `r_n` rotates in the
/// `e1`-`e2` plane at constant norm. The chord per step is
/// `rho (sigma_x^2 + lambda)`, so consecutive minimizers are exactly `rho`
/// apart.
///
/// `y = x' r_n / sigma_x^2 + noise`, giving
/// `sigma_y^2 = ||r||^2 / sigma_x^2 + noise_var`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDrift {
    pub d: usize,
    pub sigma_x2: f64,
    pub lambda: f64,
    pub r_norm: f64,
    pub rho: f64,
    pub noise_var: f64,
    theta: f64,
}

impl RegressionDrift {
    pub fn new(d: usize, sigma_x2: f64, lambda: f64, r_norm: f64, rho: f64, noise_var: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::param("scenario.d", "rotation needs d >= 2"));
        }
        if !(sigma_x2 > 0.0) || !(lambda >= 0.0) || !(noise_var > 0.0) {
            return Err(Error::InvalidCovariance(
                "need sigma_x2 > 0, lambda >= 0, noise_var > 0".into(),
            ));
        }
        if !(r_norm > 0.0) || !(rho >= 0.0) {
            return Err(Error::param("scenario", "r_norm must be > 0 and rho >= 0"));
        }
        let chord = rho * (sigma_x2 + lambda);
        if chord > 2.0 * r_norm {
            return Err(Error::param(
                "scenario.rho",
                format!("chord {chord} exceeds the diameter 2 * r_norm = {}", 2.0 * r_norm),
            ));
        }
        let theta = 2.0 * (chord / (2.0 * r_norm)).asin();
        Ok(Self {
            d,
            sigma_x2,
            lambda,
            r_norm,
            rho,
            noise_var,
            theta,
        })
    }

    /// Cross-covariance `r_n`.
    pub fn r(&self, step: usize) -> Vec<f64> {
        let phi = self.theta * (step.max(1) - 1) as f64;
        let mut r = vec![0.0; self.d];
        r[0] = self.r_norm * phi.cos();
        r[1] = self.r_norm * phi.sin();
        r
    }

    pub fn sigma_y2(&self) -> f64 {
        self.r_norm * self.r_norm / self.sigma_x2 + self.noise_var
    }

    pub fn angle_step(&self) -> f64 {
        self.theta
    }
}

impl SampleSource for RegressionDrift {
    fn dim(&self) -> usize {
        self.d
    }

    fn draw(&self, seed: u64, stream: Stream, step: usize, count: usize) -> Result<Vec<Sample>> {
        let beta: Vec<f64> = self.r(step).iter().map(|v| v / self.sigma_x2).collect();
        let sx = self.sigma_x2.sqrt();
        let sn = self.noise_var.sqrt();
        Ok((0..count)
            .map(|k| {
                let mut rng = keyed_rng(seed, stream, step as u64, k as u64);
                let x: Vec<f64> = (0..self.d)
                    .map(|_| sx * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                    .collect();
                let e: f64 = StandardNormal.sample(&mut rng);
                let y = crate::domain::dot(&x, &beta) + sn * e;
                Sample::new(x, y)
            })
            .collect())
    }

    fn minimizer(&self, step: usize) -> Option<Vec<f64>> {
        exact_minimizer_quadratic(self.sigma_x2, self.lambda, &self.r(step)).ok()
    }

    fn excess_risk(&self, step: usize, w: &[f64]) -> Option<f64> {
        exact_excess_risk_quadratic(w, self.sigma_x2, self.sigma_y2(), &self.r(step), self.lambda).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::distance;

    #[test]
    fn consecutive_minimizers_are_rho_apart() {
        let s = RegressionDrift::new(3, 1.0, 0.0, 2.0, 1.0, 1.0).unwrap();
        for n in 2..=25 {
            let d = distance(&s.minimizer(n).unwrap(), &s.minimizer(n - 1).unwrap());
            assert!((d - 1.0).abs() < 1e-12, "step {n}: {d}");
        }
        let s = RegressionDrift::new(3, 2.0, 0.5, 3.0, 0.4, 1.0).unwrap();
        for n in 2..=10 {
            let d = distance(&s.minimizer(n).unwrap(), &s.minimizer(n - 1).unwrap());
            assert!((d - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_drift_is_stationary() {
        let s = RegressionDrift::new(3, 1.0, 0.0, 2.0, 0.0, 1.0).unwrap();
        assert_eq!(s.minimizer(1), s.minimizer(17));
    }

    #[test]
    fn infeasible_rotation_rejected() {
        assert!(RegressionDrift::new(3, 1.0, 0.0, 0.4, 1.0, 1.0).is_err());
        assert!(RegressionDrift::new(1, 1.0, 0.0, 2.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn draws_are_addressed() {
        let s = RegressionDrift::new(3, 1.0, 0.0, 2.0, 1.0, 1.0).unwrap();
        let a = s.draw(5, Stream::Train, 3, 10).unwrap();
        let b = s.draw(5, Stream::Train, 3, 4).unwrap();
        assert_eq!(&a[..4], &b[..]);
        let c = s.draw(5, Stream::Test, 3, 4).unwrap();
        assert_ne!(&a[..4], &c[..]);
    }

    #[test]
    fn excess_risk_zero_at_minimizer() {
        let s = RegressionDrift::new(3, 1.0, 0.0, 2.0, 1.0, 1.0).unwrap();
        let w = s.minimizer(4).unwrap();
        assert!(s.excess_risk(4, &w).unwrap() < 1e-15);
        let mut v = w.clone();
        v[2] += 1.0;
        assert!((s.excess_risk(4, &v).unwrap() - 0.5).abs() < 1e-12);
    }
}
