//! Projected SGD, one pass with one iteration per sample, warm-started at
//! the previous iterate.

use serde::{Deserialize, Serialize};

use crate::domain::{project_in_place, Sample};
use crate::error::{Error, Result};
use crate::losses::Loss;

/// Step sizes `eta_k = c / (k + k0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub c: f64,
    pub k0: f64,
}

impl SgdConfig {
    pub fn new(c: f64, k0: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::param("sgd.c", "must be finite and > 0"));
        }
        if !(k0 >= 0.0) || !k0.is_finite() {
            return Err(Error::param("sgd.k0", "must be finite and >= 0"));
        }
        Ok(Self { c, k0 })
    }

    /// Default schedule for a strongly convex risk with modulus `m`: `c = 1/m`, `k0 = 1`.
    pub fn for_modulus(m: f64) -> Result<Self> {
        Self::new(1.0 / m, 1.0)
    }

    pub fn step_size(&self, k: usize) -> f64 {
        self.c / (k as f64 + self.k0)
    }
}

/// `w <- P_X(w - eta_k grad l(w, z(k)))` for `k = 1..K`.
pub fn optimize(
    w_start: &[f64],
    samples: &[Sample],
    loss: &Loss,
    cfg: &SgdConfig,
    radius: f64,
) -> Result<Vec<f64>> {
    let mut w = w_start.to_vec();
    let mut g = vec![0.0; w.len()];
    for (i, z) in samples.iter().enumerate() {
        let k = i + 1;
        loss.gradient_into(&w, z, &mut g)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { step: k });
        }
        let eta = cfg.step_size(k);
        w.iter_mut().zip(&g).for_each(|(wi, gi)| *wi -= eta * gi);
        project_in_place(&mut w, radius).map_err(|_| Error::NonFiniteGradient { step: k })?;
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::QuadraticRegressionLoss;

    fn quad1() -> Loss {
        Loss::Quadratic(QuadraticRegressionLoss::new(0.0, 1.0, 1).unwrap())
    }

    #[test]
    fn no_samples_no_movement() {
        let w = optimize(&[0.25], &[], &quad1(), &SgdConfig::new(1.0, 1.0).unwrap(), 5.0).unwrap();
        assert_eq!(w, vec![0.25]);
    }

    #[test]
    fn one_exact_step() {
        // eta_1 = c / (1 + k0) = 1 with c = 1, k0 = 0.
        let cfg = SgdConfig::new(1.0, 0.0).unwrap();
        let w = optimize(&[0.0], &[Sample::new(vec![1.0], 1.0)], &quad1(), &cfg, 5.0).unwrap();
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn output_stays_in_domain() {
        let cfg = SgdConfig::new(10.0, 0.0).unwrap();
        let samples: Vec<Sample> = (0..50).map(|i| Sample::new(vec![3.0], 100.0 * i as f64)).collect();
        let w = optimize(&[0.0], &samples, &quad1(), &cfg, 2.0).unwrap();
        assert!(w[0].abs() <= 2.0 + 1e-12);
    }

    #[test]
    fn nan_sample_is_reported_with_step() {
        let cfg = SgdConfig::new(1.0, 1.0).unwrap();
        let samples = vec![Sample::new(vec![1.0], 1.0), Sample::new(vec![f64::NAN], 1.0)];
        assert_eq!(
            optimize(&[0.0], &samples, &quad1(), &cfg, 5.0),
            Err(Error::NonFiniteGradient { step: 2 })
        );
    }

    #[test]
    fn bad_schedule_rejected() {
        assert!(SgdConfig::new(0.0, 1.0).is_err());
        assert!(SgdConfig::new(1.0, -1.0).is_err());
    }
}
