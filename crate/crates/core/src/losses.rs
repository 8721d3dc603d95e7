//! Penalized quadratic regression and smoothed-hinge classification losses.

use serde::{Deserialize, Serialize};

use crate::domain::{dot, Sample};
use crate::error::{Error, Result};

/// `l(w, z) = 1/2 (y - x'w)^2 + 1/2 lambda ||w||^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticRegressionLoss {
    pub lambda: f64,
    /// Feature variance of the data law; only used for the convexity modulus.
    pub sigma_x2: f64,
    pub d: usize,
}

/// `l(w, z) = 1/2 (1 - y x'w)_+^2 + 1/2 lambda ||w||^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedHingeLoss {
    pub lambda: f64,
    pub d: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Loss {
    Quadratic(QuadraticRegressionLoss),
    SmoothedHinge(SmoothedHingeLoss),
}

impl QuadraticRegressionLoss {
    pub fn new(lambda: f64, sigma_x2: f64, d: usize) -> Result<Self> {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(Error::param("lambda", "must be finite and >= 0"));
        }
        if !(sigma_x2 > 0.0) {
            return Err(Error::param("sigma_x2", "must be > 0"));
        }
        if d == 0 {
            return Err(Error::param("d", "must be >= 1"));
        }
        Ok(Self { lambda, sigma_x2, d })
    }

    /// Strong-convexity modulus of the risk, `sigma_x^2 + lambda`.
    pub fn modulus(&self) -> f64 {
        self.sigma_x2 + self.lambda
    }
}

impl SmoothedHingeLoss {
    pub fn new(lambda: f64, d: usize) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::param("lambda", "smoothed hinge needs lambda > 0"));
        }
        if d == 0 {
            return Err(Error::param("d", "must be >= 1"));
        }
        Ok(Self { lambda, d })
    }
}

impl Loss {
    pub fn dim(&self) -> usize {
        match self {
            Loss::Quadratic(q) => q.d,
            Loss::SmoothedHinge(h) => h.d,
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            Loss::Quadratic(q) => q.lambda,
            Loss::SmoothedHinge(h) => h.lambda,
        }
    }

    /// Same model with a different ridge weight.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        match *self {
            Loss::Quadratic(q) => Loss::Quadratic(QuadraticRegressionLoss { lambda, ..q }),
            Loss::SmoothedHinge(h) => Loss::SmoothedHinge(SmoothedHingeLoss { lambda, ..h }),
        }
    }

    fn check(&self, w: &[f64], z: &Sample) -> Result<()> {
        let d = self.dim();
        if w.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: w.len() });
        }
        if z.x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: z.x.len() });
        }
        Ok(())
    }

    pub fn value(&self, w: &[f64], z: &Sample) -> Result<f64> {
        self.check(w, z)?;
        let ridge = 0.5 * self.lambda() * dot(w, w);
        let v = match self {
            Loss::Quadratic(_) => {
                let r = z.y - dot(&z.x, w);
                0.5 * r * r
            }
            Loss::SmoothedHinge(_) => {
                let s = (1.0 - z.y * dot(&z.x, w)).max(0.0);
                0.5 * s * s
            }
        };
        Ok(v + ridge)
    }

    pub fn gradient(&self, w: &[f64], z: &Sample) -> Result<Vec<f64>> {
        let mut g = vec![0.0; w.len()];
        self.gradient_into(w, z, &mut g)?;
        Ok(g)
    }

    /// Writes `grad_w l(w, z)` into `out`.
    pub fn gradient_into(&self, w: &[f64], z: &Sample, out: &mut [f64]) -> Result<()> {
        self.check(w, z)?;
        if out.len() != w.len() {
            return Err(Error::DimensionMismatch { expected: w.len(), got: out.len() });
        }
        let lambda = self.lambda();
        let coef = match self {
            Loss::Quadratic(_) => dot(&z.x, w) - z.y,
            Loss::SmoothedHinge(_) => -z.y * (1.0 - z.y * dot(&z.x, w)).max(0.0),
        };
        for ((o, xi), wi) in out.iter_mut().zip(&z.x).zip(w) {
            *o = coef * xi + lambda * wi;
        }
        Ok(())
    }

    /// Sample-average gradient `(1/K) sum_k grad l(w, z(k))`.
    pub fn mean_gradient(&self, w: &[f64], samples: &[Sample]) -> Result<Vec<f64>> {
        if samples.is_empty() {
            return Err(Error::Empty("samples"));
        }
        let mut acc = vec![0.0; w.len()];
        let mut g = vec![0.0; w.len()];
        for z in samples {
            self.gradient_into(w, z, &mut g)?;
            acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        let k = samples.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        Ok(acc)
    }

    /// Sample-average loss.
    pub fn mean_loss(&self, w: &[f64], samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Empty("samples"));
        }
        let mut s = 0.0;
        for z in samples {
            s += self.value(w, z)?;
        }
        Ok(s / samples.len() as f64)
    }
}

/// `w* = r_xy / (sigma_x^2 + lambda)`.
pub fn exact_minimizer_quadratic(sigma_x2: f64, lambda: f64, r_xy: &[f64]) -> Result<Vec<f64>> {
    let denom = sigma_x2 + lambda;
    if !(denom > 0.0) {
        return Err(Error::param("sigma_x2 + lambda", "must be > 0"));
    }
    Ok(r_xy.iter().map(|r| r / denom).collect())
}

/// Closed-form risk `f(w) = 1/2 (sigma_x^2 ||w||^2 - 2 r'w + sigma_y^2) + 1/2 lambda ||w||^2`
/// for `z ~ N(0, [[sigma_x^2 I, r], [r', sigma_y^2]])`.
pub fn exact_risk_quadratic(
    w: &[f64],
    sigma_x2: f64,
    sigma_y2: f64,
    r_xy: &[f64],
    lambda: f64,
) -> Result<f64> {
    check_covariance(sigma_x2, sigma_y2, r_xy)?;
    if w.len() != r_xy.len() {
        return Err(Error::DimensionMismatch { expected: r_xy.len(), got: w.len() });
    }
    let ww = dot(w, w);
    Ok(0.5 * (sigma_x2 * ww - 2.0 * dot(r_xy, w) + sigma_y2) + 0.5 * lambda * ww)
}

/// `f(w) - f(w*)` for the Gaussian regression law; equals
/// `1/2 (sigma_x^2 + lambda) ||w - w*||^2`.
pub fn exact_excess_risk_quadratic(
    w: &[f64],
    sigma_x2: f64,
    sigma_y2: f64,
    r_xy: &[f64],
    lambda: f64,
) -> Result<f64> {
    let w_star = exact_minimizer_quadratic(sigma_x2, lambda, r_xy)?;
    let f = exact_risk_quadratic(w, sigma_x2, sigma_y2, r_xy, lambda)?;
    let f_star = exact_risk_quadratic(&w_star, sigma_x2, sigma_y2, r_xy, lambda)?;
    Ok((f - f_star).max(0.0))
}

pub(crate) fn check_covariance(sigma_x2: f64, sigma_y2: f64, r_xy: &[f64]) -> Result<()> {
    if !(sigma_x2 > 0.0) {
        return Err(Error::InvalidCovariance(format!("sigma_x^2 = {sigma_x2} must be > 0")));
    }
    let need = dot(r_xy, r_xy) / sigma_x2;
    // relative slack for round-off in ||r||^2
    if sigma_y2 < need * (1.0 - 1e-12) {
        return Err(Error::InvalidCovariance(format!(
            "sigma_y^2 = {sigma_y2} < ||r||^2 / sigma_x^2 = {need}"
        )));
    }
    Ok(())
}

/// Monte-Carlo risk estimate with its standard error.
pub fn monte_carlo_risk(loss: &Loss, w: &[f64], samples: &[Sample]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let n = samples.len() as f64;
    let mut s = 0.0;
    let mut s2 = 0.0;
    for z in samples {
        let v = loss.value(w, z)?;
        s += v;
        s2 += v * v;
    }
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Minimizer of the empirical risk over a fixed sample by projected gradient
/// descent with backtracking. Stands in for `w*` when no closed form exists.
pub fn empirical_minimizer(
    loss: &Loss,
    samples: &[Sample],
    radius: f64,
    iterations: usize,
) -> Result<Vec<f64>> {
    let mut w = vec![0.0; loss.dim()];
    let mut f = loss.mean_loss(&w, samples)?;
    let mut step = 1.0;
    for _ in 0..iterations {
        let g = loss.mean_gradient(&w, samples)?;
        let gn = dot(&g, &g);
        if gn < 1e-24 {
            break;
        }
        loop {
            let mut cand: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            crate::domain::project_in_place(&mut cand, radius)?;
            let fc = loss.mean_loss(&cand, samples)?;
            if fc <= f - 1e-4 * step * gn || step < 1e-12 {
                w = cand;
                f = fc;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(lambda: f64, d: usize) -> Loss {
        Loss::Quadratic(QuadraticRegressionLoss::new(lambda, 1.0, d).unwrap())
    }

    fn hinge(lambda: f64, d: usize) -> Loss {
        Loss::SmoothedHinge(SmoothedHingeLoss::new(lambda, d).unwrap())
    }

    #[test]
    fn value_examples() {
        let z = Sample::new(vec![0.7, -1.1], 1.5);
        assert_eq!(quad(0.0, 2).value(&[0.0, 0.0], &z).unwrap(), 0.5 * 1.5 * 1.5);
        let l = Loss::SmoothedHinge(SmoothedHingeLoss { lambda: 0.0, d: 2 });
        let z = Sample::new(vec![1.0, 1.0], 1.0);
        assert_eq!(l.value(&[1.0, 0.5], &z).unwrap(), 0.0);
        let v = quad(1.0, 1).value(&[1.0], &Sample::new(vec![2.0], 3.0)).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_examples() {
        let g = quad(0.0, 2).gradient(&[0.0, 0.0], &Sample::new(vec![1.0, 0.0], 2.0)).unwrap();
        assert_eq!(g, vec![-2.0, 0.0]);
        let l = Loss::SmoothedHinge(SmoothedHingeLoss { lambda: 0.0, d: 2 });
        let g = l.gradient(&[2.0, 0.0], &Sample::new(vec![1.0, 3.0], 1.0)).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let z = Sample::new(vec![1.0, 2.0, 3.0], 0.0);
        assert!(matches!(
            quad(0.0, 2).value(&[0.0, 0.0], &z),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
        assert!(hinge(0.1, 2).gradient(&[0.0], &Sample::new(vec![1.0, 2.0], 1.0)).is_err());
    }

    #[test]
    fn minimizer_examples() {
        assert_eq!(
            exact_minimizer_quadratic(1.0, 0.0, &[0.3, 0.4, 0.0]).unwrap(),
            vec![0.3, 0.4, 0.0]
        );
        assert_eq!(exact_minimizer_quadratic(1.0, 0.0, &[0.0; 3]).unwrap(), vec![0.0; 3]);
        assert_eq!(
            exact_minimizer_quadratic(2.0, 0.0, &[1.0, 0.0, 0.0]).unwrap(),
            vec![0.5, 0.0, 0.0]
        );
        assert!(exact_minimizer_quadratic(0.0, 0.0, &[1.0]).is_err());
    }

    #[test]
    fn minimizer_matches_numerical_minimization() {
        // Oracle: coordinate-wise golden-section search on the closed-form risk.
        for (sx2, r) in [(1.0, [0.3, 0.4, 0.0]), (2.0, [1.0, 0.0, 0.0])] {
            let sy2 = dot(&r, &r) / sx2 + 1.0;
            let mut w = [0.0f64; 3];
            for _ in 0..5 {
                for i in 0..3 {
                    let (mut lo, mut hi) = (-10.0f64, 10.0f64);
                    for _ in 0..200 {
                        let a = lo + (hi - lo) * 0.382;
                        let b = lo + (hi - lo) * 0.618;
                        let mut wa = w;
                        wa[i] = a;
                        let mut wb = w;
                        wb[i] = b;
                        let fa = exact_risk_quadratic(&wa, sx2, sy2, &r, 0.0).unwrap();
                        let fb = exact_risk_quadratic(&wb, sx2, sy2, &r, 0.0).unwrap();
                        if fa < fb {
                            hi = b;
                        } else {
                            lo = a;
                        }
                    }
                    w[i] = 0.5 * (lo + hi);
                }
            }
            let exact = exact_minimizer_quadratic(sx2, 0.0, &r).unwrap();
            // value comparisons resolve the argmin to ~sqrt(machine eps)
            for (a, b) in w.iter().zip(&exact) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn risk_examples() {
        let r = [0.5, -0.2];
        let sy2 = 2.0;
        let w_star = exact_minimizer_quadratic(1.0, 0.0, &r).unwrap();
        assert!(exact_excess_risk_quadratic(&w_star, 1.0, sy2, &r, 0.0).unwrap() < 1e-15);
        assert_eq!(exact_risk_quadratic(&[0.0, 0.0], 1.0, sy2, &r, 0.0).unwrap(), 1.0);
        assert!(matches!(
            exact_risk_quadratic(&[0.0, 0.0], 1.0, 0.1, &r, 0.0),
            Err(Error::InvalidCovariance(_))
        ));
    }

    #[test]
    fn excess_equals_quadratic_form() {
        let r = [0.5, -0.2, 1.0];
        let w = [1.0, 2.0, -0.5];
        let ex = exact_excess_risk_quadratic(&w, 1.5, 3.0, &r, 0.25).unwrap();
        let ws = exact_minimizer_quadratic(1.5, 0.25, &r).unwrap();
        let d2: f64 = w.iter().zip(&ws).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!((ex - 0.5 * 1.75 * d2).abs() < 1e-12);
    }
}
