//! Prior families used by the bound densities: per-coordinate lognormal
//! products, uniform boxes, and independent normal products. Each family
//! has an exact sampler and log-density, plus a truncated support rectangle
//! for quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::Rect;
use crate::rng::Stream;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec<F> {
    /// Independent lognormal coordinates with log-scale location `mu` and
    /// log-scale standard deviation `sigma`.
    Lognormal { mu: Vec<F>, sigma: Vec<F> },
    /// Uniform density on an axis-aligned box.
    UniformBox { lo: Vec<F>, hi: Vec<F> },
    /// Independent normal coordinates with the given means and variances.
    NormalProduct { mean: Vec<F>, var: Vec<F> },
}

/// Density falls below this fraction of its maximum outside the truncated
/// support used for quadrature.
const TRUNCATION: f64 = 1e-12;

impl<F: Scalar> PriorSpec<F> {
    pub fn validate(&self) -> Result<()> {
        match self {
            PriorSpec::Lognormal { mu, sigma } => {
                if mu.is_empty() || mu.len() != sigma.len() {
                    return Err(CoreError::UnsupportedFamily(
                        "lognormal needs matching nonempty mu/sigma".into(),
                    ));
                }
                if sigma.iter().any(|s| !(*s > F::zero())) {
                    return Err(CoreError::UnsupportedFamily(
                        "lognormal sigma must be positive".into(),
                    ));
                }
            }
            PriorSpec::UniformBox { lo, hi } => {
                Rect::new(lo.clone(), hi.clone())?;
            }
            PriorSpec::NormalProduct { mean, var } => {
                if mean.is_empty() || mean.len() != var.len() {
                    return Err(CoreError::UnsupportedFamily(
                        "normal product needs matching nonempty mean/var".into(),
                    ));
                }
                if var.iter().any(|v| !(*v > F::zero())) {
                    return Err(CoreError::UnsupportedFamily(
                        "normal variances must be positive".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            PriorSpec::Lognormal { mu, .. } => mu.len(),
            PriorSpec::UniformBox { lo, .. } => lo.len(),
            PriorSpec::NormalProduct { mean, .. } => mean.len(),
        }
    }

    pub fn sample(&self, rng: &mut Stream) -> Vec<F> {
        match self {
            PriorSpec::Lognormal { mu, sigma } => mu
                .iter()
                .zip(sigma)
                .map(|(m, s)| (*m + *s * rng.normal::<F>()).exp())
                .collect(),
            PriorSpec::UniformBox { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| *a + (*b - *a) * rng.uniform::<F>())
                .collect(),
            PriorSpec::NormalProduct { mean, var } => mean
                .iter()
                .zip(var)
                .map(|(m, v)| *m + v.sqrt() * rng.normal::<F>())
                .collect(),
        }
    }

    pub fn sample_n(&self, n: usize, rng: &mut Stream) -> Vec<Vec<F>> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    pub fn log_pdf(&self, x: &[F]) -> F {
        debug_assert_eq!(x.len(), self.dim());
        let half = F::of(0.5);
        let ln2pi = F::of((2.0 * std::f64::consts::PI).ln());
        match self {
            PriorSpec::Lognormal { mu, sigma } => {
                let mut acc = F::zero();
                for ((xi, m), s) in x.iter().zip(mu).zip(sigma) {
                    if !(*xi > F::zero()) {
                        return F::neg_infinity();
                    }
                    let z = (xi.ln() - *m) / *s;
                    acc += -xi.ln() - s.ln() - half * ln2pi - half * z * z;
                }
                acc
            }
            PriorSpec::UniformBox { lo, hi } => {
                let inside = x
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(v, (a, b))| *v >= *a && *v <= *b);
                if inside {
                    -lo.iter()
                        .zip(hi)
                        .map(|(a, b)| (*b - *a).ln())
                        .fold(F::zero(), |acc, v| acc + v)
                } else {
                    F::neg_infinity()
                }
            }
            PriorSpec::NormalProduct { mean, var } => {
                let mut acc = F::zero();
                for ((xi, m), v) in x.iter().zip(mean).zip(var) {
                    let d = *xi - *m;
                    acc += -half * (ln2pi + v.ln()) - d * d / (F::of(2.0) * *v);
                }
                acc
            }
        }
    }

    pub fn pdf(&self, x: &[F]) -> F {
        self.log_pdf(x).exp()
    }

    /// Rectangle outside which the density is below `1e-12` of its maximum,
    /// used to truncate unbounded priors for quadrature.
    pub fn support_rect(&self) -> Result<Rect<F>> {
        match self {
            PriorSpec::UniformBox { lo, hi } => Rect::new(lo.clone(), hi.clone()),
            PriorSpec::NormalProduct { mean, var } => {
                // exp(-z^2/2) = 1e-12 at z = sqrt(2 ln 1e12)
                let z = F::of((2.0 * (1.0 / TRUNCATION).ln()).sqrt());
                let lo = mean
                    .iter()
                    .zip(var)
                    .map(|(m, v)| *m - z * v.sqrt())
                    .collect();
                let hi = mean
                    .iter()
                    .zip(var)
                    .map(|(m, v)| *m + z * v.sqrt())
                    .collect();
                Rect::new(lo, hi)
            }
            PriorSpec::Lognormal { mu, sigma } => {
                // in t = ln(theta): log density is -t - (t - mu)^2 / (2 s^2)
                // + const, maximized at t* = mu - s^2; solve the quadratic
                // for the 1e-12 drop.
                let mut lo = Vec::with_capacity(mu.len());
                let mut hi = Vec::with_capacity(mu.len());
                let drop = F::of((1.0 / TRUNCATION).ln());
                for (m, s) in mu.iter().zip(sigma) {
                    let s2 = *s * *s;
                    let tstar = *m - s2;
                    // -(t - tstar)^2 / (2 s^2) = -drop  (after completing the square)
                    let w = (F::of(2.0) * s2 * drop).sqrt();
                    lo.push((tstar - w).exp());
                    hi.push((tstar + w).exp());
                }
                Rect::new(lo, hi)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_box_draws_stay_inside_with_constant_logpdf() {
        let prior: PriorSpec<f64> = PriorSpec::UniformBox {
            lo: vec![11.0, -0.02, -2.0],
            hi: vec![13.0, 0.04, -0.5],
        };
        prior.validate().unwrap();
        let mut rng = Stream::new(5).derive("prior");
        let volume: f64 = 2.0 * 0.06 * 1.5;
        for _ in 0..2000 {
            let x = prior.sample(&mut rng);
            assert!(prior.support_rect().unwrap().contains(&x));
            assert_relative_eq!(prior.log_pdf(&x), -(volume.ln()), epsilon = 1e-12);
        }
        assert_eq!(prior.pdf(&[10.0, 0.0, -1.0]), 0.0);
    }

    #[test]
    fn lognormal_median_matches_analytic() {
        let prior: PriorSpec<f64> = PriorSpec::Lognormal {
            mu: vec![0.5],
            sigma: vec![0.5],
        };
        let mut rng = Stream::new(9).derive("prior");
        let mut draws: Vec<f64> = (0..100_000).map(|_| prior.sample(&mut rng)[0]).collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = draws[draws.len() / 2];
        let analytic = 0.5f64.exp();
        assert!(
            (median / analytic - 1.0).abs() < 0.02,
            "median {median} vs {analytic}"
        );
    }

    #[test]
    fn normal_product_variance() {
        // the bias coordinate of the two-source prior with large precision
        let prior: PriorSpec<f64> = PriorSpec::NormalProduct {
            mean: vec![0.0, 0.0],
            var: vec![1.0, 0.01],
        };
        let mut rng = Stream::new(2).derive("prior");
        let draws: Vec<f64> = (0..100_000).map(|_| prior.sample(&mut rng)[1]).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / draws.len() as f64;
        assert!((var / 0.01 - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn densities_integrate_to_one_on_truncated_support() {
        let priors: Vec<PriorSpec<f64>> = vec![
            PriorSpec::Lognormal {
                mu: vec![0.3125],
                sigma: vec![0.25],
            },
            PriorSpec::NormalProduct {
                mean: vec![1.0],
                var: vec![4.0],
            },
            PriorSpec::UniformBox {
                lo: vec![-1.0],
                hi: vec![3.0],
            },
        ];
        for prior in priors {
            let rect = prior.support_rect().unwrap();
            let grid = crate::grid::Grid::new(rect, vec![4097]).unwrap();
            let vals = grid.tabulate(|x| prior.pdf(x));
            assert_relative_eq!(grid.integrate(&vals), 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn lognormal_ks_against_analytic_cdf() {
        // 1-D Kolmogorov-Smirnov at the 1% level for n = 10^4
        let prior: PriorSpec<f64> = PriorSpec::Lognormal {
            mu: vec![0.5],
            sigma: vec![0.5],
        };
        let mut rng = Stream::new(31).derive("ks");
        let n = 10_000;
        let mut draws: Vec<f64> = (0..n).map(|_| prior.sample(&mut rng)[0]).collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // CDF of lognormal = Phi((ln x - mu)/sigma); use the gamma-based
        // normal CDF: Phi(z) = 1 - 0.5 erfc(z/sqrt(2)), erfc via gamma_q
        let cdf = |x: f64| -> f64 {
            let z = (x.ln() - 0.5) / 0.5;
            if z >= 0.0 {
                1.0 - 0.5 * crate::special::gamma_q(0.5, z * z / 2.0)
            } else {
                0.5 * crate::special::gamma_q(0.5, z * z / 2.0)
            }
        };
        let mut ks: f64 = 0.0;
        for (i, x) in draws.iter().enumerate() {
            let f = cdf(*x);
            let hi = (i as f64 + 1.0) / n as f64 - f;
            let lo = f - i as f64 / n as f64;
            ks = ks.max(hi.max(lo));
        }
        let crit = 1.6276 / (n as f64).sqrt(); // 1% asymptotic critical value
        assert!(ks < crit, "ks {ks} >= {crit}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad: PriorSpec<f64> = PriorSpec::Lognormal {
            mu: vec![0.0],
            sigma: vec![-1.0],
        };
        assert!(matches!(
            bad.validate(),
            Err(CoreError::UnsupportedFamily(_))
        ));
    }
}
