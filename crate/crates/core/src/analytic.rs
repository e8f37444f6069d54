//! Closed forms for the two-source normal example and 1-D quadrature
//! oracles for prior predictive densities. These serve as ground truth for
//! the Monte Carlo conflict machinery and as a standalone demo.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::prior::PriorSpec;
use crate::rng::Stream;
use crate::scalar::Scalar;
use crate::special::{chi2_sf, gl_integrate_checked, normal_logpdf, normal_pdf};

/// Normal density summarized by mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalDensity<F> {
    pub mean: F,
    pub var: F,
}

impl<F: Scalar> NormalDensity<F> {
    pub fn pdf(&self, x: F) -> F {
        F::of(normal_pdf(x.f64(), self.mean.f64(), self.var.f64()))
    }

    pub fn logpdf(&self, x: F) -> F {
        F::of(normal_logpdf(x.f64(), self.mean.f64(), self.var.f64()))
    }

    pub fn sample(&self, rng: &mut Stream) -> F {
        self.mean + self.var.sqrt() * rng.normal::<F>()
    }
}

/// Parameters of the two-source normal example, including the observed
/// summary values and the class ratio.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormalExampleConfig<F> {
    pub n1: usize,
    pub n2: usize,
    pub delta1: F,
    pub delta2: F,
    pub shrink_k: F,
    pub r: F,
    pub zbar_obs: F,
    pub wbar_obs: F,
}

impl<F: Scalar> NormalExampleConfig<F> {
    /// The configuration used for the worked example: `n1 = 100`,
    /// `n2 = 1000`, `delta1 = 1`, `delta2 = 100`, `k = 0.9`, `r = 1/0.9`.
    pub fn reference() -> Self {
        NormalExampleConfig {
            n1: 100,
            n2: 1000,
            delta1: F::one(),
            delta2: F::of(100.0),
            shrink_k: F::of(0.9),
            r: F::one() / F::of(0.9),
            zbar_obs: F::zero(),
            wbar_obs: F::zero(),
        }
    }

    /// Predictive center multiplier `n1 / (n1 + delta1)`.
    pub fn shrinkage(&self) -> F {
        let n1 = F::of(self.n1 as f64);
        n1 / (n1 + self.delta1)
    }

    /// Conditional predictive mean of `wbar` given the observed `zbar`.
    pub fn predictive_center(&self) -> F {
        self.shrinkage() * self.zbar_obs
    }

    fn base_var(&self) -> F {
        let n1 = F::of(self.n1 as f64);
        let n2 = F::of(self.n2 as f64);
        F::one() / (n1 + self.delta1) + F::one() / n2
    }

    /// Conditional predictive variance of `wbar` given `zbar` under the
    /// upper bound prior.
    pub fn var_upper(&self) -> F {
        self.base_var() + F::one() / self.delta2
    }

    /// Same under the lower bound prior (bias variance shrunk by `k`).
    pub fn var_lower(&self) -> F {
        self.base_var() + self.shrink_k / self.delta2
    }
}

/// Conditional predictive densities of `wbar` given the observed `zbar`
/// under the upper and lower bound priors; both are normal with the same
/// mean and different variances.
pub fn conditional_predictives<F: Scalar>(
    cfg: &NormalExampleConfig<F>,
) -> (NormalDensity<F>, NormalDensity<F>) {
    let mean = cfg.predictive_center();
    (
        NormalDensity {
            mean,
            var: cfg.var_upper(),
        },
        NormalDensity {
            mean,
            var: cfg.var_lower(),
        },
    )
}

/// One point of the calibration curve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CalibrationPoint<F> {
    pub wbar: F,
    pub p_upper_tail: F,
    pub p_lower_tail: F,
    pub p_bar: F,
}

/// The class-check upper probability from the two bound tail
/// probabilities: `P_u / (P_u + r^{-1} (1 - P_l))`.
pub fn upper_probability_from_tails<F: Scalar>(p_u: F, p_l: F, r: F) -> F {
    let denom = p_u + (F::one() - p_l) / r;
    if denom > F::zero() {
        p_u / denom
    } else {
        F::one()
    }
}

/// Exact calibration tail probabilities along a `wbar` grid: chi-square
/// survival values of the squared standardized discrepancy under both
/// bound predictives, and the class-level upper probability.
pub fn calibration_curve<F: Scalar>(
    cfg: &NormalExampleConfig<F>,
    wbar_grid: &[F],
) -> Vec<CalibrationPoint<F>> {
    let center = cfg.predictive_center();
    let vu = cfg.var_upper().f64();
    let vl = cfg.var_lower().f64();
    wbar_grid
        .iter()
        .map(|&w| {
            let d2 = {
                let d = (w - center).f64();
                d * d
            };
            let p_u = F::of(chi2_sf(d2 / vu, 1.0));
            let p_l = F::of(chi2_sf(d2 / vl, 1.0));
            CalibrationPoint {
                wbar: w,
                p_upper_tail: p_u,
                p_lower_tail: p_l,
                p_bar: upper_probability_from_tails(p_u, p_l, cfg.r),
            }
        })
        .collect()
}

/// Exact class-size statistic `r(S)` at a summary `(zbar, wbar)`: the
/// shared `phi` marginal cancels, leaving the ratio of the conditional
/// predictive densities times `r`.
pub fn normal_r_s<F: Scalar>(cfg: &NormalExampleConfig<F>, zbar: F, wbar: F) -> F {
    let center = cfg.shrinkage() * zbar;
    let num = normal_logpdf(wbar.f64(), center.f64(), cfg.var_upper().f64());
    let den = normal_logpdf(wbar.f64(), center.f64(), cfg.var_lower().f64());
    cfg.r * F::of((num - den).exp())
}

/// Exact conditional sampler for `wbar | zbar_obs` under a bound prior of
/// the example: the posterior of `phi` given `zbar` is conjugate normal,
/// the bias is a priori independent of `zbar`, and the sampling noise of
/// `wbar` is normal.
pub fn sample_wbar_given_zbar<F: Scalar>(
    cfg: &NormalExampleConfig<F>,
    eta_var: F,
    rng: &mut Stream,
) -> F {
    let n1 = F::of(cfg.n1 as f64);
    let n2 = F::of(cfg.n2 as f64);
    let post_mean = n1 * cfg.zbar_obs / (n1 + cfg.delta1);
    let post_var = F::one() / (n1 + cfg.delta1);
    let phi = post_mean + post_var.sqrt() * rng.normal::<F>();
    let eta = eta_var.sqrt() * rng.normal::<F>();
    phi + eta + (F::one() / n2).sqrt() * rng.normal::<F>()
}

/// Monte Carlo estimates of the bound tail probabilities and class upper
/// probability for the example's summary-split check, using the exact
/// conditional samplers and the squared-distance discrepancy.
pub fn mc_split_calibration<F: Scalar>(
    cfg: &NormalExampleConfig<F>,
    replicates: usize,
    rng: &Stream,
) -> (F, F, F) {
    let center = cfg.predictive_center();
    let d_obs = (cfg.wbar_obs - center) * (cfg.wbar_obs - center);
    let mut hits_u = 0usize;
    let mut hits_l = 0usize;
    let mut rng_u = rng.derive("upper");
    let mut rng_l = rng.derive("lower");
    for _ in 0..replicates {
        let wu = sample_wbar_given_zbar(cfg, F::one() / cfg.delta2, &mut rng_u);
        if (wu - center) * (wu - center) >= d_obs {
            hits_u += 1;
        }
        let wl = sample_wbar_given_zbar(cfg, cfg.shrink_k / cfg.delta2, &mut rng_l);
        if (wl - center) * (wl - center) >= d_obs {
            hits_l += 1;
        }
    }
    let p_u = F::of(hits_u as f64 / replicates as f64);
    let p_l = F::of(hits_l as f64 / replicates as f64);
    (p_u, p_l, upper_probability_from_tails(p_u, p_l, cfg.r))
}

/// Conjugate posterior of `(phi, eta)` given summaries `(zbar, wbar)` for
/// an independent normal prior with the given variances.
pub fn conjugate_posterior<F: Scalar>(
    n1: usize,
    n2: usize,
    prior_var_phi: F,
    prior_var_eta: F,
    zbar: F,
    wbar: F,
) -> (Vec<F>, [[F; 2]; 2]) {
    let n1 = F::of(n1 as f64);
    let n2 = F::of(n2 as f64);
    let q11 = F::one() / prior_var_phi + n1 + n2;
    let q12 = n2;
    let q22 = F::one() / prior_var_eta + n2;
    let b1 = n1 * zbar + n2 * wbar;
    let b2 = n2 * wbar;
    let det = q11 * q22 - q12 * q12;
    let c11 = q22 / det;
    let c12 = -q12 / det;
    let c22 = q11 / det;
    let mean = vec![c11 * b1 + c12 * b2, c12 * b1 + c22 * b2];
    (mean, [[c11, c12], [c12, c22]])
}

/// Prior predictive density of a scalar summary for a one-dimensional
/// prior: Gauss-Legendre quadrature in `log theta` over the prior's
/// truncated support, with a convergence check between 100 and 200 nodes.
pub fn quadrature_prior_predictive<F: Scalar>(
    prior: &PriorSpec<F>,
    likelihood: impl Fn(F, F) -> F,
    s: F,
) -> Result<F> {
    if prior.dim() != 1 {
        return Err(crate::CoreError::UnsupportedFamily(
            "quadrature oracle requires a one-dimensional prior".into(),
        ));
    }
    let rect = prior.support_rect()?;
    let lo = rect.lo()[0];
    if !(lo > F::zero()) {
        return Err(crate::CoreError::UnsupportedFamily(
            "quadrature oracle integrates in log theta; support must be positive".into(),
        ));
    }
    let (a, b) = (lo.ln(), rect.hi()[0].ln());
    gl_integrate_checked(
        |t: F| {
            let theta = t.exp();
            prior.pdf(&[theta]) * likelihood(theta, s) * theta
        },
        a,
        b,
        200,
        1e-6,
    )
}
